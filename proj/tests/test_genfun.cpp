#include "doctest.h"

#include "conley/flow.hpp"
#include "conley/genfun.hpp"
#include "conley/linalg.hpp"
#include "conley/sympath.hpp"

#include "json.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <string>
#include <vector>

using namespace conley;

namespace {

SymplecticFrame identity_frame(int n) {
    return SymplecticFrame(Mat::Identity(2 * n, 2 * n));
}

Vec point2(double x, double y) {
    Vec z(2);
    z << x, y;
    return z;
}

// The horizontal shear (x, y) -> (x + eps y, y).  Its generating function in
// mixed coordinates is the closed form F(X, y) = -eps y^2 / 2: the implicit
// relations then give X - x = eps y and Y - y = 0.
NearIdentityMap shear_map(double eps, double radius = 1.0) {
    auto fwd = [eps](const Vec& z) { return point2(z[0] + eps * z[1], z[1]); };
    auto jac = [eps](const Vec&) {
        Mat A(2, 2);
        A << 1, eps, 0, 1;
        return A;
    };
    return make_near_identity_map(fwd, jac, Vec::Zero(2), radius);
}

// Linear map exp(J_H Q): the time-1 flow of the quadratic Hamiltonian
// z^T Q z / 2, symplectic by construction.
Mat quadratic_time_one(const Mat& Q) {
    const int n = static_cast<int>(Q.rows()) / 2;
    return Mat(Mat(field_matrix(n) * Q).exp());
}

NearIdentityMap linear_map(const Mat& Phi, double radius = 1.0) {
    auto fwd = [Phi](const Vec& z) { return Vec(Phi * z); };
    auto jac = [Phi](const Vec&) { return Phi; };
    return make_near_identity_map(fwd, jac, Vec::Zero(Phi.rows()), radius);
}

// Bivariate polynomial with exact derivatives; the round-trip tests use these
// as hand-made generating functions so both sides of the comparison are known
// in closed form.
struct Poly {
    struct Term {
        double c;
        int a, b;  // coefficient of x^a y^b
    };
    std::vector<Term> terms;

    static double ipow(double v, int k) {
        double r = 1.0;
        for (int i = 0; i < k; ++i) r *= v;
        return r;
    }

    double eval(const Vec& w) const {
        double s = 0.0;
        for (const auto& t : terms) s += t.c * ipow(w[0], t.a) * ipow(w[1], t.b);
        return s;
    }
    Vec grad(const Vec& w) const {
        Vec g = Vec::Zero(2);
        for (const auto& t : terms) {
            if (t.a > 0) g[0] += t.c * t.a * ipow(w[0], t.a - 1) * ipow(w[1], t.b);
            if (t.b > 0) g[1] += t.c * t.b * ipow(w[0], t.a) * ipow(w[1], t.b - 1);
        }
        return g;
    }
    Mat hess(const Vec& w) const {
        Mat h = Mat::Zero(2, 2);
        for (const auto& t : terms) {
            if (t.a > 1) h(0, 0) += t.c * t.a * (t.a - 1) * ipow(w[0], t.a - 2) * ipow(w[1], t.b);
            if (t.a > 0 && t.b > 0)
                h(0, 1) += t.c * t.a * t.b * ipow(w[0], t.a - 1) * ipow(w[1], t.b - 1);
            if (t.b > 1) h(1, 1) += t.c * t.b * (t.b - 1) * ipow(w[0], t.a) * ipow(w[1], t.b - 2);
        }
        h(1, 0) = h(0, 1);
        return h;
    }
};

// All monomials x^a y^b with 2 <= a + b <= 4: quadratic through quartic, no
// constant or linear part, so the origin stays fixed.
Poly random_poly(Rng& rng, double scale) {
    Poly p;
    for (int d = 2; d <= 4; ++d)
        for (int a = 0; a <= d; ++a) p.terms.push_back({rng.uniform(-scale, scale), a, d - a});
    return p;
}

GeneratingFunction direct_gf(std::function<double(const Vec&)> eval,
                             std::function<Vec(const Vec&)> grad,
                             std::function<Mat(const Vec&)> hess, int n,
                             double radius) {
    GeneratingFunction F{std::move(eval), std::move(grad), std::move(hess),
                         identity_frame(n), Vec::Zero(2 * n), radius,
                         0.0, 0.0, 0.0};
    return F;
}

}  // namespace

TEST_CASE("a shear generates its closed-form quadratic") {
    const double eps = 0.04;
    NearIdentityMap phi = shear_map(eps);
    CHECK(phi.c1_distance == doctest::Approx(eps).epsilon(1e-12));

    GeneratingFunction F = generating_function(phi, identity_frame(1));
    const Vec m = point2(0.3, -0.5);
    CHECK(F.eval(m) == doctest::Approx(-0.5 * eps * 0.25).epsilon(1e-12));
    CHECK(F.eval(Vec::Zero(2)) == 0.0);  // exact, not approximate
    CHECK((F.grad(m) - point2(0.0, -eps * -0.5)).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(F.grad(Vec::Zero(2)).lpNorm<Eigen::Infinity>() == 0.0);

    Mat H_expect(2, 2);
    H_expect << 0, 0, 0, -eps;
    CHECK((F.hess(m) - H_expect).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((F.hess(point2(0.6, 0.7)) - H_expect).lpNorm<Eigen::Infinity>() < 1e-10);

    CHECK(F.closedness_residual < 1e-9);
    // For the shear the C2 and C1 distances coincide (both equal eps).
    CHECK(F.gf2_constant == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("the identity map generates the zero function") {
    auto fwd = [](const Vec& z) { return z; };
    auto jac = [](const Vec& z) { return Mat(Mat::Identity(z.size(), z.size())); };
    NearIdentityMap id = make_near_identity_map(fwd, jac, Vec::Zero(2), 1.0);
    CHECK(id.c1_distance == 0.0);

    GeneratingFunction F = generating_function(id, identity_frame(1));
    for (const Vec& m : {point2(0.0, 0.0), point2(0.4, -0.3), point2(-0.8, 0.1)}) {
        CHECK(F.eval(m) == 0.0);
        CHECK(F.grad(m).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(F.hess(m).lpNorm<Eigen::Infinity>() < 1e-14);
    }
}

TEST_CASE("a linear map's function is its quadratic form") {
    Mat Q0(2, 2);
    Q0 << 0.05, 0.02, 0.02, -0.03;
    const Mat Phi = quadratic_time_one(Q0);
    GeneratingFunction F = generating_function(linear_map(Phi), identity_frame(1));
    const Mat Q = linear_gf(Phi, standard_splitting(1));

    // The Hessian at the fixed point equals the quadratic form of the
    // linearization -- as matrices, not merely in norm.
    CHECK((F.hess(Vec::Zero(2)) - Q).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(F.grad(Vec::Zero(2)).lpNorm<Eigen::Infinity>() == 0.0);

    // The fixed point of the map is the unique critical point of F: away
    // from the origin the gradient is pinned below by the quadratic form.
    for (double r : {0.3, 0.6, 0.9})
        for (int k = 0; k < 8; ++k) {
            const double a = 0.25 * 3.14159265358979323846 * k;
            const Vec m = r * point2(std::cos(a), std::sin(a));
            CHECK(F.grad(m).norm() > 1e-3 * r);
        }
}

TEST_CASE("linear generating forms match hand computations") {
    const auto split = standard_splitting(1);

    Mat up(2, 2);
    up << 1, 0.04, 0, 1;  // F = -0.04 y^2 / 2
    Mat Q_up(2, 2);
    Q_up << 0, 0, 0, -0.04;
    CHECK((linear_gf(up, split) - Q_up).lpNorm<Eigen::Infinity>() < 1e-12);

    Mat dn(2, 2);
    dn << 1, 0, 0.07, 1;  // F = 0.07 x^2 / 2
    Mat Q_dn(2, 2);
    Q_dn << 0.07, 0, 0, 0;
    CHECK((linear_gf(dn, split) - Q_dn).lpNorm<Eigen::Infinity>() < 1e-12);

    // Rotation by theta: Q = [tan t, (1-c)/c; (1-c)/c, tan t].
    const double th = 0.2, c = std::cos(th), s = std::sin(th);
    Mat rot(2, 2);
    rot << c, -s, s, c;
    Mat Q_rot(2, 2);
    Q_rot << s / c, (1 - c) / c, (1 - c) / c, s / c;
    CHECK((linear_gf(rot, split) - Q_rot).lpNorm<Eigen::Infinity>() < 1e-12);

    // Two independent shears in two degrees of freedom stay block-diagonal.
    Mat up4 = Mat::Identity(4, 4);
    up4(0, 2) = 0.03;
    up4(1, 3) = -0.05;
    Mat Q4 = Mat::Zero(4, 4);
    Q4(2, 2) = -0.03;
    Q4(3, 3) = 0.05;
    CHECK((linear_gf(up4, standard_splitting(2)) - Q4).lpNorm<Eigen::Infinity>() < 1e-12);

    // A conjugated map read through the conjugated splitting reproduces the
    // original adapted form.
    Rng rng(331);
    const Mat C = random_symplectic(1, rng, 0.3);
    const Mat Cinv = omega_matrix(1).transpose() * C.transpose() * omega_matrix(1);
    LagrangianSplitting tilted{C.leftCols(1), C.rightCols(1)};
    CHECK((linear_gf(Mat(C * up * Cinv), tilted) - Q_up).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("the norm of the quadratic form is a first-order distance only") {
    // For a rotation the operator norms of Q and of Phi - I agree to first
    // order in the angle and visibly differ at second order; treating the
    // equality as exact would be wrong.
    const double th = 0.1;
    Mat rot(2, 2);
    rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const Mat Q = linear_gf(rot, standard_splitting(1));
    const double qn = Eigen::JacobiSVD<Mat>(Q).singularValues()(0);
    const double dn = Eigen::JacobiSVD<Mat>(Mat(rot - Mat::Identity(2, 2)))
                          .singularValues()(0);  // 2 sin(th/2)
    CHECK(std::abs(qn - dn) < 0.01);   // first-order agreement...
    CHECK(std::abs(qn - dn) > 1e-4);   // ...but genuinely not equality
}

TEST_CASE("linear_gf rejects degenerate and invalid input") {
    const auto split = standard_splitting(1);

    // The quarter rotation maps the x-axis onto the y-axis: no generating
    // form exists in this splitting.
    Mat quarter(2, 2);
    quarter << 0, -1, 1, 0;
    CHECK_THROWS_AS(linear_gf(quarter, split), degeneracy_error);

    Mat stretch(2, 2);
    stretch << 1.1, 0, 0, 1.0;
    CHECK_THROWS_WITH_AS(linear_gf(stretch, split),
                         doctest::Contains("not symplectic"), validation_error);

    LagrangianSplitting bad{Mat::Zero(2, 1), Mat::Zero(3, 1)};
    CHECK_THROWS_AS(linear_gf(Mat(Mat::Identity(2, 2)), bad), validation_error);
}

TEST_CASE("the interpolated flow joins the identity to the map") {
    const auto split = standard_splitting(1);
    const std::vector<double> grid{0.0, 0.25, 0.5, 1.0};

    SymplecticPath still = linear_interpolated_flow(Mat(Mat::Identity(2, 2)), split, grid);
    for (const Mat& M : still.samples)
        CHECK((M - Mat::Identity(2, 2)).lpNorm<Eigen::Infinity>() < 1e-14);

    // The shear interpolates linearly: M(t) = [1, t eps; 0, 1].
    Mat up(2, 2);
    up << 1, 0.04, 0, 1;
    SymplecticPath sh = linear_interpolated_flow(up, split, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Mat expect(2, 2);
        expect << 1, grid[k] * 0.04, 0, 1;
        CHECK((sh.samples[k] - expect).lpNorm<Eigen::Infinity>() < 1e-12);
    }

    // Random near-identity maps in one and two degrees of freedom: the path
    // starts at I, lands on Phi, and stays symplectic throughout.
    Rng rng(907);
    for (int trial = 0; trial < 35; ++trial) {
        const int n = trial < 25 ? 1 : 2;
        const Mat Phi = random_unipotent(n, rng, 0.3);
        const auto spl = standard_splitting(n);
        SymplecticPath p = linear_interpolated_flow(Phi, spl, {0.0, 0.3, 0.7, 1.0});
        CHECK((p.samples.front() - Mat::Identity(2 * n, 2 * n)).lpNorm<Eigen::Infinity>() <
              1e-14);
        CHECK((p.samples.back() - Phi).lpNorm<Eigen::Infinity>() < 1e-10);
        for (const Mat& M : p.samples) CHECK(symplectic_residual(M) < 1e-8);
    }

    // The initial velocity of the interpolation is the Hamiltonian matrix
    // J_H Q of the generating form.
    Mat Q0(2, 2);
    Q0 << 0.05, 0.02, 0.02, -0.03;
    const Mat Phi = quadratic_time_one(Q0);
    const Mat XQ = field_matrix(1) * linear_gf(Phi, split);
    const double h = 1e-5;
    SymplecticPath p = linear_interpolated_flow(Phi, split, {0.0, h, 1.0});
    CHECK(((p.samples[1] - Mat::Identity(2, 2)) / h - XQ).lpNorm<Eigen::Infinity>() < 3 * h);
}

TEST_CASE("the interpolated flow validates its sample grid") {
    Mat up(2, 2);
    up << 1, 0.04, 0, 1;
    const auto split = standard_splitting(1);
    CHECK_THROWS_AS(linear_interpolated_flow(up, split, {0.5, 1.0}), validation_error);
    CHECK_THROWS_AS(linear_interpolated_flow(up, split, {0.0}), validation_error);
    CHECK_THROWS_AS(linear_interpolated_flow(up, split, {0.0, 0.5, 0.4}), validation_error);
    CHECK_THROWS_AS(linear_interpolated_flow(up, split, {0.0, 0.5, 1.5}), validation_error);
}

TEST_CASE("generated maps round-trip back to their function") {
    Rng rng(4211);
    for (int trial = 0; trial < 12; ++trial) {
        const Poly p = random_poly(rng, 0.01);
        auto gradF = [p](const Vec& w) { return p.grad(w); };
        auto hessF = [p](const Vec& w) { return p.hess(w); };
        NearIdentityMap phi =
            generated_map(gradF, hessF, identity_frame(1), Vec::Zero(2), 1.0);
        CHECK(phi.c1_distance < 0.2);

        GeneratingFunction back = generating_function(phi, identity_frame(1));
        for (int k = 0; k < 25; ++k) {
            Vec w = rng.gaussian_vec(2);
            w *= 0.7 * std::sqrt(rng.uniform()) / w.norm();
            CHECK(std::abs(back.eval(w) - p.eval(w)) < 1e-9);
            CHECK((back.grad(w) - p.grad(w)).lpNorm<Eigen::Infinity>() < 1e-9);
        }
        for (int k = 0; k < 6; ++k) {
            Vec w = rng.gaussian_vec(2);
            w *= 0.5 / w.norm();
            CHECK((back.hess(w) - p.hess(w)).lpNorm<Eigen::Infinity>() < 1e-7);
        }
    }
}

TEST_CASE("implicit solves report solvability failures") {
    // F = exp(x y) / 5 has derivatives that blow up away from the axes; far
    // outside the advertised radius the Newton solve must fail loudly rather
    // than return garbage.
    auto gradF = [](const Vec& w) {
        const double e = 0.2 * std::exp(w[0] * w[1]);
        return point2(e * w[1], e * w[0]);
    };
    auto hessF = [](const Vec& w) {
        const double e = 0.2 * std::exp(w[0] * w[1]);
        Mat h(2, 2);
        h << e * w[1] * w[1], e * (1 + w[0] * w[1]), e * (1 + w[0] * w[1]),
            e * w[0] * w[0];
        return h;
    };
    NearIdentityMap phi =
        generated_map(gradF, hessF, identity_frame(1), Vec::Zero(2), 0.5);
    CHECK_THROWS_WITH_AS(phi.forward(point2(40.0, 40.0)),
                         doctest::Contains("solvability"), numerical_error);
}

TEST_CASE("near-identity maps validate their certificate") {
    auto stretch_fwd = [](const Vec& z) { return point2(1.1 * z[0], z[1]); };
    auto stretch_jac = [](const Vec&) {
        Mat A(2, 2);
        A << 1.1, 0, 0, 1;
        return A;
    };
    CHECK_THROWS_WITH_AS(
        make_near_identity_map(stretch_fwd, stretch_jac, Vec::Zero(2), 1.0),
        doctest::Contains("not symplectic"), validation_error);

    auto drift_fwd = [](const Vec& z) { return point2(z[0] + 0.1, z[1]); };
    auto drift_jac = [](const Vec&) { return Mat(Mat::Identity(2, 2)); };
    CHECK_THROWS_WITH_AS(
        make_near_identity_map(drift_fwd, drift_jac, Vec::Zero(2), 1.0),
        doctest::Contains("fixed point"), validation_error);

    auto id_fwd = [](const Vec& z) { return z; };
    CHECK_THROWS_AS(make_near_identity_map(id_fwd, drift_jac, Vec::Zero(2), 0.0),
                    validation_error);

    // Too far from the identity for the mixed-coordinate relations.
    NearIdentityMap wild = shear_map(0.5);
    CHECK(wild.c1_distance == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_WITH_AS(generating_function(wild, identity_frame(1)),
                         doctest::Contains("0.2"), validation_error);
}

TEST_CASE("the closedness audit catches a forged certificate") {
    // Hand-built aggregate whose claimed C1 distance is a lie and whose
    // Jacobian is not symplectic: the mixed-coordinate one-form fails to
    // close and construction must refuse.
    NearIdentityMap forged;
    forged.forward = [](const Vec& z) { return point2(z[0] + 0.05 * z[0] * z[0], z[1]); };
    forged.jacobian = [](const Vec& z) {
        Mat A(2, 2);
        A << 1 + 0.1 * z[0], 0, 0, 1;
        return A;
    };
    forged.fixed_point = Vec::Zero(2);
    forged.radius = 0.5;
    forged.c1_distance = 0.05;
    CHECK_THROWS_WITH_AS(generating_function(forged, identity_frame(1)),
                         doctest::Contains("closed"), validation_error);
}

TEST_CASE("the default time profile is an admissible switch") {
    TimeProfile prof = default_time_profile();
    CHECK(prof.value(0.0) == 0.0);
    CHECK(prof.value(1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(prof.slope(0.0) == 0.0);
    CHECK(prof.slope(1.0) == 0.0);
    CHECK(prof.value(0.05) == 0.0);   // flat head
    CHECK(prof.value(0.95) == doctest::Approx(1.0).epsilon(1e-15));

    double prev = 0.0, max_slope = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double t = k / 100.0;
        const double v = prof.value(t);
        CHECK(v >= prev - 1e-15);
        prev = v;
        max_slope = std::max(max_slope, prof.slope(t));
    }
    CHECK(max_slope > 3.0);
    CHECK(max_slope < 6.0);

    for (double t : {0.15, 0.3, 0.45, 0.5, 0.62, 0.8, 0.88}) {
        const double h = 1e-6;
        const double fd = (prof.value(t + h) - prof.value(t - h)) / (2 * h);
        CHECK(std::abs(fd - prof.slope(t)) < 1e-6);
    }
}

TEST_CASE("the reconstructed Hamiltonian flows back to the shear") {
    const double eps = 0.04;
    NearIdentityMap phi = shear_map(eps);
    GeneratingFunction F = generating_function(phi, identity_frame(1));
    HamiltonianField K = hamiltonian_from_gf(F);
    K.validate();
    CHECK(K.period == doctest::Approx(1.0));

    const Vec z0 = point2(0.3, -0.4);
    FlowResult fr = flow(K, z0, 0.0, 1.0, 1.0 / 256);
    CHECK((fr.end_point - phi.forward(z0)).norm() < 1e-9);

    // The shear's function depends only on y and y is preserved by its own
    // Hamiltonian flow, so here the interpolation is constant in time.
    for (double t : {0.05, 0.37, 0.5, 0.77, 0.96})
        for (const Vec& z : {z0, point2(-0.5, 0.2)})
            CHECK(K.eval(t, z) == doctest::Approx(F.eval(z)).epsilon(1e-10));

    // The generating fixed point is a rest point of the whole isotopy.
    for (int k = 0; k < 16; ++k) CHECK(K.eval((k + 0.5) / 16, Vec::Zero(2)) == 0.0);
}

TEST_CASE("the reconstructed Hamiltonian flows back to a linear map") {
    Mat Q0(2, 2);
    Q0 << 0.05, 0.02, 0.02, -0.03;
    const Mat Phi = quadratic_time_one(Q0);
    GeneratingFunction F = generating_function(linear_map(Phi), identity_frame(1));
    HamiltonianField K = hamiltonian_from_gf(F);

    const Vec z0 = point2(0.3, -0.4);
    FlowResult fr = flow(K, z0, 0.0, 1.0, 1.0 / 256);
    CHECK((fr.end_point - Vec(Phi * z0)).norm() < 1e-8);

    // Inside the switch plateaus the field equals the function on the nose.
    CHECK(K.eval(0.03, z0) == F.eval(z0));
    CHECK(K.eval(0.98, z0) == F.eval(z0));
    CHECK(K.eval(0.5, Vec::Zero(2)) == 0.0);

    // Outside the chart ball evaluation refuses with advice instead of
    // extrapolating.
    CHECK_THROWS_WITH_AS(K.eval(0.5, point2(1.4, 0.3)),
                         doctest::Contains("rebuild the generating function"),
                         numerical_error);
}

TEST_CASE("reconstruction quality scales with the function") {
    Mat Q0(2, 2);
    Q0 << 0.05, 0.02, 0.02, -0.03;

    auto report_for = [&](double scale) {
        const Mat Phi = quadratic_time_one(Mat(scale * Q0));
        GeneratingFunction F =
            generating_function(linear_map(Phi), identity_frame(1));
        HamiltonianField K = hamiltonian_from_gf(F);
        return reconstruction_report(F, K, 5, 16, 0.5);
    };

    const ReconstructionReport full = report_for(1.0);
    const ReconstructionReport half = report_for(0.5);

    // The Hessian of K_t is controlled by the Hessian of F, with constant
    // close to one for a quadratic function.
    CHECK(full.hess_ratio > 0.8);
    CHECK(full.hess_ratio < 1.2);
    CHECK(half.hess_ratio > 0.8);
    CHECK(half.hess_ratio < 1.2);

    // The relative field distortion is of the order of the Hessian of F:
    // halving the function roughly halves the ratio.  For a linear map the
    // spatial modulus-of-continuity term vanishes, so the trend is clean.
    CHECK(full.kf1_ratio > 0.0);
    CHECK(full.kf1_ratio < 0.5);
    CHECK(half.kf1_ratio < 0.7 * full.kf1_ratio + 1e-6);
    CHECK(std::isfinite(full.kf2_ratio));
    CHECK(full.kf2_ratio < 10.0);
}

TEST_CASE("reconstruction validates profile and step") {
    GeneratingFunction F = generating_function(shear_map(0.04), identity_frame(1));

    TimeProfile ramp;
    ramp.value = [](double t) { return t; };
    ramp.slope = [](double) { return 1.0; };  // slope does not vanish at 0, 1
    CHECK_THROWS_AS(hamiltonian_from_gf(F, ramp), validation_error);

    CHECK_THROWS_AS(hamiltonian_from_gf(F, default_time_profile(), 0.0),
                    validation_error);
}

TEST_CASE("a hand-written function reconstructs its generated map") {
    // Radial bump F = 0.03 exp(-|z|^2), supplied directly as callables; the
    // time-one flow of the reconstruction must land on the map that F
    // generates through the mixed-coordinate relations.
    const double c = 0.03;
    auto eval = [c](const Vec& w) { return c * std::exp(-w.squaredNorm()); };
    auto grad = [c, eval](const Vec& w) { return Vec(-2.0 * eval(w) * w); };
    auto hess = [c, eval](const Vec& w) {
        const double e = eval(w);
        return Mat(4.0 * e * w * w.transpose() -
                   2.0 * e * Mat::Identity(w.size(), w.size()));
    };
    const double radius = 2.5;
    NearIdentityMap phi = generated_map(grad, hess, identity_frame(1), Vec::Zero(2), radius);
    GeneratingFunction F = direct_gf(eval, grad, hess, 1, radius);

    HamiltonianField K = hamiltonian_from_gf(F, default_time_profile(), 2e-3);
    for (const Vec& z : {point2(0.4, 0.1), point2(-0.6, 0.5), point2(0.0, -0.9)}) {
        FlowResult fr = flow(K, z, 0.0, 1.0, 2e-3);
        CHECK((fr.end_point - phi.forward(z)).norm() < 1e-6);
    }

    // Same map fed through the full measuring pipeline instead of trusting
    // the hand-written closures.
    GeneratingFunction measured = generating_function(phi, identity_frame(1));
    CHECK(measured.closedness_residual < 1e-7);
    HamiltonianField K2 = hamiltonian_from_gf(measured, default_time_profile(), 4e-3);
    const Vec z1 = point2(0.4, 0.1);
    FlowResult fr2 = flow(K2, z1, 0.0, 1.0, 4e-3);
    CHECK((fr2.end_point - phi.forward(z1)).norm() < 1e-5);
}

TEST_CASE("two degrees of freedom behave like one") {
    Mat Q4(4, 4);
    Q4 << 0.04, 0.01, 0.00, 0.02,
          0.01, -0.03, 0.01, 0.00,
          0.00, 0.01, 0.05, -0.01,
          0.02, 0.00, -0.01, 0.02;
    const Mat Phi = quadratic_time_one(Q4);

    GeneratingFunction F = generating_function(linear_map(Phi), identity_frame(2));
    CHECK((F.hess(Vec::Zero(4)) - linear_gf(Phi, standard_splitting(2)))
              .lpNorm<Eigen::Infinity>() < 1e-9);

    // Flow reconstruction from the exact quadratic form, which is cheaper
    // than the measured one and equal to it at the origin.
    const Mat Q = linear_gf(Phi, standard_splitting(2));
    auto eval = [Q](const Vec& w) { return 0.5 * w.dot(Q * w); };
    auto grad = [Q](const Vec& w) { return Vec(Q * w); };
    auto hess = [Q](const Vec&) { return Q; };
    HamiltonianField K = hamiltonian_from_gf(direct_gf(eval, grad, hess, 2, 1.5));
    Vec z0(4);
    z0 << 0.3, -0.2, 0.1, 0.4;
    FlowResult fr = flow(K, z0, 0.0, 1.0, 1.0 / 128);
    CHECK((fr.end_point - Vec(Phi * z0)).norm() < 1e-6);
}

TEST_CASE("the reconstructed monodromy carries the expected index") {
    // Small negative-definite form, a gentle clockwise twist: Conley-Zehnder
    // index +1 in one degree of freedom.
    const double b = 0.12;
    const Mat Q = Mat(-b * Mat::Identity(2, 2));
    auto eval = [Q](const Vec& w) { return 0.5 * w.dot(Q * w); };
    auto grad = [Q](const Vec& w) { return Vec(Q * w); };
    auto hess = [Q](const Vec&) { return Q; };
    HamiltonianField K = hamiltonian_from_gf(direct_gf(eval, grad, hess, 1, 2.0));

    FlowResult fr = flow(K, Vec::Zero(2), 0.0, 1.0, 1.0 / 256);
    CHECK(fr.end_point.lpNorm<Eigen::Infinity>() == 0.0);
    // The time-one map is the map generated by Q, which for -b I is the
    // hand-solved matrix below (not the exponential exp(J_H Q) -- the two
    // differ at second order in b).
    Mat M(2, 2);
    M << 1, b, -b, 1 - b * b;
    CHECK((fr.monodromy.samples.back() - M).lpNorm<Eigen::Infinity>() < 1e-5);
    CHECK(cz_index(fr.monodromy) == 1);
}

TEST_CASE("the JSON payload mirrors the function") {
    GeneratingFunction F = generating_function(shear_map(0.04), identity_frame(1));
    const std::string text = generating_function_json(F, 5);
    const auto j = nlohmann::json::parse(text);

    CHECK(j.at("type") == "generating-function");
    CHECK(j.at("n") == 1);
    CHECK(j.at("radius").get<double>() == doctest::Approx(1.0));
    CHECK(j.at("c1_distance").get<double>() == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(j.at("frame").size() == 2);
    CHECK(j.at("center").size() == 2);

    const auto& grid = j.at("grid");
    CHECK(grid.at("per_axis") == 5);
    const auto& points = grid.at("points");
    const auto& values = grid.at("values");
    CHECK(points.size() == values.size());
    // 5x5 lattice on [-r, r]^2 clipped to the ball |w| <= r: the origin, the
    // two half-step rings, and the four axis extremes survive.
    CHECK(points.size() == 13);
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Vec w = point2(points[k][0].get<double>(), points[k][1].get<double>());
        CHECK(values[k].get<double>() == doctest::Approx(F.eval(w)).epsilon(1e-12));
    }
}
