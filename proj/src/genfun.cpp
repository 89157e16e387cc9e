// Generating functions: the mixed-coordinate encoding of near-identity
// symplectic maps, its linear-algebra shadow on Sp(2n), and the
// reconstruction of one-periodic Hamiltonians.
//
// The implicit relations solved here (all Newton iterations, all with full
// Jacobians available in closed form):
//
//   construction:  given the mixed point (X, y), find x with phi_x(x, y) = X;
//                  then d1F = Y - y, d2F = x - X, and d2F_(X,y) follows from
//                  the block Jacobian of phi at (x, y).
//   evaluation:    given (x, y), find X with X = x - d2F(X, y); Y follows.
//   kappa^s:       given (X, Y_s), find y with y = Y_s - s d1F(X, y).
//
// The Hessian blocks deserve a note since they carry the whole symplectic
// structure: with A = dphi(x, y) in n x n blocks,
//
//   d2F = [ A21 A11^{-1}          A22 - A21 A11^{-1} A12 - I ]
//         [ A11^{-1} - I          -A11^{-1} A12              ]
//
// and this matrix is symmetric precisely when A is symplectic (the top-right
// block equals A11^{-T} exactly in that case), which is why the closedness
// audit below doubles as a symplecticity test of the input map.

#include "conley/genfun.hpp"

#include "conley/flow.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <utility>

namespace conley {

namespace {

// ----- charts ---------------------------------------------------------------

// z = p + C w; C symplectic, so C^{-1} = J^T C^T J needs no factorization.
struct Chart {
    Mat C, Cinv, CinvT;
    Vec p;
    int n;

    Chart(const Mat& basis, Vec center)
        : C(basis), p(std::move(center)), n(static_cast<int>(basis.cols()) / 2) {
        const Mat J = omega_matrix(n);
        Cinv = J.transpose() * C.transpose() * J;
        CinvT = Cinv.transpose();
    }

    Vec to(const Vec& z) const { return Cinv * (z - p); }
    Vec from(const Vec& w) const { return p + C * w; }
    bool is_identity() const {
        return (C - Mat::Identity(C.rows(), C.cols())).lpNorm<Eigen::Infinity>() == 0.0;
    }
};

double spectral_norm(const Mat& M) {
    return Eigen::JacobiSVD<Mat>(M).singularValues()(0);
}

// ----- probe sampling -------------------------------------------------------

Vec ball_point(Rng& rng, int dim, double radius) {
    Vec dir = rng.gaussian_vec(dim);
    const double len = dir.norm();
    if (len < 1e-12) dir = Vec::Unit(dim, 0); else dir /= len;
    return radius * std::pow(rng.uniform(), 1.0 / dim) * dir;
}

template <typename F>
void for_each_lattice(int dim, int per_axis, double radius, F&& fn) {
    std::vector<int> idx(dim, 0);
    Vec w(dim);
    while (true) {
        for (int i = 0; i < dim; ++i)
            w[i] = -radius + 2.0 * radius * idx[i] / (per_axis - 1);
        if (w.norm() <= radius * (1.0 + 1e-12)) fn(w);
        int k = 0;
        while (k < dim && ++idx[k] == per_axis) idx[k++] = 0;
        if (k == dim) break;
    }
}

// The probe lattice of the module: 33 points per axis through the ball for
// n <= 2, a fixed pseudorandom ball sample beyond that (full lattices in
// six or more dimensions are no longer affordable).
template <typename F>
void for_each_probe(int dim, double radius, F&& fn) {
    if (dim <= 4) {
        for_each_lattice(dim, 33, radius, fn);
    } else {
        Rng rng(791);
        for (int k = 0; k < 4096; ++k) fn(ball_point(rng, dim, radius));
    }
}

struct C1Measurement {
    double c1 = 0.0;
    double symplectic = 0.0;
};

C1Measurement measure_c1(const std::function<Vec(const Vec&)>& fwd,
                         const std::function<Mat(const Vec&)>& jac,
                         const Vec& p, int dim, double radius) {
    C1Measurement m;
    const Mat I = Mat::Identity(dim, dim);
    for_each_probe(dim, radius, [&](const Vec& w) {
        const Vec z = p + w;
        m.c1 = std::max(m.c1, (fwd(z) - z).norm());
        const Mat Jz = jac(z);
        m.c1 = std::max(m.c1, spectral_norm(Jz - I));
        m.symplectic = std::max(m.symplectic, symplectic_residual(Jz));
    });
    return m;
}

// ----- the mixed-coordinate solve -------------------------------------------

// The map seen in chart coordinates.
struct ChartMap {
    std::function<Vec(const Vec&)> fwd;
    std::function<Mat(const Vec&)> jac;
    int n = 1;
};

struct MixedSolve {
    Vec x;      // old x with phi_x(x, y) = X
    Vec image;  // phi(x, y)
    Mat A;      // dphi(x, y)
};

MixedSolve solve_mixed(const ChartMap& phi, const Vec& u, const Vec& v) {
    const int n = phi.n;
    Vec w(2 * n);
    w.head(n) = u;
    w.tail(n) = v;
    const double tol =
        1e-12 * std::max(1.0, std::max(u.lpNorm<Eigen::Infinity>(),
                                       v.lpNorm<Eigen::Infinity>()));
    for (int iter = 0; iter < 40 && w.allFinite(); ++iter) {
        const Vec image = phi.fwd(w);
        if (!image.allFinite()) break;
        const Vec r = image.head(n) - u;
        const Mat A = phi.jac(w);
        if (r.lpNorm<Eigen::Infinity>() <= tol) return {w.head(n), image, A};
        w.head(n) -= A.topLeftCorner(n, n).partialPivLu().solve(r);
    }
    std::ostringstream os;
    os << "generating function: the implicit solve for the old x did not "
          "converge at the mixed point (X, y) = ("
       << u.transpose() << " | " << v.transpose()
       << "); the map is too far from the identity there (solvability)";
    throw numerical_error(os.str());
}

Vec grad_from_solve(const MixedSolve& s, const Vec& u, const Vec& v) {
    const int n = static_cast<int>(u.size());
    Vec g(2 * n);
    g.head(n) = s.image.tail(n) - v;  // d1F = Y - y
    g.tail(n) = s.x - u;              // d2F = x - X
    return g;
}

Mat hess_from_jac(const Mat& A, int n) {
    const auto lu = A.topLeftCorner(n, n).partialPivLu();
    const Mat A11inv = lu.solve(Mat::Identity(n, n));
    const Mat A11invA12 = lu.solve(A.topRightCorner(n, n));
    Mat H(2 * n, 2 * n);
    H.topLeftCorner(n, n) = A.bottomLeftCorner(n, n) * A11inv;
    H.topRightCorner(n, n) = A.bottomRightCorner(n, n) -
                             A.bottomLeftCorner(n, n) * A11invA12 -
                             Mat::Identity(n, n);
    H.bottomLeftCorner(n, n) = A11inv - Mat::Identity(n, n);
    H.bottomRightCorner(n, n) = -A11invA12;
    return 0.5 * (H + H.transpose());
}

Vec gf_grad(const ChartMap& phi, const Vec& m) {
    const int n = phi.n;
    const Vec u = m.head(n), v = m.tail(n);
    return grad_from_solve(solve_mixed(phi, u, v), u, v);
}

// F as the radial line integral of dF from the origin; composite Simpson
// keeps the quadrature error far below the Newton tolerances for the smooth
// maps this module accepts.  F(0) = 0 by construction, never by subtraction.
double gf_eval(const ChartMap& phi, const Vec& m) {
    if (m.norm() == 0.0) return 0.0;
    const int segs = 64;
    auto g = [&](double s) { return gf_grad(phi, Vec(s * m)).dot(m); };
    double sum = g(0.0) + g(1.0);
    for (int k = 1; k < segs; ++k) sum += (k % 2 ? 4.0 : 2.0) * g(k / static_cast<double>(segs));
    return sum / (3.0 * segs);
}

// Loop integrals of dF around random triangles; nonzero values mean the
// mixed-coordinate form is not closed, i.e. the input map is not symplectic.
// Triangles stay inside the half ball and use 32 Simpson panels per edge so
// the quadrature error sits well under the 1e-6 rejection threshold.
double closedness_audit(const ChartMap& phi, double radius) {
    Rng rng(9157);
    const int dim = 2 * phi.n;
    auto edge = [&](const Vec& a, const Vec& b) {
        const Vec d = b - a;
        const int segs = 32;
        auto g = [&](double s) { return gf_grad(phi, Vec(a + s * d)).dot(d); };
        double sum = g(0.0) + g(1.0);
        for (int k = 1; k < segs; ++k) sum += (k % 2 ? 4.0 : 2.0) * g(k / static_cast<double>(segs));
        return sum / (3.0 * segs);
    };
    double worst = 0.0;
    for (int tri = 0; tri < 12; ++tri) {
        const Vec a = ball_point(rng, dim, 0.5 * radius);
        const Vec b = ball_point(rng, dim, 0.5 * radius);
        const Vec c = ball_point(rng, dim, 0.5 * radius);
        worst = std::max(worst, std::abs(edge(a, b) + edge(b, c) + edge(c, a)));
    }
    return worst;
}

}  // namespace

// ----- NearIdentityMap ------------------------------------------------------

void NearIdentityMap::validate() const {
    require(static_cast<bool>(forward) && static_cast<bool>(jacobian),
            "near-identity map: forward and jacobian callables are required");
    require(fixed_point.size() >= 2 && fixed_point.size() % 2 == 0,
            "near-identity map: fixed point must live in R^{2n}");
    require(radius > 0.0, "near-identity map: radius must be positive");
    require(std::isfinite(c1_distance) && c1_distance >= 0.0,
            "near-identity map: c1_distance must be finite and nonnegative");
}

NearIdentityMap make_near_identity_map(std::function<Vec(const Vec&)> forward,
                                       std::function<Mat(const Vec&)> jacobian,
                                       const Vec& fixed_point, double radius) {
    require(static_cast<bool>(forward) && static_cast<bool>(jacobian),
            "near-identity map: forward and jacobian callables are required");
    require(fixed_point.size() >= 2 && fixed_point.size() % 2 == 0,
            "near-identity map: fixed point must live in R^{2n}");
    require(radius > 0.0, "near-identity map: radius must be positive");

    const Vec moved = forward(fixed_point) - fixed_point;
    const double drift = moved.lpNorm<Eigen::Infinity>();
    require(drift <= 1e-9 * std::max(1.0, fixed_point.lpNorm<Eigen::Infinity>()),
            "near-identity map: the claimed fixed point moves by " +
                std::to_string(drift));

    const auto m = measure_c1(forward, jacobian, fixed_point,
                              static_cast<int>(fixed_point.size()), radius);
    if (m.symplectic > 1e-6) {
        std::ostringstream os;
        os << "near-identity map: jacobian is not symplectic on the probe "
              "lattice (worst residual "
           << m.symplectic << " > 1e-6)";
        throw validation_error(os.str());
    }
    NearIdentityMap out;
    out.forward = std::move(forward);
    out.jacobian = std::move(jacobian);
    out.fixed_point = fixed_point;
    out.radius = radius;
    out.c1_distance = m.c1;
    return out;
}

// ----- generating_function --------------------------------------------------

GeneratingFunction generating_function(const NearIdentityMap& phi,
                                       const SymplecticFrame& frame) {
    phi.validate();
    require(frame.n() == phi.n(),
            "generating_function: frame and map dimensions differ");
    {
        std::ostringstream os;
        os << "generating_function: ||phi - id||_C1 = " << phi.c1_distance
           << " is not below the solvability threshold 0.2";
        require(phi.c1_distance < 0.2, os.str());
    }

    const auto chart = std::make_shared<Chart>(frame.C, phi.fixed_point);
    const int n = phi.n();
    const double radius = phi.radius / spectral_norm(frame.C);

    ChartMap cm;
    cm.n = n;
    cm.fwd = [chart, f = phi.forward](const Vec& w) { return chart->to(f(chart->from(w))); };
    cm.jac = [chart, j = phi.jacobian](const Vec& w) {
        return Mat(chart->Cinv * j(chart->from(w)) * chart->C);
    };

    // Distances are frame-dependent, so unless the chart is trivial the C1
    // measurement has to be redone in chart coordinates before gating.
    double c1 = phi.c1_distance;
    if (!chart->is_identity()) {
        c1 = measure_c1(cm.fwd, cm.jac, Vec::Zero(2 * n), 2 * n, radius).c1;
        std::ostringstream os;
        os << "generating_function: ||phi - id||_C1 = " << c1
           << " in the chart of the given frame is not below the solvability "
              "threshold 0.2";
        require(c1 < 0.2, os.str());
    }

    const double residual = closedness_audit(cm, radius);
    if (residual > 1e-6) {
        std::ostringstream os;
        os << "generating_function: the mixed-coordinate form is not closed "
              "(worst triangle loop integral "
           << residual << " > 1e-6); the input map is not symplectic";
        throw validation_error(os.str());
    }

    // ||F||_C2 for the recorded constant: gradient over the full probe
    // lattice, |F| and the Hessian over a coarse sublattice (each |F| value
    // costs a radial quadrature).
    double c2 = 0.0;
    for_each_probe(2 * n, radius, [&](const Vec& m) {
        const Vec u = m.head(n), v = m.tail(n);
        c2 = std::max(c2, grad_from_solve(solve_mixed(cm, u, v), u, v).norm());
    });
    const int coarse = (n == 1) ? 9 : 5;
    for_each_lattice(2 * n, coarse, radius, [&](const Vec& m) {
        const Vec u = m.head(n), v = m.tail(n);
        const MixedSolve s = solve_mixed(cm, u, v);
        c2 = std::max(c2, hess_from_jac(s.A, n).norm());  // Frobenius
        c2 = std::max(c2, std::abs(gf_eval(cm, m)));
    });

    GeneratingFunction out{
        [cm](const Vec& m) { return gf_eval(cm, m); },
        [cm](const Vec& m) { return gf_grad(cm, m); },
        [cm, n](const Vec& m) {
            return hess_from_jac(
                solve_mixed(cm, m.head(n), m.tail(n)).A, n);
        },
        frame,
        phi.fixed_point,
        radius,
        c1,
        residual,
        (c1 > 0.0) ? c2 / c1 : 0.0,
    };
    return out;
}

// ----- generated_map --------------------------------------------------------

NearIdentityMap generated_map(std::function<Vec(const Vec&)> gradF,
                              std::function<Mat(const Vec&)> hessF,
                              const SymplecticFrame& frame, const Vec& center,
                              double radius) {
    require(static_cast<bool>(gradF) && static_cast<bool>(hessF),
            "generated_map: gradient and Hessian callables are required");
    require(center.size() == 2 * frame.n(),
            "generated_map: center and frame dimensions differ");
    const auto chart = std::make_shared<Chart>(frame.C, center);
    const int n = frame.n();

    // Solve X = x - d2F(X, y), started at X = x; the Jacobian of the residual
    // is I + G_vu with G = d2F(X, y).
    auto solve_forward = [gradF, hessF, n](const Vec& w) {
        const Vec x = w.head(n), y = w.tail(n);
        Vec m(2 * n);
        m.head(n) = x;
        m.tail(n) = y;
        const double tol = 1e-12 * std::max(1.0, w.lpNorm<Eigen::Infinity>());
        for (int iter = 0; iter < 40 && m.allFinite(); ++iter) {
            const Vec g = gradF(m);
            if (!g.allFinite()) break;
            const Vec r = m.head(n) - x + g.tail(n);
            if (r.lpNorm<Eigen::Infinity>() <= tol) return m;
            const Mat G = hessF(m);
            m.head(n) -=
                (Mat::Identity(n, n) + G.bottomLeftCorner(n, n))
                    .partialPivLu()
                    .solve(r);
        }
        std::ostringstream os;
        os << "generated_map: the implicit solve for the new x did not "
              "converge at (x, y) = ("
           << w.transpose() << ") (solvability)";
        throw numerical_error(os.str());
    };

    auto forward = [chart, gradF, solve_forward, n](const Vec& z) {
        const Vec w = chart->to(z);
        const Vec m = solve_forward(w);
        Vec out(2 * n);
        out.head(n) = m.head(n);
        out.tail(n) = w.tail(n) + gradF(m).head(n);
        return chart->from(out);
    };
    auto jacobian = [chart, hessF, solve_forward, n](const Vec& z) {
        const Vec m = solve_forward(chart->to(z));
        const Mat G = hessF(m);
        const auto lu =
            (Mat::Identity(n, n) + G.bottomLeftCorner(n, n)).partialPivLu();
        const Mat B11 = lu.solve(Mat::Identity(n, n));
        const Mat B12 = -lu.solve(G.bottomRightCorner(n, n));
        Mat D(2 * n, 2 * n);
        D.topLeftCorner(n, n) = B11;
        D.topRightCorner(n, n) = B12;
        D.bottomLeftCorner(n, n) = G.topLeftCorner(n, n) * B11;
        D.bottomRightCorner(n, n) = Mat::Identity(n, n) +
                                    G.topRightCorner(n, n) +
                                    G.topLeftCorner(n, n) * B12;
        return Mat(chart->C * D * chart->Cinv);
    };
    return make_near_identity_map(std::move(forward), std::move(jacobian),
                                  center, radius);
}

NearIdentityMap generated_map(const GeneratingFunction& F) {
    return generated_map(F.grad, F.hess, F.frame, F.center, F.radius);
}

// ----- linear generating forms ----------------------------------------------

LagrangianSplitting standard_splitting(int n) {
    require(n >= 1, "standard_splitting: n must be positive");
    const Mat I = Mat::Identity(2 * n, 2 * n);
    return {I.leftCols(n), I.rightCols(n)};
}

namespace {

struct AdaptedForm {
    Mat XQ;  // in adapted coordinates
    Mat C, Cinv;
    int n;
};

AdaptedForm adapted_xq(const Mat& Phi, const LagrangianSplitting& split) {
    require(Phi.rows() == Phi.cols() && Phi.rows() >= 2 && Phi.rows() % 2 == 0,
            "linear_gf: Phi must be a 2n x 2n matrix");
    const int twoN = static_cast<int>(Phi.rows());
    const int n = twoN / 2;
    require(split.L.rows() == twoN && split.Lprime.rows() == twoN &&
                split.L.cols() == n && split.Lprime.cols() == n,
            "linear_gf: splitting blocks must be 2n x n");
    require(symplectic_residual(Phi) <= 1e-8,
            "linear_gf: Phi is not symplectic");

    Mat C(twoN, twoN);
    C << split.L, split.Lprime;
    require(symplectic_residual(C) <= 1e-8,
            "linear_gf: [L | L'] is not a symplectic basis");
    const Mat J = omega_matrix(n);
    const Mat Cinv = J.transpose() * C.transpose() * J;
    const Mat Ph = Cinv * Phi * C;

    Mat P = Ph;
    P.bottomLeftCorner(n, n).setZero();
    P.bottomRightCorner(n, n) = Mat::Identity(n, n);
    const Eigen::JacobiSVD<Mat> svd(P);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 1e-12 * std::max(1.0, smax)) {
        std::ostringstream os;
        os << "linear_gf: P(Phi) is singular (smallest singular value " << smin
           << "); Phi is too far from the identity for a generating form in "
              "this splitting";
        throw degeneracy_error(os.str(), smin);
    }
    const Mat XQ = P.transpose()
                       .partialPivLu()
                       .solve((Ph - Mat::Identity(twoN, twoN)).transpose())
                       .transpose();
    return {XQ, C, Cinv, n};
}

}  // namespace

Mat linear_gf(const Mat& Phi, const LagrangianSplitting& split) {
    const AdaptedForm a = adapted_xq(Phi, split);
    const Mat Q = -field_matrix(a.n) * a.XQ;
    const double asym = (Q - Q.transpose()).lpNorm<Eigen::Infinity>();
    if (asym > 1e-8 * std::max(1.0, Q.lpNorm<Eigen::Infinity>())) {
        std::ostringstream os;
        os << "linear_gf: the recovered form is not symmetric (residual "
           << asym << "); Phi is not symplectic to working precision";
        throw validation_error(os.str());
    }
    return 0.5 * (Q + Q.transpose());
}

SymplecticPath linear_interpolated_flow(const Mat& Phi,
                                        const LagrangianSplitting& split,
                                        const std::vector<double>& t_samples) {
    const AdaptedForm a = adapted_xq(Phi, split);
    const int twoN = 2 * a.n;
    require(t_samples.size() >= 2,
            "linear_interpolated_flow: need at least two time samples");
    require(t_samples.front() == 0.0,
            "linear_interpolated_flow: the sample grid must start at t = 0");
    for (std::size_t k = 1; k < t_samples.size(); ++k)
        require(t_samples[k] > t_samples[k - 1],
                "linear_interpolated_flow: times must increase strictly");
    require(t_samples.back() <= 1.0 + 1e-12,
            "linear_interpolated_flow: the interpolation lives on [0, 1]");

    Mat XEx = Mat::Zero(twoN, twoN), XEy = Mat::Zero(twoN, twoN);
    XEx.leftCols(a.n) = a.XQ.leftCols(a.n);
    XEy.rightCols(a.n) = a.XQ.rightCols(a.n);
    const Mat I = Mat::Identity(twoN, twoN);

    SymplecticPath path;
    path.times = t_samples;
    path.samples.reserve(t_samples.size());
    for (const double t : t_samples) {
        // M = I + t XQ (Ex M + Ey) is affine in M: one linear solve per t.
        const Eigen::FullPivLU<Mat> lu(I - t * XEx);
        if (!lu.isInvertible()) {
            std::ostringstream os;
            os << "linear_interpolated_flow: the interpolation matrix is "
                  "singular at t = "
               << t << " (solvability)";
            throw numerical_error(os.str());
        }
        const Mat M = lu.solve(I + t * XEy);
        const double resid = symplectic_residual(M);
        if (resid > 1e-8) {
            std::ostringstream os;
            os << "linear_interpolated_flow: sample at t = " << t
               << " fails the symplectic check (residual " << resid << ")";
            throw numerical_error(os.str());
        }
        path.samples.push_back(a.C * M * a.Cinv);
    }
    path.is_loop = false;
    path.period = t_samples.back();
    path.validate();
    return path;
}

// ----- time profile ---------------------------------------------------------

TimeProfile default_time_profile() {
    auto s = [](double u) { return u * u * u * (10.0 + u * (6.0 * u - 15.0)); };
    auto ds = [](double u) { return 30.0 * u * u * (1.0 - u) * (1.0 - u); };
    const double lo = 0.1, hi = 0.9, width = hi - lo;
    TimeProfile prof;
    prof.value = [=](double t) {
        if (t <= lo) return 0.0;
        if (t >= hi) return 1.0;
        const double u = (t - lo) / width;
        return s(s(u));
    };
    prof.slope = [=](double t) {
        if (t <= lo || t >= hi) return 0.0;
        const double u = (t - lo) / width;
        return ds(s(u)) * ds(u) / width;
    };
    return prof;
}

// ----- hamiltonian_from_gf --------------------------------------------------

namespace {

struct KCore {
    GeneratingFunction F;
    TimeProfile prof;
    double flow_step;
    Chart chart;
    HamiltonianField f_field;  // F as an autonomous Hamiltonian, chart coords
    int n;
    double radius;
};

void chart_guard(const KCore& c, const Vec& w, const char* leg) {
    const double r = w.norm();
    // A sliver of slack so finite-difference probes at the boundary survive.
    if (r > c.radius * 1.001) {
        std::ostringstream os;
        os << "hamiltonian_from_gf: " << leg << " left the chart ball (|w| = "
           << r << ", radius " << c.radius
           << "); rebuild the generating function with radius <= "
           << 0.9 * c.radius * (c.radius / r) << " and retry";
        throw numerical_error(os.str());
    }
}

// kappa^s: given (X, Y_s) find y with y = Y_s - s d1F(X, y).  Optionally
// returns the blocks of d kappa^s: y_a = -(I + s G_uv)^{-1} s G_uu and
// y_c = (I + s G_uv)^{-1}, where G = d2F(X, y).
Vec kappa_solve(const KCore& c, double s, const Vec& w1, Mat* ya, Mat* yc) {
    const int n = c.n;
    Vec m(2 * n);
    m.head(n) = w1.head(n);
    m.tail(n) = w1.tail(n);
    const Vec target = w1.tail(n);
    const double tol = 1e-12 * std::max(1.0, w1.lpNorm<Eigen::Infinity>());
    for (int iter = 0; iter < 40 && m.allFinite(); ++iter) {
        const Vec g = c.F.grad(m);
        if (!g.allFinite()) break;
        const Vec r = m.tail(n) + s * g.head(n) - target;
        if (r.lpNorm<Eigen::Infinity>() <= tol) {
            if (ya != nullptr) {
                const Mat G = c.F.hess(m);
                const auto lu = (Mat::Identity(n, n) + s * G.topRightCorner(n, n))
                                    .partialPivLu();
                *yc = lu.solve(Mat::Identity(n, n));
                *ya = -lu.solve(Mat(s * G.topLeftCorner(n, n)));
            }
            return m;
        }
        const Mat G = c.F.hess(m);
        m.tail(n) -= (Mat::Identity(n, n) + s * G.topRightCorner(n, n))
                         .partialPivLu()
                         .solve(r);
    }
    throw numerical_error(
        "hamiltonian_from_gf: the mixed-coordinate solve for kappa did not "
        "converge; shrink the chart radius or the map");
}

struct Transported {
    Vec end;
    Mat M;
};

Transported flow_to(const KCore& c, double s, const Vec& w) {
    if (std::abs(s) < 1e-14) return {w, Mat::Identity(2 * c.n, 2 * c.n)};
    const int ns = std::max(1, static_cast<int>(std::ceil(std::abs(s) / c.flow_step - 1e-9)));
    const FlowResult r = flow(c.f_field, w, 0.0, s, std::abs(s) / ns);
    return {r.end_point, r.monodromy.samples.back()};
}

double khat_eval(const KCore& c, double t, const Vec& w) {
    const double tw = t - std::floor(t);
    const double lamp = c.prof.slope(tw);
    chart_guard(c, w, "the evaluation point");
    double v = (1.0 - lamp) * c.F.eval(w);
    if (lamp != 0.0) {
        const double lam = c.prof.value(tw);
        const Transported tr = flow_to(c, lam - tw, w);
        chart_guard(c, tr.end, "the transport flow");
        const Vec m = kappa_solve(c, lam, tr.end, nullptr, nullptr);
        chart_guard(c, m, "kappa");
        v += lamp * c.F.eval(m);
    }
    return v;
}

Vec khat_grad(const KCore& c, double t, const Vec& w) {
    const int n = c.n;
    const double tw = t - std::floor(t);
    const double lamp = c.prof.slope(tw);
    chart_guard(c, w, "the evaluation point");
    Vec g = (1.0 - lamp) * c.F.grad(w);
    if (lamp != 0.0) {
        const double lam = c.prof.value(tw);
        const Transported tr = flow_to(c, lam - tw, w);
        chart_guard(c, tr.end, "the transport flow");
        Mat ya, yc;
        const Vec m = kappa_solve(c, lam, tr.end, &ya, &yc);
        chart_guard(c, m, "kappa");
        const Vec gm = c.F.grad(m);
        Vec gk(2 * n);
        gk.head(n) = gm.head(n) + ya.transpose() * gm.tail(n);
        gk.tail(n) = yc.transpose() * gm.tail(n);
        g += lamp * tr.M.transpose() * gk;
    }
    return g;
}

Mat khat_hess(const KCore& c, double t, const Vec& w) {
    const int dim = 2 * c.n;
    Mat H(dim, dim);
    Vec probe = w;
    for (int j = 0; j < dim; ++j) {
        const double delta = 1e-5 * std::max(1.0, std::abs(w[j]));
        probe[j] = w[j] + delta;
        const Vec gp = khat_grad(c, t, probe);
        probe[j] = w[j] - delta;
        const Vec gm = khat_grad(c, t, probe);
        probe[j] = w[j];
        H.col(j) = (gp - gm) / (2.0 * delta);
    }
    return 0.5 * (H + H.transpose());
}

}  // namespace

HamiltonianField hamiltonian_from_gf(const GeneratingFunction& F,
                                     const TimeProfile& profile,
                                     double flow_step) {
    require(static_cast<bool>(F.eval) && static_cast<bool>(F.grad) &&
                static_cast<bool>(F.hess),
            "hamiltonian_from_gf: the generating function needs eval, grad "
            "and hess");
    require(F.radius > 0.0, "hamiltonian_from_gf: radius must be positive");
    require(flow_step > 0.0, "hamiltonian_from_gf: flow_step must be positive");
    require(static_cast<bool>(profile.value) && static_cast<bool>(profile.slope),
            "hamiltonian_from_gf: the time profile needs value and slope");
    require(std::abs(profile.value(0.0)) <= 1e-12 &&
                std::abs(profile.value(1.0) - 1.0) <= 1e-12 &&
                std::abs(profile.slope(0.0)) <= 1e-12 &&
                std::abs(profile.slope(1.0)) <= 1e-12,
            "hamiltonian_from_gf: the time profile must run 0 -> 1 with flat "
            "endpoints");

    const int n = F.n();
    auto core = std::make_shared<KCore>(KCore{
        F,
        profile,
        flow_step,
        Chart(F.frame.C, F.center),
        HamiltonianField{},
        n,
        F.radius,
    });
    // Capture the callables by value, not the core itself, so the field held
    // inside the core does not keep the core alive in a cycle.
    core->f_field.eval = [g = F.eval](double, const Vec& w) { return g(w); };
    core->f_field.grad = [g = F.grad](double, const Vec& w) { return g(w); };
    core->f_field.hess = [g = F.hess](double, const Vec& w) { return g(w); };
    core->f_field.period = 1.0;
    core->f_field.phase_space = PhaseSpace::euclidean(n);
    core->f_field.autonomous = true;

    HamiltonianField K;
    K.eval = [core](double t, const Vec& z) {
        return khat_eval(*core, t, core->chart.to(z));
    };
    K.grad = [core](double t, const Vec& z) {
        return Vec(core->chart.CinvT * khat_grad(*core, t, core->chart.to(z)));
    };
    K.hess = [core](double t, const Vec& z) {
        return Mat(core->chart.CinvT * khat_hess(*core, t, core->chart.to(z)) *
                   core->chart.Cinv);
    };
    K.period = 1.0;
    K.phase_space = PhaseSpace::euclidean(n);
    K.autonomous = false;
    return K;
}

// ----- diagnostics ----------------------------------------------------------

ReconstructionReport reconstruction_report(const GeneratingFunction& F,
                                           const HamiltonianField& K,
                                           int time_samples, int space_samples,
                                           double radius_fraction) {
    require(time_samples >= 2 && space_samples >= 1,
            "reconstruction_report: need at least two time and one space sample");
    require(radius_fraction > 0.0 && radius_fraction <= 1.0,
            "reconstruction_report: radius_fraction must lie in (0, 1]");
    const int n = F.n();
    require(K.n() == n, "reconstruction_report: K and F dimensions differ");

    const Chart chart(F.frame.C, F.center);
    const Mat JH = field_matrix(n);
    const double denom_h =
        spectral_norm(F.hess(Vec::Zero(2 * n)));

    ReconstructionReport rep;
    const double dt = 1e-4;
    Rng rng(618);
    std::vector<Vec> pts;
    pts.reserve(space_samples);
    for (int k = 0; k < space_samples; ++k)
        pts.push_back(ball_point(rng, 2 * n, radius_fraction * F.radius));

    for (int ti = 0; ti < time_samples; ++ti) {
        const double t = (ti + 0.5) / time_samples;
        if (denom_h >= 1e-14) {
            const Mat Hk =
                chart.C.transpose() * K.hess(t, F.center) * chart.C;
            rep.hess_ratio =
                std::max(rep.hess_ratio, spectral_norm(Hk) / denom_h);
        }
        for (const Vec& w : pts) {
            const Vec XF = JH * F.grad(w);
            const double nf = XF.norm();
            if (nf < 1e-12) continue;
            const Vec z = chart.from(w);
            const Vec XK = JH * (chart.C.transpose() * K.grad(t, z));
            rep.kf1_ratio = std::max(rep.kf1_ratio, (XK - XF).norm() / nf);
            const Vec gp = chart.C.transpose() * K.grad(t + dt, z);
            const Vec gm = chart.C.transpose() * K.grad(t - dt, z);
            const Vec Xdot = JH * ((gp - gm) / (2.0 * dt));
            rep.kf2_ratio = std::max(rep.kf2_ratio, Xdot.norm() / nf);
        }
    }
    return rep;
}

// ----- JSON export ----------------------------------------------------------

std::string generating_function_json(const GeneratingFunction& F,
                                     int per_axis) {
    require(per_axis >= 2, "generating_function_json: per_axis must be >= 2");
    const int n = F.n();
    nlohmann::json j;
    j["type"] = "generating-function";
    j["n"] = n;
    j["radius"] = F.radius;
    j["c1_distance"] = F.c1_distance;
    j["closedness_residual"] = F.closedness_residual;
    j["gf2_constant"] = F.gf2_constant;
    j["center"] = std::vector<double>(F.center.data(),
                                      F.center.data() + F.center.size());
    auto rows = nlohmann::json::array();
    for (int r = 0; r < F.frame.C.rows(); ++r) {
        auto row = nlohmann::json::array();
        for (int c = 0; c < F.frame.C.cols(); ++c) row.push_back(F.frame.C(r, c));
        rows.push_back(row);
    }
    j["frame"] = rows;
    j["grid"]["per_axis"] = per_axis;
    auto points = nlohmann::json::array();
    auto values = nlohmann::json::array();
    for_each_lattice(2 * n, per_axis, F.radius, [&](const Vec& w) {
        points.push_back(std::vector<double>(w.data(), w.data() + w.size()));
        values.push_back(F.eval(w));
    });
    j["grid"]["points"] = std::move(points);
    j["grid"]["values"] = std::move(values);
    return j.dump(2);
}

}  // namespace conley
