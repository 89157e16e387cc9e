#include "doctest.h"

#include "conley/linalg.hpp"

#include <cmath>

using namespace conley;

TEST_CASE("omega matrix and pairing") {
    const Mat J = omega_matrix(2);
    CHECK(J(0, 2) == 1.0);
    CHECK(J(2, 0) == -1.0);
    CHECK((J + J.transpose()).norm() == 0.0);
    Vec u = Vec::Zero(4), v = Vec::Zero(4);
    u[0] = 1.0;  // x_1
    v[2] = 1.0;  // y_1
    CHECK(omega_pair(u, v) == doctest::Approx(1.0));
    CHECK(omega_pair(v, u) == doctest::Approx(-1.0));
}

TEST_CASE("is_symplectic accepts rotations and rejects non-symplectic maps") {
    // planar rotation preserves area, hence is symplectic for n = 1
    const double th = 0.7;
    Mat R(2, 2);
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    CHECK(is_symplectic(R));
    Mat S = 2.0 * Mat::Identity(2, 2);  // uniform scaling is not
    CHECK_FALSE(is_symplectic(S));
    CHECK(symplectic_residual(S) == doctest::Approx(3.0));  // 4J - J

    Rng rng(11);
    for (int n = 1; n <= 3; ++n) {
        const Mat C = random_symplectic(n, rng);
        CHECK(symplectic_residual(C) < 1e-12);
    }
}

TEST_CASE("frame_norm rescales a nilpotent operator") {
    Mat A(2, 2);
    A << 0, 1, 0, 0;
    // standard frame: operator norm 1
    CHECK(frame_norm(A, SymplecticFrame(Mat::Identity(2, 2))) == doctest::Approx(1.0));
    // conformally rescaled frame shrinks it to 1e-3
    Mat C(2, 2);
    C << 1, 0, 0, 1e-3;
    CHECK(frame_norm(A, SymplecticFrame(C)) == doctest::Approx(1e-3));
    // frames must be (conformally) symplectic
    Mat bad(2, 2);
    bad << 1, 2, 2, 4;
    CHECK_THROWS_AS(SymplecticFrame{bad}, validation_error);
}

TEST_CASE("is_unipotent") {
    Mat U(2, 2);
    U << 1, 1, 0, 1;
    CHECK(is_unipotent(U));
    const double th = 0.3;
    Mat R(2, 2);
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    CHECK_FALSE(is_unipotent(R));
    Mat H(2, 2);
    H << std::exp(0.2), 0, 0, std::exp(-0.2);
    CHECK_FALSE(is_unipotent(H));

    Rng rng(5);
    for (int n = 1; n <= 3; ++n)
        for (int rep = 0; rep < 10; ++rep) CHECK(is_unipotent(random_unipotent(n, rng)));
}

static void check_squeeze(const Mat& Phi, double sigma) {
    const int n = static_cast<int>(Phi.rows()) / 2;
    const SqueezeResult r = squeeze_unipotent(Phi, sigma);
    CHECK(symplectic_residual(r.Psi) < 1e-9);
    CHECK(r.residual < sigma);

    // Psi Phi Psi^{-1} is close to I (recomputed here, not trusted from r).
    // partialPivLu: a rank-revealing solver would misread the deliberately
    // large scale spread of Psi as rank deficiency.
    const Mat conj = r.Psi * Phi * r.Psi.partialPivLu().solve(Mat::Identity(2 * n, 2 * n));
    CHECK((conj - Mat::Identity(2 * n, 2 * n)).jacobiSvd().singularValues()(0) < sigma);

    // L is Lagrangian, Phi(L) = L and Psi preserves both subspaces
    const Mat& L = r.split.L;
    const Mat& Lp = r.split.Lprime;
    REQUIRE(L.cols() == n);
    REQUIRE(Lp.cols() == n);
    const Mat J = omega_matrix(n);
    CHECK((L.transpose() * J * L).cwiseAbs().maxCoeff() < 1e-8 * L.norm() * L.norm());
    CHECK((Lp.transpose() * J * Lp).cwiseAbs().maxCoeff() < 1e-8 * Lp.norm() * Lp.norm());
    // complementarity: [L | L'] invertible
    Mat both(2 * n, 2 * n);
    both << L, Lp;
    CHECK(std::abs(both.fullPivLu().determinant()) > 1e-12);

    auto subspace_preserved = [&](const Mat& M, const Mat& B) {
        // residual of M*B against span(B)
        Eigen::ColPivHouseholderQR<Mat> qr(B);
        const Mat MB = M * B;
        const Mat proj = B * qr.solve(MB);
        return (MB - proj).cwiseAbs().maxCoeff() / std::max(1.0, MB.cwiseAbs().maxCoeff());
    };
    CHECK(subspace_preserved(Phi, L) < 1e-8);
    CHECK(subspace_preserved(r.Psi, L) < 1e-8);
    CHECK(subspace_preserved(r.Psi, Lp) < 1e-8);
}

TEST_CASE("squeeze_unipotent: planar shear") {
    Mat U(2, 2);
    U << 1, 5, 0, 1;
    check_squeeze(U, 1e-2);
    check_squeeze(U, 1e-4);
}

TEST_CASE("squeeze_unipotent: identity block plus shear (kernel has symplectic part)") {
    Mat U = Mat::Identity(4, 4);
    U(0, 2) = 3.0;  // shear pairing x_1 with y_1, identity on the (x_2, y_2) plane
    check_squeeze(U, 1e-3);
}

TEST_CASE("squeeze_unipotent: random unipotents across n and sigma") {
    // The generator magnitude shrinks with n: a generic nilpotent here has a
    // Jordan chain of length 2n, and any conjugation achieving residual sigma
    // on a chain of length p costs kappa(Psi) >= ||(Phi-I)^{p-1}||/sigma^{p-1}.
    // Keeping the chain powers small keeps kappa(Psi) inside the range where
    // the symplecticity and conjugation checks are meaningful in doubles.
    const double magnitude[] = {0.0, 0.8, 8e-3, 1e-3};
    Rng rng(2026);
    for (int n = 1; n <= 3; ++n) {
        for (double sigma : {1e-1, 1e-2, 1e-3}) {
            for (int rep = 0; rep < 5; ++rep) {
                const Mat Phi = random_unipotent(n, rng, magnitude[n]);
                check_squeeze(Phi, sigma);
            }
        }
    }
}

TEST_CASE("squeeze_unipotent rejects bad input") {
    const double th = 0.4;
    Mat R(2, 2);
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    CHECK_THROWS_AS(squeeze_unipotent(R, 1e-2), validation_error);  // not unipotent
    Mat S = 2.0 * Mat::Identity(2, 2);
    CHECK_THROWS_AS(squeeze_unipotent(S, 1e-2), validation_error);  // not symplectic
}
