// conley-lab: symplectic linear algebra (see include/conley/linalg.hpp for
// the sign conventions).
#include "conley/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace conley {

Mat omega_matrix(int n) {
    Mat J = Mat::Zero(2 * n, 2 * n);
    J.block(0, n, n, n) = Mat::Identity(n, n);
    J.block(n, 0, n, n) = -Mat::Identity(n, n);
    return J;
}

Mat field_matrix(int n) { return -omega_matrix(n); }

double omega_pair(const Vec& u, const Vec& v) {
    const int n = static_cast<int>(u.size()) / 2;
    // u^T J v without forming J
    return u.head(n).dot(v.tail(n)) - u.tail(n).dot(v.head(n));
}

double symplectic_residual(const Mat& M) {
    require(M.rows() == M.cols() && M.rows() % 2 == 0,
            "symplectic_residual: matrix must be square of even size");
    const int n = static_cast<int>(M.rows()) / 2;
    const Mat J = omega_matrix(n);
    return (M.transpose() * J * M - J).cwiseAbs().maxCoeff();
}

bool is_symplectic(const Mat& M, double tol) {
    return symplectic_residual(M) <= tol;
}

SymplecticFrame::SymplecticFrame(Mat basis, double tol) : C(std::move(basis)) {
    require(C.rows() == C.cols() && C.rows() % 2 == 0,
            "SymplecticFrame: basis must be square of even size");
    const int n = static_cast<int>(C.rows()) / 2;
    const Mat J = omega_matrix(n);
    const Mat G = C.transpose() * J * C;
    // Accept conformally symplectic frames C^T J C = c J (c > 0): the pure
    // diagonal rescalings used to shrink nilpotent operators are of this kind.
    const double c = G(0, n);
    require(c > tol, "SymplecticFrame: frame is degenerate or orientation-reversing");
    const double dev = (G - c * J).cwiseAbs().maxCoeff();
    require(dev <= tol * std::max(1.0, std::abs(c)) * std::max(1.0, C.cwiseAbs().maxCoeff()),
            "SymplecticFrame: basis is not (conformally) symplectic");
}

double frame_norm(const Mat& A, const SymplecticFrame& frame) {
    require(A.rows() == frame.C.rows() && A.cols() == frame.C.cols(),
            "frame_norm: dimension mismatch between operator and frame");
    const Mat B = frame.C.fullPivLu().solve(A * frame.C);
    return B.jacobiSvd().singularValues()(0);
}

bool is_unipotent(const Mat& M, double tol) {
    require(M.rows() == M.cols() && M.rows() % 2 == 0,
            "is_unipotent: matrix must be square of even size");
    // "All eigenvalues equal 1" is checked through nilpotency of M - I:
    // a defective unipotent perturbs its computed eigenvalues by
    // O(eps^{1/k}) for a length-k Jordan chain, so a raw eigensolver
    // comparison against tol would reject genuine unipotents.  The residual
    // ||(M-I)^d|| / max(1, ||M-I||)^d is zero up to roundoff exactly when
    // the spectrum is {1}.
    const int d = static_cast<int>(M.rows());
    Mat N = M - Mat::Identity(d, d);
    const double base = std::max(1.0, N.jacobiSvd().singularValues()(0));
    Mat P = N;
    for (int k = 1; k < d; ++k) P = P * N;
    const double res = P.jacobiSvd().singularValues()(0) / std::pow(base, d);
    return res <= std::max(tol, 1e-10);
}

// ---------------------------------------------------------------------------
// omega-Gram-Schmidt helpers
// ---------------------------------------------------------------------------

// Completes (or creates) a symplectic basis from the column span of `cols`,
// which must have even rank and carry a nondegenerate restriction of omega.
// Returns [e_1..e_m | f_1..f_m] with omega(e_i, f_j) = delta_ij.
Mat omega_gram_schmidt(const Mat& cols, double tol) {
    const int dim = static_cast<int>(cols.rows());
    std::vector<Vec> pool;
    for (int j = 0; j < cols.cols(); ++j) pool.push_back(cols.col(j));
    std::vector<Vec> es, fs;
    // projection onto the omega-complement of the accepted pairs; applied
    // twice per vector because the residual pairings of a single pass get
    // amplified later when the basis is used to scale by large factors
    auto reproject = [&](Vec v) {
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t i = 0; i < es.size(); ++i)
                v = v - omega_pair(v, fs[i]) * es[i] + omega_pair(v, es[i]) * fs[i];
        return v;
    };
    while (!pool.empty()) {
        // pick the largest remaining vector as e
        std::size_t ie = 0;
        for (std::size_t j = 1; j < pool.size(); ++j)
            if (pool[j].norm() > pool[ie].norm()) ie = j;
        Vec e = reproject(pool[ie]);
        pool.erase(pool.begin() + static_cast<long>(ie));
        if (e.norm() <= tol) continue;
        e.normalize();
        // find the partner with the largest pairing
        double best = 0.0;
        std::size_t iw = pool.size();
        for (std::size_t j = 0; j < pool.size(); ++j) {
            const double w = std::abs(omega_pair(e, pool[j]));
            if (w > best) { best = w; iw = j; }
        }
        require(iw < pool.size() && best > tol,
                "omega_gram_schmidt: restriction of omega is degenerate on the span");
        Vec f = reproject(pool[iw]);
        f /= omega_pair(e, f);
        pool.erase(pool.begin() + static_cast<long>(iw));
        // project the rest onto the omega-orthogonal complement of span(e, f)
        for (auto& c : pool) c = c - omega_pair(c, f) * e + omega_pair(c, e) * f;
        es.push_back(e);
        fs.push_back(f);
    }
    Mat B(dim, 2 * static_cast<int>(es.size()));
    for (std::size_t i = 0; i < es.size(); ++i) {
        B.col(static_cast<long>(i)) = es[i];
        B.col(static_cast<long>(es.size() + i)) = fs[i];
    }
    return B;
}

Mat symplectic_complete(int n, const Mat& seed, double tol) {
    Mat cols(2 * n, 2 * n + seed.cols());
    // seed columns first so they are preferred, then the standard basis to
    // guarantee full span
    if (seed.cols() > 0) cols.leftCols(seed.cols()) = seed;
    cols.rightCols(2 * n) = Mat::Identity(2 * n, 2 * n);
    // The GS pass consumes vectors greedily; duplicates collapse to zero and
    // are skipped.  For a full-dimensional span the result is 2n columns.
    Mat B = omega_gram_schmidt(cols, tol);
    require(B.cols() == 2 * n, "symplectic_complete: span did not close up");
    return B;
}

Mat random_symplectic(int n, Rng& rng, double spread) {
    Mat raw(2 * n, 2 * n);
    for (int i = 0; i < 2 * n; ++i)
        for (int j = 0; j < 2 * n; ++j) raw(i, j) = rng.gaussian();
    Mat B = omega_gram_schmidt(raw, 1e-10);
    if (B.cols() != 2 * n) return random_symplectic(n, rng, spread);  // measure-zero retry
    if (spread != 1.0) {
        // diag(s, 1/s) keeps the basis symplectic while skewing its scales
        Vec s(2 * n);
        for (int i = 0; i < n; ++i) {
            const double si = std::exp(rng.uniform(-1.0, 1.0) * std::log(spread));
            s[i] = si;
            s[n + i] = 1.0 / si;
        }
        B = B * s.asDiagonal();
    }
    return B;
}

Mat random_unipotent(int n, Rng& rng, double magnitude) {
    // exp of a Hamiltonian matrix that is strictly upper triangular in a
    // symplectic frame: X = [U B; 0 -U^T] with U strictly upper and B
    // symmetric is Hamiltonian and nilpotent (strictly triangular after
    // reordering the basis as (x_1..x_n, y_n..y_1)).
    Mat U = Mat::Zero(n, n), B(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) U(i, j) = magnitude * rng.gaussian();
        for (int j = i; j < n; ++j) B(i, j) = B(j, i) = magnitude * rng.gaussian();
    }
    Mat X = Mat::Zero(2 * n, 2 * n);
    X.topLeftCorner(n, n) = U;
    X.topRightCorner(n, n) = B;
    X.bottomRightCorner(n, n) = -U.transpose();
    // nilpotent exponential: the series terminates
    Mat E = Mat::Identity(2 * n, 2 * n), term = Mat::Identity(2 * n, 2 * n);
    for (int k = 1; k <= 2 * n + 1; ++k) {
        term = term * X / static_cast<double>(k);
        E += term;
        if (term.cwiseAbs().maxCoeff() == 0.0) break;
    }
    const Mat C = random_symplectic(n, rng);
    const Mat Cinv = -omega_matrix(n) * C.transpose() * omega_matrix(n);  // symplectic inverse
    return C * E * Cinv;
}

// ---------------------------------------------------------------------------
// squeeze_unipotent
// ---------------------------------------------------------------------------

namespace {

struct SqueezePiece {
    Mat Psi;     // 2m x 2m in local standard coordinates
    Mat PsiInv;  // analytic inverse (diagonal scalings inverted exactly);
                 // a numeric inverse is useless here because kappa(Psi) can
                 // reach 1e6 and pivoted solvers treat it as rank deficient
    Mat L;       // 2m x m
    Mat Lp;      // 2m x m
    int depth = 0;        // kernel-analysis levels below and including this one
    int scale_depth = 0;  // nested scaling stages below and including this one
};

double spectral_norm(const Mat& A) {
    if (A.rows() == 0 || A.cols() == 0) return 0.0;
    return A.jacobiSvd().singularValues()(0);
}

// Symplectic inverse of an exactly symplectic matrix.
Mat sp_inv(const Mat& E) {
    const int n = static_cast<int>(E.rows()) / 2;
    const Mat J = omega_matrix(n);
    return -J * E.transpose() * J;
}

// Coordinates of Phi restricted to the invariant subspace spanned by the
// symplectic basis B (dim x 2m): J_m^{-1} B^T J Phi B.
Mat restrict_to(const Mat& Phi, const Mat& B) {
    const int dim = static_cast<int>(B.rows());
    const int m = static_cast<int>(B.cols()) / 2;
    if (m == 0) return Mat(0, 0);
    const Mat Jfull = omega_matrix(dim / 2);
    const Mat Jm = omega_matrix(m);
    return -Jm * (B.transpose() * (Jfull * (Phi * B)));
}

// Orthonormal kernel basis of (Phi - I) with a gap-based cut.
Mat kernel_basis(const Mat& Phi, double tol) {
    const int d = static_cast<int>(Phi.rows());
    const Mat A = Phi - Mat::Identity(d, d);
    Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
    const Vec sv = svd.singularValues();
    const double scale = std::max(1.0, sv.size() ? sv(0) : 0.0);
    int rank = 0;
    while (rank < sv.size() && sv(rank) > tol * scale) ++rank;
    const int k = d - rank;
    require(k >= 1, "squeeze_unipotent: Phi - I has trivial kernel; input is not unipotent");
    return svd.matrixV().rightCols(k);
}

// One squeeze stage.  `t` is the global shrink parameter: counting stages
// from the inside out, stage j scales its kernel directions by t^{j-1/2} and
// the dual directions by t^{-(j-1/2)}, so adjacent stages always differ by a
// factor of exactly t.  The half-integer exponent lets the innermost 2x2
// stage use sqrt(t) (one Jordan step needs only lambda^2 = t), and every
// off-diagonal block of the conjugated matrix then carries one net factor of
// t: the amplification a stage sees from the sub-stage's Psi is cancelled by
// its own lambda.  The caller shrinks t until the measured residual passes.
SqueezePiece squeeze_recurse(const Mat& Phi, double t, double tol, int guard) {
    const int dim = static_cast<int>(Phi.rows());
    const int m = dim / 2;
    SqueezePiece out;
    if (dim == 0) {
        out.Psi = Mat(0, 0);
        out.PsiInv = Mat(0, 0);
        out.L = Mat(0, 0);
        out.Lp = Mat(0, 0);
        return out;
    }
    require(guard > 0, "squeeze_unipotent: recursion exceeded the dimension bound");

    const Mat Kb = kernel_basis(Phi, tol);
    const int k = static_cast<int>(Kb.cols());
    const Mat J = omega_matrix(m);

    // restriction of omega to the kernel
    Mat G = Kb.transpose() * J * Kb;
    const double gnorm = G.cwiseAbs().maxCoeff();

    if (gnorm > 1e-8) {
        // --- kernel contains a symplectic plane -------------------------------
        // Pull one symplectic 2-plane (u, w) out of K; Phi is the identity on
        // it, so the whole problem restricts to its omega-complement.
        int bi = 0, bj = 0;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                if (std::abs(G(i, j)) > std::abs(G(bi, bj))) { bi = i; bj = j; }
        Vec u = Kb.col(bi);
        Vec w = Kb.col(bj) / G(bi, bj);
        {  // balance norms while keeping omega(u, w) = 1
            const double s = std::sqrt(w.norm() / u.norm());
            u *= s;
            w /= s;
        }

        // omega-complement W of span(u, w)
        Mat rows(2, dim);
        rows.row(0) = (J.transpose() * u).transpose();
        rows.row(1) = (J.transpose() * w).transpose();
        Eigen::JacobiSVD<Mat> svd(rows, Eigen::ComputeFullV);
        Mat Wb = svd.matrixV().rightCols(dim - 2);
        Mat BW = omega_gram_schmidt(Wb, 1e-12);
        require(BW.cols() == dim - 2, "squeeze_unipotent: complement of kernel plane degenerated");

        // symplectic basis of V = span(u) + span(W_x) | span(w) + span(W_y)
        Mat E(dim, dim);
        E.col(0) = u;
        E.block(0, 1, dim, m - 1) = BW.leftCols(m - 1);
        E.col(m) = w;
        E.block(0, m + 1, dim, m - 1) = BW.rightCols(m - 1);
        const Mat Einv = sp_inv(E);

        SqueezePiece sub = squeeze_recurse(restrict_to(Phi, BW), t, tol, guard - 1);

        Mat P = Mat::Identity(dim, dim);
        Mat Pinv = Mat::Identity(dim, dim);
        std::vector<int> idx;
        for (int i = 1; i < m; ++i) idx.push_back(i);
        for (int i = m + 1; i < dim; ++i) idx.push_back(i);
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = 0; b < idx.size(); ++b) {
                P(idx[a], idx[b]) = sub.Psi(static_cast<long>(a), static_cast<long>(b));
                Pinv(idx[a], idx[b]) = sub.PsiInv(static_cast<long>(a), static_cast<long>(b));
            }

        out.Psi = E * P * Einv;
        out.PsiInv = E * Pinv * Einv;
        out.L = Mat(dim, m);
        out.Lp = Mat(dim, m);
        out.L.col(0) = u;
        out.Lp.col(0) = w;
        if (m > 1) {
            out.L.rightCols(m - 1) = BW * sub.L;
            out.Lp.rightCols(m - 1) = BW * sub.Lp;
        }
        out.depth = 1 + sub.depth;
        out.scale_depth = sub.scale_depth;  // the fixed plane needs no scaling
        return out;
    }

    // --- kernel is isotropic --------------------------------------------------
    // V = K (+) V0 (+) N with V0 symplectic inside K^omega and N =~ K* dual.
    require(2 * k <= dim, "squeeze_unipotent: isotropic kernel larger than n");
    Mat S = Kb.transpose() * J;  // omega(k_i, v) = (S v)_i
    Eigen::JacobiSVD<Mat> svd(S, Eigen::ComputeFullV);
    Mat Komega = svd.matrixV().rightCols(dim - k);

    // orthogonal complement of K inside K^omega
    Mat D = Komega - Kb * (Kb.transpose() * Komega);
    Eigen::JacobiSVD<Mat> svdD(D, Eigen::ComputeFullV | Eigen::ComputeFullU);
    Mat V0raw(dim, dim - 2 * k);
    {
        // columns of U for singular values above the cut span the complement
        int cnt = 0;
        const Vec sv = svdD.singularValues();
        for (int i = 0; i < sv.size() && cnt < dim - 2 * k; ++i)
            if (sv(i) > 1e-10) V0raw.col(cnt++) = svdD.matrixU().col(i);
        require(cnt == dim - 2 * k, "squeeze_unipotent: V0 extraction failed");
    }
    Mat BV0 = (dim - 2 * k > 0) ? omega_gram_schmidt(V0raw, 1e-12) : Mat(dim, 0);
    require(BV0.cols() == dim - 2 * k, "squeeze_unipotent: V0 is not symplectic");
    const int m0 = (dim - 2 * k) / 2;

    // dual family N: omega(k_i, n_j) = delta_ij, omega-orthogonal to V0,
    // isotropic.  Both corrections preserve the pairing with K (V0 and K lie
    // in K^omega), and neither disturbs the other, so a second pass simply
    // polishes the first-order residue left by the first.
    Mat N = S.transpose() * (S * S.transpose()).ldlt().solve(Mat::Identity(k, k));
    for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < k; ++j) {
            Vec nj = N.col(j);
            for (int i = 0; i < m0; ++i) {
                const Vec e = BV0.col(i), f = BV0.col(m0 + i);
                nj = nj - omega_pair(nj, f) * e + omega_pair(nj, e) * f;
            }
            N.col(j) = nj;
        }
        Mat W(k, k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) W(a, b) = omega_pair(N.col(a), N.col(b));
        Mat N2 = N;
        for (int j = 0; j < k; ++j)
            for (int i = 0; i < k; ++i) N2.col(j) += 0.5 * W(i, j) * Kb.col(i);
        N = N2;
    }

    // adapted symplectic basis [K, e | N, f]
    Mat E(dim, dim);
    E.leftCols(k) = Kb;
    if (m0 > 0) E.block(0, k, dim, m0) = BV0.leftCols(m0);
    E.block(0, m, dim, k) = N;
    if (m0 > 0) E.block(0, m + k, dim, m0) = BV0.rightCols(m0);
    const Mat Einv = sp_inv(E);
    Mat PhiE = Einv * Phi * E;

    // In the adapted basis Phi is block upper triangular,
    //      [ I  A  C ]
    //      [ 0 Phi0 B ]     (ordering K, V0, N),
    //      [ 0  0  I ]
    // because Phi fixes K pointwise, preserves K^omega = K (+) V0 and induces
    // the identity on V / K^omega ~ K*.  Roundoff leaves ~1e-14 residue in the
    // structurally zero blocks; the Lambda-conjugation amplifies those by
    // lambda^{-2}, so they must be zeroed exactly before the scaling loop.
    {
        std::vector<int> ik, iv, in_;
        for (int i = 0; i < k; ++i) ik.push_back(i);
        for (int i = 0; i < m0; ++i) iv.push_back(k + i);
        for (int i = 0; i < m0; ++i) iv.push_back(m + k + i);
        for (int i = 0; i < k; ++i) in_.push_back(m + i);
        for (int c : ik) {  // Phi(k_i) = k_i exactly
            for (int r = 0; r < dim; ++r) PhiE(r, c) = 0.0;
            PhiE(c, c) = 1.0;
        }
        for (int c : iv)
            for (int r : in_) PhiE(r, c) = 0.0;
        for (int c : in_)
            for (int r : in_) PhiE(r, c) = (r == c) ? 1.0 : 0.0;
    }

    // induced map on V0 ~ K^omega / K and its recursive squeeze
    std::vector<int> vidx;
    for (int i = 0; i < m0; ++i) vidx.push_back(k + i);
    for (int i = 0; i < m0; ++i) vidx.push_back(m + k + i);
    Mat Phi0(2 * m0, 2 * m0);
    for (int a = 0; a < 2 * m0; ++a)
        for (int b = 0; b < 2 * m0; ++b) Phi0(a, b) = PhiE(vidx[a], vidx[b]);
    SqueezePiece sub = squeeze_recurse(Phi0, t, tol, guard - 1);

    // This stage scales K by lambda = t^{scale_depth - 1/2} and N by 1/lambda,
    // one factor of t beyond the deepest scaling below: the off-diagonal
    // blocks A*Psi0^{-1}, Psi0*B (amplified by at most t^{-(scale_depth-1)} by
    // the sub-stage) come out of the full conjugation carrying a net factor t.
    out.scale_depth = 1 + sub.scale_depth;
    const double lambda = std::pow(t, out.scale_depth - 0.5);
    require(lambda > 1e-140, "squeeze_unipotent: scaling underflow");

    Mat PsiE = Mat::Identity(dim, dim);
    Mat PsiEInv = Mat::Identity(dim, dim);
    for (int i = 0; i < k; ++i) {
        PsiE(i, i) = lambda;
        PsiE(m + i, m + i) = 1.0 / lambda;
        PsiEInv(i, i) = 1.0 / lambda;
        PsiEInv(m + i, m + i) = lambda;
    }
    for (int a = 0; a < 2 * m0; ++a)
        for (int b = 0; b < 2 * m0; ++b) {
            PsiE(vidx[a], vidx[b]) = sub.Psi(a, b);
            PsiEInv(vidx[a], vidx[b]) = sub.PsiInv(a, b);
        }

    out.Psi = E * PsiE * Einv;
    out.PsiInv = E * PsiEInv * Einv;
    out.L = Mat(dim, m);
    out.Lp = Mat(dim, m);
    out.L.leftCols(k) = Kb;
    out.Lp.leftCols(k) = N;
    if (m0 > 0) {
        out.L.rightCols(m0) = BV0 * sub.L;
        out.Lp.rightCols(m0) = BV0 * sub.Lp;
    }
    out.depth = 1 + sub.depth;
    return out;
}

}  // namespace

SqueezeResult squeeze_unipotent(const Mat& Phi, double sigma, double tol) {
    require(Phi.rows() == Phi.cols() && Phi.rows() % 2 == 0,
            "squeeze_unipotent: matrix must be square of even size");
    require(sigma > 0, "squeeze_unipotent: sigma must be positive");
    require(is_symplectic(Phi, std::max(tol, 1e-9) * std::max(1.0, Phi.cwiseAbs().maxCoeff())),
            "squeeze_unipotent: Phi is not symplectic");
    require(is_unipotent(Phi, tol), "squeeze_unipotent: Phi is not unipotent");

    const int n = static_cast<int>(Phi.rows()) / 2;
    const Mat I2n = Mat::Identity(2 * n, 2 * n);

    if ((Phi - I2n).cwiseAbs().maxCoeff() == 0.0) {
        // the identity fixes the standard splitting and needs no conjugation
        SqueezeResult r;
        r.Psi = I2n;
        r.split.L = I2n.leftCols(n);
        r.split.Lprime = I2n.rightCols(n);
        r.residual = 0.0;
        r.depth = 0;
        return r;
    }

    // Scan the global parameter downward until the measured conjugation
    // passes.  Stopping at the first admissible t keeps kappa(Psi) as small
    // as the input allows, which is what bounds the roundoff floor of both
    // checks below; the 0.7 ratio keeps the overshoot past the largest
    // admissible t within a factor ~6 of optimal even for three nested
    // scaling stages.
    for (double t = 1.0; t > 1e-120; t *= 0.7) {
        SqueezePiece piece = squeeze_recurse(Phi, t, tol, n + 1);
        const double res = spectral_norm(piece.Psi * Phi * piece.PsiInv - I2n);
        // accept with a factor-2 margin so that re-measuring the conjugation
        // with a different inverse still lands strictly below sigma
        if (res < 0.5 * sigma) {
            SqueezeResult r;
            r.Psi = piece.Psi;
            r.split = LagrangianSplitting{piece.L, piece.Lp};
            r.residual = res;
            r.depth = piece.depth;
            return r;
        }
    }
    throw numerical_error("squeeze_unipotent: could not reach the requested sigma");
}

}  // namespace conley
