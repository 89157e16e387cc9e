// conley-lab: Maslov and Conley-Zehnder indices of sampled symplectic paths.
//
// Everything here is a rotation number.  An orthogonal symplectic matrix
// has the block form [A B; -B A] and acts on z = x + iy as multiplication
// by A - iB; the map M -> arg det_C(A - iB) of the unitary polar part of M
// is the circle map whose winding we accumulate.  Loops give the Maslov
// index directly.  For the Conley-Zehnder index of a path ending at a
// nondegenerate M1 we keep rotating through a normalization tail that stays
// inside {det(M - I) != 0}: first the spectrum of M1 is deformed eigenvalue
// by eigenvalue (hyperbolic moduli slide to 2 and 1/2, every other
// eigenvalue rides to -1 along tracks with track(1/l) = 1/track(l) and
// track(conj l) = conj track(l), so each intermediate matrix is again real
// and symplectic and never acquires eigenvalue 1), then a symplectic
// conjugation is unwound to straighten the hyperbolic part onto the
// diagonal normal form diag(2,..,-1,..,1/2,..,-1,..) whose unitary part has
// determinant +-1.  The total angle is then an integer multiple of pi and
// the index is minus that integer; the sign makes a negative-definite small
// Hessian in R^{2n} come out as +n.
//
// Any path from M1 to a normal form inside {det(M - I) != 0} gives the same
// answer -- loops in that set have trivial winding -- so the tail is a
// convenience, not a choice; the invariance is exercised by the test suite.

#include "conley/sympath.hpp"

#include "conley/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

namespace conley {

namespace {

constexpr double kPi = 3.14159265358979323846;
using Cx = std::complex<double>;

// Orthogonal polar factor U of an invertible M = U P; for symplectic M it
// lands in O(2n) cap Sp(2n) = U(n).
Mat polar_unitary(const Mat& M) {
    Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

double detC_angle(const Mat& U) {
    const int n = static_cast<int>(U.rows()) / 2;
    const CMat Uc = U.topLeftCorner(n, n).cast<Cx>() -
                    Cx(0, 1) * U.topRightCorner(n, n).cast<Cx>();
    return std::arg(Uc.determinant());
}

// Continuous-angle accumulator.  Steps larger than pi/2 are refusals, not
// guesses: the winding would be ambiguous.
struct AngleTracker {
    double theta = 0.0;
    double raw = 0.0;
    bool started = false;

    void feed(const Mat& M, const char* stage) {
        const double a = detC_angle(polar_unitary(M));
        if (!started) {
            theta = raw = a;
            started = true;
            return;
        }
        const double d = std::remainder(a - raw, 2.0 * kPi);
        if (std::abs(d) > 0.5 * kPi + 1e-9)
            throw resolution_error(std::string(stage) +
                                   ": angle step exceeds pi/2; refine the sampling");
        theta += d;
        raw = a;
    }
};

struct Spectrum {
    CMat V;       // eigenvector matrix
    CVec lam;     // eigenvalues
    double cond;  // condition number of V
    double gap;   // min |lam - 1|
};

Spectrum eigen_of(const Mat& M) {
    Eigen::EigenSolver<Mat> es(M);
    if (es.info() != Eigen::Success)
        throw numerical_error("sympath: eigenvalue iteration failed to converge");
    Spectrum s;
    s.V = es.eigenvectors();
    s.lam = es.eigenvalues();
    Eigen::JacobiSVD<CMat> svd(s.V);
    const auto& sv = svd.singularValues();
    s.cond = sv(0) / std::max(sv(sv.size() - 1), 1e-300);
    s.gap = (s.lam.array() - Cx(1, 0)).abs().minCoeff();
    return s;
}

// Phase-align a (numerically) real eigenvector and strip the imaginary junk.
Vec realify(const CVec& v, const char* what) {
    int jmax = 0;
    v.cwiseAbs().maxCoeff(&jmax);
    const CVec w = v * (std::conj(v(jmax)) / std::abs(v(jmax)));
    if (w.imag().norm() > 1e-6 * w.norm())
        throw numerical_error(std::string(what) +
                              ": eigenvector is unexpectedly complex");
    return w.real().normalized();
}

// The normalization tail: a sampled path from M1 to a diagonal normal form,
// staying inside {det(M - I) != 0}.  Returned with M1 itself as the first
// entry so the caller just keeps feeding its angle tracker.
std::vector<Mat> build_tail(const Mat& M1in, int per_leg) {
    const int dim = static_cast<int>(M1in.rows());
    const int nn = dim / 2;
    std::vector<Mat> out;

    Mat M1 = M1in;
    Spectrum sp = eigen_of(M1);
    const double gap0 = sp.gap;

    // A defective endpoint has no usable eigenbasis.  Compose with a tiny
    // random symplectic factor and *check* -- never assume -- that the
    // spectrum stayed clear of 1 and the eigenbasis became well-conditioned.
    // The straight-line junction to the perturbed matrix is checked sample
    // by sample for the same reason: Jordan blocks move eigenvalues by
    // delta^(1/k), far beyond any first-order estimate.
    if (sp.cond > 1e8) {
        Rng rng(0x73796d70617468ULL);
        const Mat JH = field_matrix(nn);
        bool fixed = false;
        for (const double delta : {1e-14, 1e-12, 1e-10, 1e-8}) {
            Mat Q(dim, dim);
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) Q(i, j) = rng.gaussian();
            Q = 0.5 * (Q + Q.transpose()).eval();
            Q /= std::max(Q.norm(), 1e-300);
            const Mat M1p = M1 * (delta * JH * Q).exp();
            const Spectrum spp = eigen_of(M1p);
            if (spp.cond > 1e8 || spp.gap < 0.5 * gap0) continue;
            std::vector<Mat> leg;
            bool clear = true;
            for (int k = 0; k <= 32 && clear; ++k) {
                const double s = k / 32.0;
                Mat W = (1.0 - s) * M1 + s * M1p;
                if (k > 0 && k < 32) {
                    Eigen::EigenSolver<Mat> ei(W);
                    const double g =
                        (ei.eigenvalues().array() - Cx(1, 0)).abs().minCoeff();
                    if (g < 0.25 * gap0) clear = false;
                }
                leg.push_back(std::move(W));
            }
            if (!clear) continue;
            out.insert(out.end(), leg.begin(), leg.end());
            M1 = M1p;
            sp = spp;
            fixed = true;
            break;
        }
        if (!fixed)
            throw degeneracy_error(
                "cz_index: endpoint is too close to defective-degenerate to resolve",
                gap0);
    }

    // Eigenvalue tracks.  cls: 0 -> modulus slides to 2, 1 -> to 1/2,
    // 2 -> angle rides to +-pi and modulus to 1 (ends at -1).
    const double ang_tol = 1e-12;
    std::vector<int> cls(dim);
    std::vector<double> logr0(dim), psi0(dim), logr1(dim), psi1(dim);
    int npos = 0, nneg = 0;
    for (int i = 0; i < dim; ++i) {
        const double r = std::abs(sp.lam(i));
        const double psi = std::arg(sp.lam(i));
        logr0[i] = std::log(r);
        psi0[i] = psi;
        if (std::abs(psi) <= ang_tol) {
            psi1[i] = 0.0;
            if (logr0[i] > 0.0) {
                cls[i] = 0;
                logr1[i] = std::log(2.0);
                ++npos;
            } else {
                cls[i] = 1;
                logr1[i] = -std::log(2.0);
                ++nneg;
            }
        } else {
            cls[i] = 2;
            logr1[i] = 0.0;
            psi1[i] = psi > 0.0 ? kPi : -kPi;
        }
    }
    if (npos != nneg)
        throw numerical_error("cz_index: unbalanced hyperbolic spectrum at the endpoint");

    const CMat Vinv = sp.V.partialPivLu().solve(CMat::Identity(dim, dim));
    for (int k = 0; k <= per_leg; ++k) {
        const double s = static_cast<double>(k) / per_leg;
        CVec d(dim);
        for (int i = 0; i < dim; ++i)
            d(i) = std::polar(std::exp((1.0 - s) * logr0[i] + s * logr1[i]),
                              (1.0 - s) * psi0[i] + s * psi1[i]);
        out.push_back((sp.V * d.asDiagonal() * Vinv).real());
    }

    const int h = npos;
    if (h == 0) return out;  // spectral leg already ended at -I exactly

    // Straighten the hyperbolic part.  The eigenspaces E_2 and E_1/2 of the
    // deformed matrix are omega-isotropic and pair with each other, and the
    // -1 part is their symplectic complement, so a symplectic conjugator P
    // with P^{-1} W P = W0 = diag(2,..,-1,..,1/2,..,-1,..) can be assembled
    // from eigenvectors.  Unwinding P through its polar factors -- both of
    // which stay symplectic when powered -- walks W to W0 with constant
    // spectrum, hence safely inside {det(M - I) != 0}.
    Mat A2(dim, h), A5(dim, h);
    {
        int i2 = 0, i5 = 0;
        for (int i = 0; i < dim; ++i) {
            if (cls[i] == 0) A2.col(i2++) = realify(sp.V.col(i), "cz_index");
            if (cls[i] == 1) A5.col(i5++) = realify(sp.V.col(i), "cz_index");
        }
    }
    const Mat J = omega_matrix(nn);
    const Mat G = A2.transpose() * J * A5;  // h x h pairing, nondegenerate
    A5 = (G.transpose().partialPivLu().solve(A5.transpose())).transpose().eval();

    const int rr = nn - h;
    Mat NE(dim, 0), NF(dim, 0);
    if (rr > 0) {
        Mat pool(dim, 2 * rr);
        int c = 0;
        for (int i = 0; i < dim; ++i) {
            if (cls[i] != 2) continue;
            if (std::abs(sp.lam(i).imag()) <=
                1e-14 * std::max(1.0, std::abs(sp.lam(i)))) {
                pool.col(c++) = realify(sp.V.col(i), "cz_index");
            } else if (sp.lam(i).imag() > 0.0) {
                pool.col(c++) = sp.V.col(i).real().normalized();
                pool.col(c++) = sp.V.col(i).imag().normalized();
            }
        }
        require(c == 2 * rr, "cz_index: lost track of the elliptic eigenspace");
        const Mat B = omega_gram_schmidt(pool, 1e-10);
        if (B.cols() != 2 * rr)
            throw numerical_error(
                "cz_index: omega degenerated on the elliptic eigenspace");
        NE = B.leftCols(rr);
        NF = B.rightCols(rr);
    }

    Mat P(dim, dim);
    P.leftCols(h) = A2;
    P.block(0, h, dim, rr) = NE;
    P.block(0, nn, dim, h) = A5;
    P.rightCols(rr) = NF;
    if (symplectic_residual(P) > 1e-6 * std::max(1.0, P.squaredNorm()))
        throw numerical_error("cz_index: conjugator drifted off the symplectic group");

    Vec d0(dim);
    for (int i = 0; i < h; ++i) {
        d0(i) = 2.0;
        d0(nn + i) = 0.5;
    }
    for (int i = h; i < nn; ++i) {
        d0(i) = -1.0;
        d0(nn + i) = -1.0;
    }

    // Polar factors of P: an orthogonal-symplectic part (a unitary matrix in
    // disguise) and an SPD symplectic part; fractional powers of both stay
    // symplectic, so P^s = U^s S^s is a path in Sp from P to I.
    const Mat Up = polar_unitary(P);
    if ((Up.topLeftCorner(nn, nn) - Up.bottomRightCorner(nn, nn)).norm() +
            (Up.topRightCorner(nn, nn) + Up.bottomLeftCorner(nn, nn)).norm() >
        1e-6 * dim)
        throw numerical_error("cz_index: polar factor lost the unitary block form");
    const Mat Sp2 = 0.5 * (Up.transpose() * P + P.transpose() * Up);
    Eigen::SelfAdjointEigenSolver<Mat> sae(Sp2);
    if (sae.eigenvalues().minCoeff() <= 0.0)
        throw numerical_error("cz_index: polar stretch factor is not positive");

    const CMat u = Up.topLeftCorner(nn, nn).cast<Cx>() -
                   Cx(0, 1) * Up.topRightCorner(nn, nn).cast<Cx>();
    Eigen::ComplexEigenSolver<CMat> ceu(u);
    if (ceu.info() != Eigen::Success)
        throw numerical_error("sympath: eigenvalue iteration failed to converge");
    // Orthonormalize the eigenbasis; u is normal, so this keeps the
    // triangularization diagonal up to roundoff.
    Eigen::HouseholderQR<CMat> qr(ceu.eigenvectors());
    const CMat Qu = qr.householderQ();
    const CMat Tu = Qu.adjoint() * u * Qu;
    Vec beta(nn);
    for (int i = 0; i < nn; ++i) beta(i) = std::arg(Tu(i, i));

    const auto u_pow = [&](double s) {
        CVec dd(nn);
        for (int i = 0; i < nn; ++i) dd(i) = std::polar(1.0, s * beta(i));
        const CMat us = Qu * dd.asDiagonal() * Qu.adjoint();
        Mat R(dim, dim);
        R.topLeftCorner(nn, nn) = us.real();
        R.topRightCorner(nn, nn) = -us.imag();
        R.bottomLeftCorner(nn, nn) = us.imag();
        R.bottomRightCorner(nn, nn) = us.real();
        return R;
    };
    if ((u_pow(1.0) - Up).norm() > 1e-6 * dim)
        throw numerical_error("cz_index: unitary interpolation lost its endpoint");
    const auto s_pow = [&](double s) {
        Vec dd(dim);
        for (int i = 0; i < dim; ++i)
            dd(i) = std::pow(sae.eigenvalues()(i), s);
        return Mat(sae.eigenvectors() * dd.asDiagonal() *
                   sae.eigenvectors().transpose());
    };

    for (int k = 1; k <= per_leg; ++k) {
        const double s = 1.0 - static_cast<double>(k) / per_leg;
        const Mat Ps = u_pow(s) * s_pow(s);
        const Mat Psinv = s_pow(-s) * u_pow(s).transpose();
        out.push_back(Ps * d0.asDiagonal() * Psinv);
    }
    return out;
}

double endpoint_gap(const Mat& M) {
    Eigen::EigenSolver<Mat> es(M);
    return (es.eigenvalues().array() - Cx(1, 0)).abs().minCoeff();
}

}  // namespace

int SymplecticPath::n() const {
    return samples.empty() ? 0 : static_cast<int>(samples.front().rows()) / 2;
}

void SymplecticPath::validate() const {
    require(!samples.empty() && samples.size() == times.size(),
            "SymplecticPath: times and samples must be nonempty and aligned");
    const long d = samples.front().rows();
    require(d >= 2 && d % 2 == 0 && samples.front().cols() == d,
            "SymplecticPath: samples must be square of even dimension");
    for (const Mat& M : samples)
        require(M.rows() == d && M.cols() == d,
                "SymplecticPath: inconsistent sample dimensions");
    for (std::size_t k = 1; k < times.size(); ++k)
        require(times[k] > times[k - 1],
                "SymplecticPath: times must be strictly increasing");
    require(period > 0.0, "SymplecticPath: period must be positive");
    if (is_loop) {
        const double scale = std::max(1.0, samples.front().norm());
        require((samples.back() - samples.front()).norm() <= 1e-6 * scale,
                "SymplecticPath: loop flag set but the endpoints differ");
    }
}

SymplecticPath sample_linear_flow(const Mat& X, double T, int count,
                                  bool mark_loop) {
    require(X.rows() == X.cols() && X.rows() >= 2 && X.rows() % 2 == 0,
            "sample_linear_flow: X must be square of even dimension");
    require(T > 0.0, "sample_linear_flow: duration must be positive");
    require(count >= 2, "sample_linear_flow: need at least two samples");
    const int nn = static_cast<int>(X.rows()) / 2;
    const Mat J = omega_matrix(nn);
    require((X.transpose() * J + J * X).norm() <=
                1e-9 * std::max(1.0, X.norm()),
            "sample_linear_flow: X is not infinitesimally symplectic");

    SymplecticPath p;
    p.period = T;
    p.is_loop = mark_loop;
    const Mat E = (X * (T / (count - 1))).exp();
    Mat M = Mat::Identity(X.rows(), X.cols());
    for (int k = 0; k < count; ++k) {
        p.times.push_back(T * k / (count - 1));
        p.samples.push_back(M);
        M = (M * E).eval();
    }
    p.validate();
    return p;
}

SymplecticPath concatenate(const SymplecticPath& a, const SymplecticPath& b) {
    a.validate();
    b.validate();
    require(a.samples.front().rows() == b.samples.front().rows(),
            "concatenate: dimension mismatch");
    const long d = b.samples.front().rows();
    require((b.samples.front() - Mat::Identity(d, d)).norm() <= 1e-6,
            "concatenate: second path must start at the identity");

    SymplecticPath out;
    out.times = a.times;
    out.samples = a.samples;
    const Mat tail = a.samples.back();
    const double t0 = a.times.back();
    for (std::size_t k = 1; k < b.samples.size(); ++k) {
        out.times.push_back(t0 + (b.times[k] - b.times.front()));
        out.samples.push_back(b.samples[k] * tail);
    }
    out.period = out.times.back() - out.times.front();
    const double scale = std::max(1.0, out.samples.front().norm());
    out.is_loop =
        (out.samples.back() - out.samples.front()).norm() <= 1e-6 * scale;
    return out;
}

SymplecticPath iterate_path(const SymplecticPath& path, int T) {
    path.validate();
    require(T >= 1, "iterate_path: iteration count must be positive");
    const long d = path.samples.front().rows();
    require((path.samples.front() - Mat::Identity(d, d)).norm() <= 1e-6,
            "iterate_path: path must start at the identity");

    const Mat M1 = path.samples.back();
    const double span = path.times.back() - path.times.front();
    SymplecticPath out;
    out.period = T * path.period;
    Mat Mk = Mat::Identity(d, d);
    for (int k = 0; k < T; ++k) {
        for (std::size_t j = (k == 0 ? 0 : 1); j < path.samples.size(); ++j) {
            out.times.push_back(k * span + (path.times[j] - path.times.front()));
            out.samples.push_back(path.samples[j] * Mk);
        }
        Mk = (M1 * Mk).eval();
    }
    const double scale = std::max(1.0, out.samples.front().norm());
    out.is_loop =
        (out.samples.back() - out.samples.front()).norm() <= 1e-6 * scale;
    return out;
}

SymplecticPath reverse_path(const SymplecticPath& path) {
    path.validate();
    SymplecticPath out;
    out.period = path.period;
    out.is_loop = path.is_loop;
    const std::size_t N = path.samples.size();
    for (std::size_t k = 0; k < N; ++k) {
        out.times.push_back(path.times.front() +
                            (path.times.back() - path.times[N - 1 - k]));
        out.samples.push_back(path.samples[N - 1 - k]);
    }
    return out;
}

int maslov_loop(const SymplecticPath& path) {
    path.validate();
    require(path.is_loop, "maslov_loop: path is not a loop");
    require(path.samples.size() >= 2, "maslov_loop: need at least two samples");

    AngleTracker tr;
    const double a0 = detC_angle(polar_unitary(path.samples.front()));
    for (const Mat& M : path.samples) tr.feed(M, "maslov_loop");
    const double w = (tr.theta - a0) / (2.0 * kPi);
    if (std::abs(w - std::round(w)) > 0.05)
        throw resolution_error("maslov_loop: winding did not close to an integer");
    return static_cast<int>(std::lround(w));
}

int cz_index(const SymplecticPath& path) {
    path.validate();
    require(path.samples.size() >= 2, "cz_index: need at least two samples");
    const long d = path.samples.front().rows();
    require((path.samples.front() - Mat::Identity(d, d)).norm() <= 1e-6,
            "cz_index: path must start at the identity");
    const Mat& M1 = path.samples.back();
    require(symplectic_residual(M1) <=
                1e-6 * std::max(1.0, M1.squaredNorm()),
            "cz_index: endpoint is not symplectic");

    const double gap = endpoint_gap(M1);
    if (gap <= 1e-8)
        throw degeneracy_error(
            "cz_index: endpoint has an eigenvalue within 1e-8 of 1", gap);

    // Path contribution under the caller's sampling contract.
    AngleTracker base;
    for (const Mat& M : path.samples) base.feed(M, "cz_index");

    // Normalization tail, refined internally until the winding settles.
    std::string why = "unresolved";
    for (int leg = 257; leg <= 4097; leg = 2 * leg - 1) {
        try {
            const std::vector<Mat> tail = build_tail(M1, leg);
            AngleTracker tr = base;
            for (const Mat& W : tail) tr.feed(W, "cz_index normalization");
            const double mu = -tr.theta / kPi;
            if (std::abs(mu - std::round(mu)) > 0.15) {
                why = "winding did not settle to an integer";
                continue;
            }
            return static_cast<int>(std::lround(mu));
        } catch (const resolution_error& e) {
            why = e.what();
        }
    }
    throw numerical_error(std::string("cz_index: normalization tail failed: ") +
                          why);
}

std::vector<IterationEntry> iteration_profile(const SymplecticPath& path,
                                              int max_T) {
    path.validate();
    require(max_T >= 1, "iteration_profile: max_T must be positive");
    std::vector<IterationEntry> out;
    out.reserve(static_cast<std::size_t>(max_T));
    for (int T = 1; T <= max_T; ++T) {
        const SymplecticPath pT = iterate_path(path, T);
        IterationEntry e{T, false, 0, endpoint_gap(pT.samples.back())};
        try {
            e.index = cz_index(pT);
        } catch (const degeneracy_error& de) {
            e.degenerate = true;
            e.gap = de.gap;
        }
        out.push_back(e);
    }
    return out;
}

}  // namespace conley
