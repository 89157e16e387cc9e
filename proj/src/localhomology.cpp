// Local Morse homology on a grid, and the two certificates that consume it:
// relative autonomy (a time-periodic Hamiltonian close enough to an
// autonomous reference that Floer data at the fixed point reduces to Morse
// data of the reference) and the symplectically-degenerate-maximum evidence
// table.
//
// The homology itself is relative cubical homology with Z2 coefficients on
// the pair
//
//     X = { grid cells with every vertex value <= c + tol },
//     A = { grid cells with every vertex value <= c - eps },    c = f(p).
//
// Cells are the elementary cubes of the lattice: a base node plus an extent
// bitmask saying along which axes the cube is stretched one step.  The
// boundary of a relative k-cell is the sum of its 2k facets that survive in
// X \ A, and betti_k = #cells_k - rank d_k - rank d_{k+1} with ranks over Z2
// by column reduction.  No answer is trusted raw: the computation is redone
// at half resolution (the coarse lattice is a sublattice, so no new field
// evaluations) and at half epsilon, and all four votes must agree.
//
// Epsilon is not free: too large and A slides down the walls of the box, too
// small and A touches the roundoff plateau at the critical level.  The rule
// used here is a quarter of the gap between c and the largest grid value
// strictly below it, which puts the cut safely inside the empty band that an
// isolated critical value always has on a finite lattice.  When no grid
// value lies below c (a strict minimum), A is empty and the pair degenerates
// to absolute homology, which is what it should be.

#include "conley/localhomology.hpp"

#include "conley/expr.hpp"
#include "conley/flow.hpp"
#include "conley/genfun.hpp"

#include "json.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <utility>

namespace conley {

namespace {

constexpr double kPi = 3.14159265358979323846;

double spec_norm(const Mat& M) {
    if (M.rows() == 0 || M.cols() == 0) return 0.0;
    return Eigen::JacobiSVD<Mat>(M).singularValues()(0);
}

std::string render_vec(const Vec& v) {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
    os << ")";
    return os.str();
}

std::string render_betti(const std::vector<int>& b) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < b.size(); ++i) os << (i ? "," : "") << b[i];
    os << ")";
    return os.str();
}

// ----- the lattice -----------------------------------------------------------

struct Lattice {
    int m = 0;
    int N = 0;          // nodes per axis, odd, so the center is a node
    Vec center;
    double radius = 0;  // half box edge
    double h = 0;       // node spacing

    std::int64_t nodes = 0;
    std::vector<std::int64_t> stride;  // last axis fastest

    Lattice(int m_, int N_, Vec center_, double radius_)
        : m(m_), N(N_), center(std::move(center_)), radius(radius_),
          h(2.0 * radius_ / (N_ - 1)) {
        stride.assign(m, 1);
        for (int d = m - 2; d >= 0; --d) stride[d] = stride[d + 1] * N;
        nodes = stride[0] * N;
    }

    void decode(std::int64_t lin, int* idx) const {
        for (int d = 0; d < m; ++d) {
            idx[d] = static_cast<int>(lin / stride[d]);
            lin %= stride[d];
        }
    }

    Vec point(const int* idx) const {
        Vec q = center;
        for (int d = 0; d < m; ++d) q(d) += (idx[d] - (N - 1) / 2) * h;
        return q;
    }
};

std::vector<double> sample_field(const ScalarField& f, const Lattice& L) {
    std::vector<double> vals(static_cast<std::size_t>(L.nodes));
    int idx[4] = {0, 0, 0, 0};
    for (std::int64_t lin = 0; lin < L.nodes; ++lin) {
        L.decode(lin, idx);
        const double v = f(L.point(idx));
        if (!std::isfinite(v))
            throw numerical_error("local_morse_homology: the field is not finite at " +
                                  render_vec(L.point(idx)));
        vals[static_cast<std::size_t>(lin)] = v;
    }
    return vals;
}

// ----- relative cubical homology over Z2 ------------------------------------

// Betti numbers of (X, A) on the lattice whose values are given.  The cell id
// packs the base node index with the extent mask; facet ids are formed by
// clearing one extent bit and, for the upper facet, advancing the base.
std::vector<int> relative_betti(const std::vector<double>& vals, int m, int N,
                                const std::vector<std::int64_t>& stride,
                                double c, double eps, bool a_empty) {
    // The X-membership slack absorbs roundoff at the critical level but must
    // stay well below the cut at c - eps, or the pair stops being a pair.
    double tol_c = 1e-12 * std::max(1.0, std::abs(c));
    if (!a_empty) tol_c = std::min(tol_c, 0.25 * eps);
    const int bits = 1 << m;
    const std::int64_t nodes = static_cast<std::int64_t>(vals.size());

    // 0 = outside X, 1 = in X but not A (the relative complex), 2 = in A.
    std::vector<unsigned char> cls(static_cast<std::size_t>(nodes) * bits, 0);
    std::vector<std::int64_t> counts(m + 1, 0);

    int idx[4];
    for (std::int64_t base = 0; base < nodes; ++base) {
        // decode once per node
        std::int64_t rem = base;
        for (int d = 0; d < m; ++d) {
            idx[d] = static_cast<int>(rem / stride[d]);
            rem %= stride[d];
        }
        for (int mask = 0; mask < bits; ++mask) {
            bool valid = true;
            for (int d = 0; d < m && valid; ++d)
                if ((mask >> d) & 1) valid = idx[d] + 1 <= N - 1;
            if (!valid) continue;
            double mx = vals[static_cast<std::size_t>(base)];
            // vertices are base + sub for all submasks of the extent
            for (int sub = mask; sub; sub = (sub - 1) & mask) {
                std::int64_t v = base;
                for (int d = 0; d < m; ++d)
                    if ((sub >> d) & 1) v += stride[d];
                mx = std::max(mx, vals[static_cast<std::size_t>(v)]);
            }
            unsigned char k = 0;
            if (!a_empty && mx <= c - eps) k = 2;
            else if (mx <= c + tol_c) k = 1;
            cls[static_cast<std::size_t>(base) * bits + mask] = k;
            if (k == 1) counts[__builtin_popcount(static_cast<unsigned>(mask))]++;
        }
    }

    // Rank of the k-th boundary over Z2 by column reduction: keep each column
    // sorted, cancel on the largest facet id, claim a pivot when the column
    // survives.
    auto boundary_rank = [&](int k) -> std::int64_t {
        if (k <= 0 || k > m) return 0;
        std::vector<std::vector<std::int64_t>> cols;
        std::vector<std::int64_t> scratch;
        std::unordered_map<std::int64_t, std::size_t> pivot;
        std::int64_t rank = 0;
        for (std::int64_t base = 0; base < nodes; ++base) {
            std::int64_t rem = base;
            for (int d = 0; d < m; ++d) {
                idx[d] = static_cast<int>(rem / stride[d]);
                rem %= stride[d];
            }
            for (int mask = 0; mask < bits; ++mask) {
                if (__builtin_popcount(static_cast<unsigned>(mask)) != k) continue;
                if (cls[static_cast<std::size_t>(base) * bits + mask] != 1) continue;
                std::vector<std::int64_t> col;
                for (int d = 0; d < m; ++d) {
                    if (!((mask >> d) & 1)) continue;
                    const int sub = mask ^ (1 << d);
                    const std::int64_t lo = base * bits + sub;
                    const std::int64_t hi = (base + stride[d]) * bits + sub;
                    if (cls[static_cast<std::size_t>(lo)] == 1) col.push_back(lo);
                    if (cls[static_cast<std::size_t>(hi)] == 1) col.push_back(hi);
                }
                std::sort(col.begin(), col.end());
                while (!col.empty()) {
                    const std::int64_t low = col.back();
                    auto it = pivot.find(low);
                    if (it == pivot.end()) {
                        pivot.emplace(low, cols.size());
                        cols.push_back(std::move(col));
                        ++rank;
                        break;
                    }
                    // symmetric difference with the owning column
                    const std::vector<std::int64_t>& other = cols[it->second];
                    scratch.clear();
                    std::set_symmetric_difference(col.begin(), col.end(),
                                                  other.begin(), other.end(),
                                                  std::back_inserter(scratch));
                    col.swap(scratch);
                }
            }
        }
        return rank;
    };

    std::vector<std::int64_t> rank(m + 2, 0);
    for (int k = 1; k <= m; ++k) rank[k] = boundary_rank(k);
    std::vector<int> betti(m + 1, 0);
    for (int k = 0; k <= m; ++k)
        betti[k] = static_cast<int>(counts[k] - rank[k] - rank[k + 1]);
    return betti;
}

// ----- isolation re-verification ---------------------------------------------

// A second zero of the gradient inside the box -- on or off the lattice --
// makes every component of grad f change sign (or vanish) across some cell.
// The test below flags exactly that: a top-dimensional cell, outside the
// guard zone of three spacings around p, on which every partial derivative
// brackets zero.  Derivatives are central differences of the sampled values
// (one-sided on the walls), so the check costs no extra field evaluations.
void verify_isolation(const std::vector<double>& vals, const Lattice& L) {
    const int m = L.m, N = L.N;
    std::vector<std::vector<double>> grad(m);
    for (int d = 0; d < m; ++d) {
        grad[d].assign(static_cast<std::size_t>(L.nodes), 0.0);
        for (std::int64_t lin = 0; lin < L.nodes; ++lin) {
            int idx[4];
            L.decode(lin, idx);
            const int i = idx[d];
            double g;
            if (i == 0)
                g = (vals[lin + L.stride[d]] - vals[lin]) / L.h;
            else if (i == N - 1)
                g = (vals[lin] - vals[lin - L.stride[d]]) / L.h;
            else
                g = (vals[lin + L.stride[d]] - vals[lin - L.stride[d]]) / (2 * L.h);
            grad[d][static_cast<std::size_t>(lin)] = g;
        }
    }
    std::vector<double> tol(m);
    for (int d = 0; d < m; ++d) {
        double scale = 0.0;
        for (double g : grad[d]) scale = std::max(scale, std::abs(g));
        tol[d] = 1e-11 * scale;
    }

    const int mid = (N - 1) / 2;
    const int bits = 1 << m;
    int idx[4];
    for (std::int64_t base = 0; base < L.nodes; ++base) {
        L.decode(base, idx);
        bool valid = true, guarded = true;
        for (int d = 0; d < m; ++d) {
            if (idx[d] + 1 > N - 1) { valid = false; break; }
            // |cell center - p| <= 3h on every axis, in half-step units
            if (std::abs(2 * idx[d] + 1 - 2 * mid) > 6) guarded = false;
        }
        if (!valid || guarded) continue;
        bool all_mixed = true;
        for (int d = 0; d < m && all_mixed; ++d) {
            double mn = grad[d][static_cast<std::size_t>(base)];
            double mx = mn;
            for (int sub = bits - 1; sub; sub = (sub - 1) & (bits - 1)) {
                std::int64_t v = base;
                for (int e = 0; e < m; ++e)
                    if ((sub >> e) & 1) v += L.stride[e];
                const double g = grad[d][static_cast<std::size_t>(v)];
                mn = std::min(mn, g);
                mx = std::max(mx, g);
            }
            all_mixed = (mn <= tol[d] && mx >= -tol[d]);
        }
        if (all_mixed) {
            Vec q = L.point(idx);
            for (int d = 0; d < m; ++d) q(d) += 0.5 * L.h;
            throw isolation_error(
                "local_morse_homology: the gradient brackets a second zero near " +
                render_vec(q) + " -- the critical point is not isolated on this box");
        }
    }
}

// ----- epsilon and the vote ---------------------------------------------------

struct EpsChoice {
    double eps = 0.0;
    bool a_empty = false;
};

// Epsilon is a quarter of the drop from the critical value to the shallowest
// sublevel node on the box walls.  Anchoring the gap to the boundary band
// keeps epsilon at the scale of the sublevel set that actually exits the box;
// anchoring it to the globally shallowest sublevel node would let a single
// near-zero sample (one node grazing the zero level) collapse epsilon to
// roundoff and squeeze A against the zero set.
EpsChoice choose_epsilon(const std::vector<double>& vals, const Lattice& L, double c) {
    const double tol_c = 1e-12 * std::max(1.0, std::abs(c));
    double band = -std::numeric_limits<double>::infinity();
    double best = -std::numeric_limits<double>::infinity();
    double lowest = std::numeric_limits<double>::infinity();
    int idx[4];
    for (std::int64_t lin = 0; lin < L.nodes; ++lin) {
        const double v = vals[static_cast<std::size_t>(lin)];
        lowest = std::min(lowest, v);
        if (v >= c - tol_c) continue;
        best = std::max(best, v);
        L.decode(lin, idx);
        for (int d = 0; d < L.m; ++d)
            if (idx[d] == 0 || idx[d] == L.N - 1) {
                band = std::max(band, v);
                break;
            }
    }
    if (!std::isfinite(best))
        return {c - lowest + std::max(1.0, std::abs(c)), true};
    // Sublevel mass that never reaches the walls: fall back to the global gap.
    if (!std::isfinite(band)) band = best;
    return {0.25 * (c - band), false};
}

// ----- boundary-degree cross-check (dimensions 1 and 2) ------------------------

// The Euler characteristic of the relative signature equals the index of
// grad f at p, i.e. the degree of grad f restricted to the box boundary.  In
// dimensions 1 and 2 that degree can be read off the already-sampled lattice
// (sign comparison at the two ends, or the winding number along the ring one
// node in from the walls, where central differences are available).  A
// mismatch means the lattice missed genuine sublevel topology -- a sector
// thinner than the grid connectivity can resolve, say -- and the only honest
// response is to refuse rather than certify a wrong signature.
int boundary_degree(const std::vector<double>& vals, const Lattice& L) {
    const int N = L.N;
    if (L.m == 1) {
        const double gl = (vals[2] - vals[0]) / (2 * L.h);
        const double gr = (vals[static_cast<std::size_t>(N - 1)] -
                           vals[static_cast<std::size_t>(N - 3)]) / (2 * L.h);
        const int sl = gl > 0 ? 1 : (gl < 0 ? -1 : 0);
        const int sr = gr > 0 ? 1 : (gr < 0 ? -1 : 0);
        if (sl == 0 || sr == 0)
            throw resolution_error(
                "local_morse_homology: the gradient vanishes on the audit ring; "
                "shrink the box or refine the grid");
        return (sr - sl) / 2;
    }

    // Counter-clockwise ring at offset one from the walls.
    std::vector<std::pair<int, int>> ring;
    for (int i = 1; i <= N - 2; ++i) ring.emplace_back(i, 1);
    for (int j = 2; j <= N - 2; ++j) ring.emplace_back(N - 2, j);
    for (int i = N - 3; i >= 1; --i) ring.emplace_back(i, N - 2);
    for (int j = N - 3; j >= 2; --j) ring.emplace_back(1, j);

    std::vector<double> gx(ring.size()), gy(ring.size());
    double gscale = 0.0;
    for (std::size_t k = 0; k < ring.size(); ++k) {
        const std::int64_t lin = ring[k].first * L.stride[0] + ring[k].second * L.stride[1];
        gx[k] = (vals[static_cast<std::size_t>(lin + L.stride[0])] -
                 vals[static_cast<std::size_t>(lin - L.stride[0])]) / (2 * L.h);
        gy[k] = (vals[static_cast<std::size_t>(lin + L.stride[1])] -
                 vals[static_cast<std::size_t>(lin - L.stride[1])]) / (2 * L.h);
        gscale = std::max(gscale, std::hypot(gx[k], gy[k]));
    }
    double total = 0.0;
    for (std::size_t k = 0; k < ring.size(); ++k) {
        const std::size_t nk = (k + 1) % ring.size();
        if (std::hypot(gx[k], gy[k]) < 1e-13 * gscale)
            throw resolution_error(
                "local_morse_homology: the gradient vanishes on the audit ring; "
                "shrink the box or refine the grid");
        double dth = std::atan2(gy[nk], gx[nk]) - std::atan2(gy[k], gx[k]);
        while (dth > kPi) dth -= 2 * kPi;
        while (dth < -kPi) dth += 2 * kPi;
        if (std::abs(dth) > 2.0)
            throw resolution_error(
                "local_morse_homology: the gradient turns too fast between ring "
                "nodes for the winding audit; refine the grid");
        total += dth;
    }
    const double turns = total / (2 * kPi);
    const long deg = std::lround(turns);
    if (std::abs(turns - static_cast<double>(deg)) > 0.1)
        throw resolution_error(
            "local_morse_homology: the boundary winding is not close to an "
            "integer; refine the grid or shrink the box");
    return static_cast<int>(deg);
}

// Subsample every other node; N == 1 (mod 4) keeps the result odd with the
// same center, which is what lets the half-resolution vote reuse the values.
std::vector<double> halve(const std::vector<double>& vals, const Lattice& fine,
                          const Lattice& coarse) {
    std::vector<double> out(static_cast<std::size_t>(coarse.nodes));
    int idx[4];
    for (std::int64_t lin = 0; lin < coarse.nodes; ++lin) {
        coarse.decode(lin, idx);
        std::int64_t src = 0;
        for (int d = 0; d < fine.m; ++d) src += 2LL * idx[d] * fine.stride[d];
        out[static_cast<std::size_t>(lin)] = vals[static_cast<std::size_t>(src)];
    }
    return out;
}

LocalHomologySignature homology_with_values(const ScalarField& f, const Vec& p,
                                            double box_radius, int grid,
                                            std::vector<double>* fine_values) {
    const int m = static_cast<int>(p.size());
    require(m >= 1 && m <= 4,
            "local_morse_homology: supported in dimensions 1 through 4");
    require(std::isfinite(box_radius) && box_radius > 0,
            "local_morse_homology: box_radius must be positive");
    const int N = grid == 0 ? default_homology_grid(m) : grid;
    require(N >= 9 && N % 4 == 1,
            "local_morse_homology: grid must be >= 9 nodes per axis and == 1 (mod 4)");

    const Lattice fine(m, N, p, box_radius);
    const Lattice coarse(m, (N + 1) / 2, p, box_radius);

    std::vector<double> vals = sample_field(f, fine);
    verify_isolation(vals, fine);

    const std::int64_t center = [&] {
        std::int64_t lin = 0;
        for (int d = 0; d < m; ++d) lin += ((N - 1) / 2) * fine.stride[d];
        return lin;
    }();
    const double c = vals[static_cast<std::size_t>(center)];
    const EpsChoice ec = choose_epsilon(vals, fine, c);

    // Primary answer at (full resolution, epsilon), then a four-way audit --
    // doubled and halved epsilon at both resolutions -- that must agree with it.
    std::vector<double> cvals = halve(vals, fine, coarse);
    const std::vector<int> primary =
        relative_betti(vals, m, fine.N, fine.stride, c, ec.eps, ec.a_empty);
    std::vector<std::vector<int>> votes;
    for (double scale : {2.0, 0.5}) {
        const double eps = ec.a_empty ? ec.eps : ec.eps * scale;
        votes.push_back(relative_betti(vals, m, fine.N, fine.stride, c, eps, ec.a_empty));
        votes.push_back(relative_betti(cvals, m, coarse.N, coarse.stride, c, eps, ec.a_empty));
    }
    for (std::size_t i = 0; i < votes.size(); ++i)
        if (votes[i] != primary)
            throw resolution_error(
                "local_morse_homology: the resolution/epsilon vote is split -- got " +
                render_betti(primary) + " at full resolution but " + render_betti(votes[i]) +
                " in vote " + std::to_string(i + 1) +
                " (epsilon doubled/halved, full/half resolution); refine the grid "
                "or shrink the box");

    if (m <= 2) {
        int chi = 0, sign = 1;
        for (int b : primary) {
            chi += sign * b;
            sign = -sign;
        }
        const int deg = boundary_degree(vals, fine);
        if (chi != deg)
            throw resolution_error(
                "local_morse_homology: signature " + render_betti(primary) +
                " has Euler characteristic " + std::to_string(chi) +
                " but the gradient winds " + std::to_string(deg) +
                " times around the box boundary -- the lattice cannot resolve "
                "the sublevel sectors here; rotate coordinates or shrink the box");
    }

    if (fine_values) *fine_values = std::move(vals);

    LocalHomologySignature sig;
    sig.betti = primary;
    sig.box_radius = box_radius;
    sig.epsilon = ec.eps;
    return sig;
}

}  // namespace

int LocalHomologySignature::euler() const {
    int chi = 0, sign = 1;
    for (int b : betti) {
        chi += sign * b;
        sign = -sign;
    }
    return chi;
}

int default_homology_grid(int m) {
    require(m >= 1 && m <= 4, "default_homology_grid: dimension must be 1..4");
    if (m <= 2) return 129;
    return m == 3 ? 49 : 21;
}

LocalHomologySignature local_morse_homology(const ScalarField& f, const Vec& p,
                                            double box_radius, int grid) {
    require(static_cast<bool>(f), "local_morse_homology: field is empty");
    return homology_with_values(f, p, box_radius, grid, nullptr);
}

bool lm2_maximum_test(const ScalarField& f, const Vec& p, double box_radius,
                      int grid) {
    require(static_cast<bool>(f), "lm2_maximum_test: field is empty");
    std::vector<double> vals;
    LocalHomologySignature sig = homology_with_values(f, p, box_radius, grid, &vals);
    const int m = static_cast<int>(p.size());
    const bool homology_max = sig.betti[static_cast<std::size_t>(m)] != 0;

    // Independent cross-check: a strict maximum dominates every other node.
    const int N = grid == 0 ? default_homology_grid(m) : grid;
    const Lattice fine(m, N, p, box_radius);
    std::int64_t center = 0;
    for (int d = 0; d < m; ++d) center += ((N - 1) / 2) * fine.stride[d];
    const double c = vals[static_cast<std::size_t>(center)];
    bool direct_max = true;
    for (std::int64_t lin = 0; lin < fine.nodes && direct_max; ++lin)
        if (lin != center) direct_max = vals[static_cast<std::size_t>(lin)] < c;

    if (homology_max != direct_max)
        throw resolution_error(
            std::string("lm2_maximum_test: the homology criterion says ") +
            (homology_max ? "maximum" : "no maximum") +
            " but the direct grid comparison says the opposite; refine the grid");
    return homology_max;
}

bool lm1_homotopy_check(const std::function<ScalarField(double)>& family,
                        const Vec& p, double box_radius,
                        const std::vector<double>& s_grid, int grid) {
    require(static_cast<bool>(family), "lm1_homotopy_check: family is empty");
    require(!s_grid.empty(), "lm1_homotopy_check: s_grid is empty");

    const int m = static_cast<int>(p.size());
    bool have_ref = false;
    LocalHomologySignature ref;
    for (double s : s_grid) {
        ScalarField f = family(s);
        require(static_cast<bool>(f),
                "lm1_homotopy_check: family returned an empty field at s = " +
                    std::to_string(s));

        // p must stay critical along the family; a drifting critical point is
        // a different (and here undetectable) situation, so refuse loudly.
        const double delta = 1e-6 * std::max(1.0, p.cwiseAbs().maxCoeff());
        double gmax = 0.0, vscale = 0.0;
        for (int d = 0; d < m; ++d) {
            Vec a = p, b = p;
            a(d) -= delta;
            b(d) += delta;
            const double fa = f(a), fb = f(b);
            gmax = std::max(gmax, std::abs(fb - fa) / (2 * delta));
            Vec far_pt = p;
            far_pt(d) += 0.5 * box_radius;
            vscale = std::max(vscale, std::abs(f(far_pt) - f(p)) / (0.5 * box_radius));
        }
        if (gmax > 1e-4 * std::max(vscale, 1e-9) + 1e-9)
            throw validation_error(
                "lm1_homotopy_check: p is not a critical point of the member at s = " +
                std::to_string(s));

        LocalHomologySignature sig;
        try {
            sig = local_morse_homology(f, p, box_radius, grid);
        } catch (const isolation_error& e) {
            throw isolation_error(
                "lm1_homotopy_check: isolation fails at s = " + std::to_string(s) +
                ": " + e.what());
        }
        if (!have_ref) {
            ref = sig;
            have_ref = true;
        } else if (sig != ref) {
            return false;
        }
    }
    return true;
}

// ----- relative autonomy ------------------------------------------------------

RelativeAutonomyCertificate relative_autonomy_check(const HamiltonianField& F,
                                                    const HamiltonianField& K,
                                                    const Vec& p, double T,
                                                    double box_radius,
                                                    int t_samples) {
    F.validate();
    K.validate();
    require(F.autonomous, "relative_autonomy_check: the reference F must be autonomous");
    require(F.n() == K.n(), "relative_autonomy_check: F and K live on different spaces");
    require(p.size() == F.dim(), "relative_autonomy_check: p has the wrong dimension");
    require(std::isfinite(T) && T > 0, "relative_autonomy_check: T must be positive");
    require(std::isfinite(box_radius) && box_radius > 0,
            "relative_autonomy_check: box_radius must be positive");
    require(t_samples >= 2, "relative_autonomy_check: need at least two time samples");
    if (!K.autonomous) {
        const double ratio = T / K.period;
        require(std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio),
                "relative_autonomy_check: T must be an integer multiple of the period "
                "of K, otherwise K is not T-periodic");
    }

    const int n = F.n();
    const Mat Jh = field_matrix(n);

    RelativeAutonomyCertificate cert;
    cert.T = T;
    cert.f_hessian_norm = spec_norm(F.hess(0.0, p));
    for (int j = 0; j < t_samples; ++j) {
        const double t = (j + 0.5) / t_samples * K.period;
        cert.k_hessian_norm = std::max(cert.k_hessian_norm, spec_norm(K.hess(t, p)));
    }

    // p must be a rest point of both fields, at every time for K.
    const double gtol = 1e-8 * std::max(1.0, cert.f_hessian_norm * box_radius);
    require(F.grad(0.0, p).cwiseAbs().maxCoeff() <= gtol,
            "relative_autonomy_check: p is not a critical point of F");
    for (int j = 0; j < t_samples; ++j) {
        const double t = (j + 0.5) / t_samples * K.period;
        require(K.grad(t, p).cwiseAbs().maxCoeff() <=
                    1e-8 * std::max(1.0, cert.k_hessian_norm * box_radius),
                "relative_autonomy_check: p is not a rest point of K at t = " +
                    std::to_string(t));
    }

    // Probe rings around p: fixed directions, four radii.  In the plane the
    // directions are uniform angles; in higher dimension a fixed-seed sphere
    // sample (the certificate must be reproducible run to run).
    std::vector<Vec> dirs;
    if (F.dim() == 2) {
        for (int a = 0; a < 24; ++a) {
            const double th = 2 * kPi * a / 24.0;
            Vec u(2);
            u << std::cos(th), std::sin(th);
            dirs.push_back(u);
        }
    } else {
        Rng rng(2861);
        for (int a = 0; a < 24; ++a) {
            Vec u = rng.gaussian_vec(F.dim());
            dirs.push_back(u / u.norm());
        }
    }

    const double dt = 1e-4 * K.period;
    double eps = 0.0;
    for (double frac : {0.25, 0.5, 0.75, 1.0}) {
        for (const Vec& u : dirs) {
            const Vec z = p + (frac * box_radius) * u;
            const Vec xf = Jh * F.grad(0.0, z);
            const double nf = xf.norm();
            if (nf <= 1e-10 * std::max(1.0, cert.f_hessian_norm * box_radius))
                throw isolation_error(
                    "relative_autonomy_check: the reference field vanishes at " +
                    render_vec(z) + " -- p is not an isolated rest point of F on this box");
            for (int j = 0; j < t_samples; ++j) {
                const double t = (j + 0.5) / t_samples * K.period;
                const Vec xk = Jh * K.grad(t, z);
                const Vec xdot = Jh * Vec(K.grad(t + dt, z) - K.grad(t - dt, z)) / (2 * dt);
                eps = std::max(eps, (xk - xf).norm() / nf);
                eps = std::max(eps, xdot.norm() / nf);
            }
        }
    }
    cert.epsilon_measured = eps;

    // K indistinguishable from F on the box: the flow is genuinely autonomous
    // near p and the sharper criterion T ||d2F_p|| < 2 pi applies.  Otherwise
    // the full smallness bound carries the measured epsilon.
    if (eps < 1e-12) {
        cert.lhs_of_bound = T * cert.f_hessian_norm;
        cert.passes = cert.lhs_of_bound < 2 * kPi;
    } else if (eps >= 1.0) {
        cert.lhs_of_bound = std::numeric_limits<double>::infinity();
        cert.passes = false;
    } else {
        cert.lhs_of_bound =
            T * (eps / (1.0 - eps) + cert.k_hessian_norm + cert.f_hessian_norm);
        cert.passes = cert.lhs_of_bound < 2 * kPi;
    }
    if (cert.passes) {
        std::ostringstream os;
        os << "local Floer homology of the T-periodic flow of K at p equals the "
              "local Morse homology of F at p shifted up by n = "
           << n << " (T = " << T << ", bound " << cert.lhs_of_bound << " < 2 pi)";
        cert.certified_label = os.str();
    }
    return cert;
}

// ----- symplectically degenerate maximum ---------------------------------------

namespace {

// The time-one map of H and its linearization, both read off one flow per
// base point.  The last result is memoized because the probe lattices ask
// for the forward image and the Jacobian at the same point back to back.
struct PeriodMap {
    const HamiltonianField* H;
    double step;
    std::shared_ptr<std::pair<Vec, FlowResult>> last =
        std::make_shared<std::pair<Vec, FlowResult>>();

    const FlowResult& at(const Vec& z) const {
        if (last->first.size() == z.size() && (last->first.array() == z.array()).all())
            return last->second;
        last->second = flow(*H, z, 0.0, H->period, step);
        last->first = z;
        return last->second;
    }
};

// Hessian of the reconstructed K_t at the fixed point, in chart coordinates,
// from the generating-form Hessian Q alone.  With lam = lambda(t):
//
//     d2(K_t)_0 = (1 - lambda') Q + lambda' B^T (dk^T Q dk) B,
//
// where dk is the differential at 0 of the mixed-coordinate change kappa^lam
// and B = exp((lam - t) X_Q) transports along the autonomous flow of the
// quadratic part.  Everything is evaluated at the fixed point, so no finite
// differences and no chart-ball excursions enter.
Mat kt_hessian_at_fixed_point(const Mat& Q, int n, double t, double lam,
                              double lamdot) {
    const Mat I = Mat::Identity(n, n);
    const Mat Q11 = Q.topLeftCorner(n, n);
    const Mat Q12 = Q.topRightCorner(n, n);
    const Mat S = (I + lam * Q12).partialPivLu().solve(I);
    Mat dk = Mat::Zero(2 * n, 2 * n);
    dk.topLeftCorner(n, n) = I;
    dk.bottomLeftCorner(n, n) = -S * lam * Q11;
    dk.bottomRightCorner(n, n) = S;
    const Mat core = dk.transpose() * Q * dk;
    const Mat B = Mat(((lam - t) * (field_matrix(n) * Q)).exp());
    Mat out = (1.0 - lamdot) * Q + lamdot * (B.transpose() * core * B);
    return 0.5 * (out + out.transpose());
}

}  // namespace

SdmReport sdm_certificate(const HamiltonianField& H, const Vec& p,
                          const std::vector<SymplecticFrame>& attempts,
                          const SdmOptions& opts) {
    H.validate();
    require(p.size() == H.dim(), "sdm_certificate: p has the wrong dimension");
    require(opts.flow_step > 0, "sdm_certificate: flow_step must be positive");
    require(opts.box_radius > 0, "sdm_certificate: box_radius must be positive");
    require(opts.t_samples >= 2, "sdm_certificate: need at least two time samples");
    require(opts.k1_grid >= 9 && opts.k1_grid % 4 == 1,
            "sdm_certificate: k1_grid must be >= 9 and == 1 (mod 4)");
    require(opts.unipotence_tol > 0 && opts.evidence_hessian > 0,
            "sdm_certificate: tolerances must be positive");
    require(!attempts.empty() || !opts.sigmas.empty(),
            "sdm_certificate: no frames to try (supply attempts or sigmas)");
    for (double s : opts.sigmas)
        require(s > 0 && s < 1, "sdm_certificate: sigmas must lie in (0, 1)");

    const int n = H.n();
    const int dim = 2 * n;

    // p must be a constant one-periodic orbit.
    double hscale = spec_norm(H.hess(0.0, p));
    for (int j = 0; j < 8; ++j) {
        const double t = j / 8.0 * H.period;
        require(H.grad(t, p).cwiseAbs().maxCoeff() <=
                    1e-9 * std::max(1.0, hscale * opts.box_radius),
                "sdm_certificate: p is not a constant orbit of H (the field does "
                "not vanish there at t = " + std::to_string(t) + ")");
    }

    PeriodMap pm{&H, opts.flow_step};
    auto fwd = [pm](const Vec& z) { return Vec(pm.at(z).end_point); };
    auto jac = [pm](const Vec& z) { return Mat(pm.at(z).monodromy.samples.back()); };

    const Mat Phi = jac(p);
    SdmReport report;
    {
        Eigen::EigenSolver<Mat> es(Phi);
        for (int i = 0; i < dim; ++i)
            report.spectral_gap = std::max(
                report.spectral_gap, std::abs(es.eigenvalues()(i) - std::complex<double>(1, 0)));
    }
    report.unipotent = is_unipotent(Phi, opts.unipotence_tol);
    if (!report.unipotent) return report;  // an immediate negative

    // The frame ladder: user-supplied frames verbatim, or squeezes of the
    // linearization down each sigma.
    std::vector<std::pair<SymplecticFrame, double>> frames;
    if (!attempts.empty()) {
        for (const SymplecticFrame& fr : attempts) {
            require(fr.C.rows() == dim, "sdm_certificate: frame dimension mismatch");
            frames.emplace_back(fr, 0.0);
        }
    } else {
        const Mat J = omega_matrix(n);
        for (double sigma : opts.sigmas) {
            SqueezeResult sq = squeeze_unipotent(Phi, sigma, opts.unipotence_tol);
            // chart w = Psi (z - p), i.e. the frame basis is Psi^{-1}
            Mat C = J.transpose() * sq.Psi.transpose() * J;
            frames.emplace_back(SymplecticFrame(std::move(C)), sigma);
        }
    }

    const TimeProfile profile = default_time_profile();
    const Mat Jh = field_matrix(n);
    // The reconstructed Hamiltonians are one-periodic whatever H.period is
    // (they encode the period map, not H itself), so the K1/K2/K3 samples
    // run over the unit interval.
    std::vector<std::vector<Mat>> dflows;  // per constructed frame, per t-sample
    std::vector<double> tgrid(opts.t_samples);
    for (int j = 0; j < opts.t_samples; ++j)
        tgrid[j] = (j + 0.5) / opts.t_samples;

    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
        SdmAttempt att;
        att.sigma = frames[fi].second;

        // Identical frame to the previous rung: the whole attempt is a repeat.
        if (fi > 0 && report.table.back().constructed &&
            (frames[fi].first.C - frames[fi - 1].first.C).cwiseAbs().maxCoeff() == 0.0) {
            att = report.table.back();
            att.sigma = frames[fi].second;
            att.note = "same frame as the previous attempt";
            report.table.push_back(att);
            dflows.push_back(dflows.back());
            continue;
        }

        const SymplecticFrame& frame = frames[fi].first;
        const Mat Cinv = frame.C.partialPivLu().solve(Mat::Identity(dim, dim));

        // Shrink the ambient trust ball until the map is a small C1
        // perturbation of the identity in this chart; strong squeezes magnify
        // the nonlinear terms, so the admissible ball shrinks with sigma.
        double radius = opts.box_radius;
        const double cnorm = spec_norm(frame.C);
        bool admitted = false;
        for (int halvings = 0; halvings < 12 && !admitted; ++halvings, radius *= 0.5) {
            double est = 0.0;
            const double rw = radius / cnorm;
            for (int a = 0; a < 8; ++a) {
                Vec w = Vec::Zero(dim);
                if (dim == 2) {
                    const double th = 2 * kPi * a / 8.0;
                    w << std::cos(th), std::sin(th);
                } else {
                    Rng rng(5407 + a);
                    w = rng.gaussian_vec(dim);
                    w /= w.norm();
                }
                const Vec z = p + frame.C * (rw * w);
                est = std::max(est, spec_norm(Cinv * jac(z) * frame.C - Mat::Identity(dim, dim)));
                est = std::max(est, (Cinv * Vec(fwd(z) - z)).norm() / rw);
            }
            admitted = est <= 0.1;
        }
        radius *= 2.0;  // undo the final loop increment
        if (!admitted) {
            att.note = "no ambient radius made the map near-identity in this chart";
            report.table.push_back(att);
            dflows.emplace_back();
            continue;
        }

        std::optional<GeneratingFunction> gf;
        HamiltonianField K;
        bool built = false;
        std::string why;
        for (int tries = 0; tries < 4 && !built; ++tries, radius *= 0.5) {
            try {
                NearIdentityMap nim = make_near_identity_map(fwd, jac, p, radius);
                gf.emplace(generating_function(nim, frame));
                K = hamiltonian_from_gf(*gf, profile, opts.flow_step);
                built = true;
            } catch (const error& e) {
                why = e.what();
            }
        }
        if (!built) {
            att.note = "generating function not admitted: " + why;
            report.table.push_back(att);
            dflows.emplace_back();
            continue;
        }
        att.constructed = true;

        // (K2): Hessian of K_t at the fixed point, in the frame, in closed
        // form from the generating-form Hessian.
        const Mat Q = gf->hess(Vec::Zero(dim));
        for (double t : tgrid) {
            const Mat Ht =
                kt_hessian_at_fixed_point(Q, n, t, profile.value(t), profile.slope(t));
            att.hessian_norm = std::max(att.hessian_norm, spec_norm(Ht));
        }

        // (K1): strict local maximum of K_t at p, tested in chart coordinates
        // so the box respects the frame geometry.
        att.k1_pass = true;
        const double box_w =
            0.9 * gf->radius / std::sqrt(static_cast<double>(dim)) / 2.0;
        for (double t : tgrid) {
            ScalarField f_t = [&K, &frame, &p, t](const Vec& w) {
                return K.eval(t, Vec(p + frame.C * w));
            };
            bool ok = false;
            try {
                ok = lm2_maximum_test(f_t, Vec::Zero(dim), box_w, opts.k1_grid);
            } catch (const numerical_error& e) {
                att.note = "maximum test undecided at t = " + std::to_string(t) +
                           ": " + e.what();
            }
            if (!ok) {
                att.k1_pass = false;
                break;
            }
        }

        // (K3): the linearized isotopies d(phi_K^t)_p, reconstructed at the
        // linear level (they depend only on the Lagrangian splitting, so
        // frames sharing it must agree to roundoff).
        const Mat Phi_chart = Cinv * Phi * frame.C;
        const Mat Qlin = linear_gf(Phi_chart, standard_splitting(n));
        std::vector<double> lams;
        for (double t : tgrid) lams.push_back(profile.value(t));
        std::vector<double> grid{0.0};
        for (double l : lams)
            if (l > grid.back() + 1e-15) grid.push_back(l);
        SymplecticPath interp =
            grid.size() > 1
                ? linear_interpolated_flow(Phi_chart, standard_splitting(n), grid)
                : SymplecticPath{};
        std::vector<Mat> dflow_i;
        for (std::size_t j = 0; j < tgrid.size(); ++j) {
            Mat M = Mat::Identity(dim, dim);
            if (lams[j] > 0.0) {
                std::size_t gi = 0;
                while (gi + 1 < grid.size() && grid[gi] + 1e-15 < lams[j]) ++gi;
                M = interp.samples[gi];
            }
            const Mat B = Mat((((tgrid[j] - lams[j]) * (Jh * Qlin))).exp());
            dflow_i.push_back(Mat(frame.C * B * M * Cinv));
        }
        for (const std::vector<Mat>& other : dflows) {
            if (other.empty()) continue;
            for (std::size_t j = 0; j < tgrid.size(); ++j)
                att.k3_residual = std::max(
                    att.k3_residual, (dflow_i[j] - other[j]).cwiseAbs().maxCoeff());
        }
        dflows.push_back(std::move(dflow_i));
        report.table.push_back(att);
    }

    // Evidence, not proof: every frame admitted, Hessians non-increasing down
    // to the threshold, the maximum test green throughout, and the linearized
    // isotopies consistent across frames.
    bool evidence = !report.table.empty();
    double prev = std::numeric_limits<double>::infinity();
    for (const SdmAttempt& att : report.table) {
        evidence = evidence && att.constructed && att.k1_pass &&
                   att.k3_residual <= 1e-8 &&
                   att.hessian_norm <= prev + std::max(1e-10, 0.05 * prev);
        prev = att.hessian_norm;
    }
    evidence = evidence && report.table.back().hessian_norm <= opts.evidence_hessian;
    report.evidence = evidence;
    return report;
}

// ----- ingestion and serialization ---------------------------------------------

ScalarField scalar_field_from_expression(const std::string& text, int m) {
    require(m >= 1, "scalar_field_from_expression: dimension must be positive");
    std::vector<std::string> vars;
    for (int i = 1; i <= m; ++i) vars.push_back("x" + std::to_string(i));
    auto e = std::make_shared<Expression>(text, vars);
    return [e, m](const Vec& q) {
        require(q.size() == m, "scalar field: point has the wrong dimension");
        return e->eval(q);
    };
}

ScalarField scalar_field_from_grid_file(const std::string& path, int* dims_out) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "scalar_field_from_grid_file: cannot open " + path);

    auto read_header = [&](const std::string& key) {
        std::string word;
        require(static_cast<bool>(in >> word) && word == key,
                "scalar_field_from_grid_file: expected header line '" + key + " ...'");
    };

    read_header("dims");
    std::string line;
    std::getline(in, line);
    std::istringstream ds(line);
    std::vector<int> dims;
    for (int v; ds >> v;) dims.push_back(v);
    const int m = static_cast<int>(dims.size());
    require(m >= 1 && m <= 4, "scalar_field_from_grid_file: need 1 to 4 dims");
    for (int d : dims)
        require(d >= 2, "scalar_field_from_grid_file: each axis needs >= 2 nodes");

    auto read_vec = [&](const std::string& key) {
        read_header(key);
        std::getline(in, line);
        std::istringstream vs(line);
        std::vector<double> v;
        for (double x; vs >> x;) v.push_back(x);
        require(static_cast<int>(v.size()) == m,
                "scalar_field_from_grid_file: '" + key + "' must list one value per axis");
        return v;
    };
    const std::vector<double> origin = read_vec("origin");
    const std::vector<double> spacing = read_vec("spacing");
    for (double s : spacing)
        require(s > 0, "scalar_field_from_grid_file: spacings must be positive");

    std::int64_t total = 1;
    for (int d : dims) total *= d;
    auto values = std::make_shared<std::vector<double>>();
    values->reserve(static_cast<std::size_t>(total));
    for (double x; in >> x;) values->push_back(x);
    require(static_cast<std::int64_t>(values->size()) == total,
            "scalar_field_from_grid_file: expected " + std::to_string(total) +
                " values, found " + std::to_string(values->size()));

    std::vector<std::int64_t> stride(m, 1);
    for (int d = m - 2; d >= 0; --d) stride[d] = stride[d + 1] * dims[d + 1];

    if (dims_out) *dims_out = m;
    return [=](const Vec& q) -> double {
        require(q.size() == m, "grid field: point has the wrong dimension");
        // multilinear interpolation on the enclosing cell
        int base[4];
        double frac[4];
        for (int d = 0; d < m; ++d) {
            const double u = (q(d) - origin[d]) / spacing[d];
            require(u >= -1e-9 && u <= dims[d] - 1 + 1e-9,
                    "grid field: point lies outside the grid domain");
            int i = static_cast<int>(std::floor(u));
            i = std::max(0, std::min(i, dims[d] - 2));
            base[d] = i;
            frac[d] = u - i;
        }
        double acc = 0.0;
        for (int corner = 0; corner < (1 << m); ++corner) {
            double w = 1.0;
            std::int64_t lin = 0;
            for (int d = 0; d < m; ++d) {
                const int bit = (corner >> d) & 1;
                w *= bit ? frac[d] : 1.0 - frac[d];
                lin += (base[d] + bit) * stride[d];
            }
            acc += w * (*values)[static_cast<std::size_t>(lin)];
        }
        return acc;
    };
}

std::string signature_json(const LocalHomologySignature& s) {
    nlohmann::json j;
    j["type"] = "local-homology-signature";
    j["betti"] = s.betti;
    j["box_radius"] = s.box_radius;
    j["epsilon"] = s.epsilon;
    j["euler"] = s.euler();
    return j.dump(2);
}

}  // namespace conley
