// conley-lab: sampled paths in Sp(2n) and their integer invariants --
// Maslov winding of loops, Conley-Zehnder index of nondegenerate paths,
// and per-iterate index profiles.
//
// Sign conventions (they all follow from the choices in linalg.hpp):
// under z = x + iy the orthogonal-symplectic matrices are exactly the
// block matrices [A B; -B A], acting as multiplication by A - iB, and the
// counter-clockwise rotation R(2*pi*t) has det_C winding +1.  The
// Conley-Zehnder index is normalized so that the linearized flow of a
// Hamiltonian with a small negative-definite Hessian on R^{2n} gets +n
// (equivalently: clockwise loops count positively, which is what makes
// index grow along iterations of orbits sitting near a nondegenerate
// maximum).
#pragma once

#include "conley/common.hpp"

#include <vector>

namespace conley {

// A path [0, period] -> Sp(2n), stored as samples.  Paths produced by
// linearized flows start at the identity; loops close up to roundoff.
// Sampling must be fine enough that the unitary-determinant angle moves
// by less than pi/2 between consecutive samples (>= 64 samples per full
// rotation of any eigenvalue pair is the documented contract); coarser
// input fails with resolution_error rather than returning a wrong integer.
struct SymplecticPath {
    std::vector<double> times;  // strictly increasing
    std::vector<Mat> samples;   // same length, each 2n x 2n
    bool is_loop = false;
    double period = 1.0;

    int n() const;
    void validate() const;  // shapes, ordering, closure when is_loop
};

// exp(t X) for t in [0, T], sampled uniformly (count points including both
// endpoints).  X must be an infinitesimally symplectic (Hamiltonian) matrix;
// pass mark_loop when exp(T X) = I.
SymplecticPath sample_linear_flow(const Mat& X, double T, int count,
                                  bool mark_loop = false);

// a followed by t -> b(t) * a_end.  b must start at the identity, so that
// the junction is continuous; for a based loop a this is the usual
// catenation a # b.
SymplecticPath concatenate(const SymplecticPath& a, const SymplecticPath& b);

// The T-fold iterate: segment k is t -> path(t) * M1^k, the linearization
// of the T-th return map along a periodic orbit.
SymplecticPath iterate_path(const SymplecticPath& path, int T);

// Time reversal t -> M(period - t).
SymplecticPath reverse_path(const SymplecticPath& path);

// Winding number of det_C of the unitary polar part along a loop.
// Additive under catenation, negates under time reversal, invariant under
// sampling refinement.  Throws validation_error for non-loops and
// resolution_error when the angle jumps by more than pi/2 between samples.
int maslov_loop(const SymplecticPath& path);

// Conley-Zehnder index of a path starting at I whose endpoint has no
// eigenvalue 1.  Computed as the total rotation of det_C through the path
// followed by a normalization tail inside {det(M - I) != 0}: the endpoint
// spectrum is deformed eigenvalue-by-eigenvalue (elliptic angles to pi,
// hyperbolic moduli to 2 or 1/2, Krein quartets to the unit circle), and a
// final symplectic conjugation straightens the result onto a diagonal
// normal form whose unitary determinant is +-1.  Endpoints with an
// eigenvalue within 1e-8 of 1 raise degeneracy_error carrying the gap.
int cz_index(const SymplecticPath& path);

struct IterationEntry {
    int T;
    bool degenerate;  // endpoint of the T-fold path has an eigenvalue ~1
    int index;        // cz_index of the T-fold path; valid when !degenerate
    double gap;       // min |eig - 1| at the T-fold endpoint (diagnostic)
};

// Indices of the T-fold iterates for T = 1..max_T.  Degenerate iterates are
// flagged, never thrown, so the Salamon-Zehnder dichotomy (linear growth
// versus |index| <= n-1) can be read off empirically even across resonances.
std::vector<IterationEntry> iteration_profile(const SymplecticPath& path,
                                              int max_T);

}  // namespace conley
