// conley-lab: local Morse homology over Z2 and the certificates built on it.
//
// The homology of an isolated critical point p of f is computed as the
// relative cubical homology of the sublevel pair
//
//     ( {f <= f(p)} ∩ B ,  {f <= f(p) - eps} ∩ B )
//
// on a box B around p, with Z2 coefficients.  The answer is accepted only
// when it is stable: two grid resolutions and two epsilons must agree,
// otherwise the computation refuses with a resolution error.  A strict
// local maximum in dimension m shows up as Z2 in degree m, a nondegenerate
// index-k point as Z2 in degree k.
#pragma once

#include "conley/common.hpp"
#include "conley/hamiltonian.hpp"
#include "conley/linalg.hpp"

#include <functional>
#include <string>
#include <vector>

namespace conley {

// A scalar field sampled pointwise; dimension is fixed by the caller.
using ScalarField = std::function<double(const Vec&)>;

// The box contains a critical point other than the advertised one (or a
// whole critical set).  Raised by the grid re-verification that guards
// every homology computation.
class isolation_error : public numerical_error {
public:
    using numerical_error::numerical_error;
};

struct LocalHomologySignature {
    std::vector<int> betti;  // Z2 ranks in degrees 0..m
    double box_radius = 0.0;
    double epsilon = 0.0;    // the base epsilon of the accepted vote

    int euler() const;  // alternating sum of the ranks
    bool operator==(const LocalHomologySignature& o) const { return betti == o.betti; }
    bool operator!=(const LocalHomologySignature& o) const { return !(*this == o); }
};

// Default nodes per axis by dimension: 129 up to the plane, then 49 and 21.
// Dimensions above four are not supported (cell counts grow as (2N)^m).
int default_homology_grid(int m);

// Z2 Betti vector of the critical point p of f on the box of the given
// radius.  grid = 0 picks the dimension default; otherwise the per-axis node
// count must be == 1 (mod 4) so the half-resolution vote keeps p on-grid.
// Epsilon is a quarter of the gap between f(p) and the largest strictly
// smaller grid value; the vote reruns with half the epsilon and half the
// resolution.  A second critical point detected on the grid (every component
// of the gradient changes sign or vanishes across one cell away from p)
// raises isolation_error; an unstable vote raises resolution_error.
LocalHomologySignature local_morse_homology(const ScalarField& f, const Vec& p,
                                            double box_radius, int grid = 0);

// True iff the top Betti number is nonzero, which for an isolated critical
// point happens exactly when p is a strict local maximum.  Cross-checked
// against the direct grid comparison f(q) < f(p); disagreement raises
// resolution_error.
bool lm2_maximum_test(const ScalarField& f, const Vec& p, double box_radius,
                      int grid = 0);

// True iff the homology signature is constant along the family s -> f_s over
// the s-grid.  Each member must keep p critical and isolated in the *same*
// box -- isolation on a fixed box for all s is exactly uniform isolation, and
// losing it raises isolation_error naming the offending s (families like
// s x^2 + (1-s) x^3 fail this way rather than comparing homologies of a
// non-uniformly isolated point).
bool lm1_homotopy_check(const std::function<ScalarField(double)>& family,
                        const Vec& p, double box_radius,
                        const std::vector<double>& s_grid, int grid = 0);

// ----- relative autonomy -----------------------------------------------------

// Certificate that a T-periodic Hamiltonian K is close enough to an
// autonomous reference F near p for the local Floer homology of the
// T-iterated flow to be read off from the local Morse homology of F.
struct RelativeAutonomyCertificate {
    double epsilon_measured = 0.0;  // sup of |X_K - X_F|/|X_F| and |dX_K/dt|/|X_F|
    double k_hessian_norm = 0.0;    // max_t |d2(K_t)_p|
    double f_hessian_norm = 0.0;    // |d2F_p|
    double T = 0.0;
    double lhs_of_bound = 0.0;      // compared against 2*pi
    bool passes = false;
    std::string certified_label;    // set only when passes
};

// Measures epsilon as the supremum over a probe set in the punctured box
// (rings of radius 1/4, 1/2, 3/4, 1 of box_radius) and t-samples of both
// ratios |X_{K_t} - X_F|/|X_F| and |dX_{K_t}/dt|/|X_F|, then evaluates the
// smallness bound
//
//     T ( eps/(1-eps) + max_t |d2(K_t)_p| + |d2F_p| ) < 2*pi.
//
// When K is F itself (eps measures exactly zero) the sharper autonomous
// criterion T |d2F_p| < 2*pi is used and reported as lhs_of_bound.  F must
// be autonomous with an isolated zero of X_F at p (a vanishing probe raises
// isolation_error); K must be T-periodic (T an integer multiple of K.period
// unless K is autonomous).
RelativeAutonomyCertificate relative_autonomy_check(const HamiltonianField& F,
                                                    const HamiltonianField& K,
                                                    const Vec& p, double T,
                                                    double box_radius,
                                                    int t_samples = 16);

// ----- symplectically degenerate maximum -------------------------------------

struct SdmOptions {
    std::vector<double> sigmas{1e-1, 1e-2, 1e-3};  // squeeze ladder for frames
    double box_radius = 0.5;   // ambient probe/chart radius around p
    double flow_step = 0.02;   // step for the time-one map and its monodromy
    int t_samples = 16;        // samples per period for K1/K2/K3
    int k1_grid = 17;          // per-axis nodes for the maximum test
    double unipotence_tol = 1e-3;   // spectral gap allowed around eigenvalue 1
    double evidence_hessian = 1e-3; // threshold the table must reach
};

struct SdmAttempt {
    double sigma = 0.0;          // squeeze target (0 for user-supplied frames)
    bool constructed = false;    // generating function admitted this frame
    double hessian_norm = 0.0;   // max_t |d2(K_t)_p| in the frame
    bool k1_pass = false;        // strict local maximum of K_t at p, all t
    double k3_residual = 0.0;    // worst mismatch of d(phi_K^t)_p vs earlier frames
    std::string note;            // why construction or a check failed, if it did
};

struct SdmReport {
    bool unipotent = false;
    double spectral_gap = 0.0;   // max |eig(dphi^1_p) - 1|
    std::vector<SdmAttempt> table;
    bool evidence = false;       // nonincreasing Hessians reaching the threshold,
                                 // every K1 true, every K3 residual < 1e-8
};

// Evidence table for a symplectically degenerate maximum at the constant
// one-periodic orbit p of H.  The time-one map and its linearization come
// from the flow; if the linearization is not unipotent the report is an
// immediate negative.  Otherwise, per frame (user-supplied, or built by
// squeezing the linearization to each sigma in the ladder): the map is
// re-expressed in the frame, its generating function is measured, the
// Hamiltonian is rebuilt, and the report records the measured Hessian norm
// at p, the per-time-sample maximum test, and the linear-level consistency
// of d(phi_K^t)_p across frames (which depends only on the Lagrangian
// splitting, so frames sharing it must agree to roundoff).
SdmReport sdm_certificate(const HamiltonianField& H, const Vec& p,
                          const std::vector<SymplecticFrame>& attempts = {},
                          const SdmOptions& opts = {});

// ----- ingestion and serialization -------------------------------------------

// Scalar field parsed from an expression in x1..xm.
ScalarField scalar_field_from_expression(const std::string& text, int m);

// Scalar field from a grid file, evaluated by multilinear interpolation.
// Format: three header lines ("dims N1..Nm", "origin o1..om",
// "spacing s1..sm") followed by the row-major values.
ScalarField scalar_field_from_grid_file(const std::string& path, int* dims_out = nullptr);

std::string signature_json(const LocalHomologySignature& s);

}  // namespace conley
