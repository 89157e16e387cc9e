// conley-lab: generating functions of near-identity symplectic maps and the
// reconstruction of one-periodic Hamiltonians from them.
//
// A symplectomorphism phi with phi(p) = p and ||phi - id||_C1 small enough is
// encoded by a single scalar function F of the mixed coordinates (X, y),
// where (X, Y) = phi(x, y):
//
//         X - x = -d2F(X, y),          Y - y = d1F(X, y),
//
// normalized by F(p) = 0 (d1, d2 are the x- and y-gradients).  Critical
// points of F are exactly the fixed points of phi.  The linear family
// F_t = tF interpolates the identity to phi; reparametrizing that family in
// time turns it into a Hamiltonian K, one-periodic in t, whose time-one flow
// is phi again and which vanishes at p for all t.  That reconstruction is
// the normal-form engine of the toolkit: it converts fixed-point data of a
// return map into orbit data of a genuine periodic Hamiltonian, at the cost
// of one implicit solve per evaluation.
//
// Everything here lives in the chart of a symplectic frame around the fixed
// point; the chart sends z to w = C^{-1}(z - p), all generating-function
// callables take chart coordinates, and reconstructed Hamiltonians are
// translated back to ambient coordinates before they are returned.
#pragma once

#include "conley/common.hpp"
#include "conley/hamiltonian.hpp"
#include "conley/linalg.hpp"
#include "conley/sympath.hpp"

#include <functional>
#include <string>
#include <vector>

namespace conley {

// A symplectic map given pointwise near an isolated fixed point.  The
// c1_distance field is the measured max of |phi(z) - z| and ||dphi(z) - I||_2
// over the probe lattice on the ball of the given radius; the solver refuses
// to build generating functions unless it is below 0.2 (in the chart where
// the construction runs), which keeps every Newton iteration in this module
// inside its contraction region on the probe class we test.
struct NearIdentityMap {
    std::function<Vec(const Vec&)> forward;   // z -> phi(z)
    std::function<Mat(const Vec&)> jacobian;  // z -> dphi(z)
    Vec fixed_point;                          // p with phi(p) = p
    double radius = 1.0;                      // trust ball B_radius(p)
    double c1_distance = 0.0;                 // measured ||phi - id||_C1

    int n() const { return static_cast<int>(fixed_point.size()) / 2; }
    void validate() const;
};

// Measures c1_distance on the probe lattice (33 points per axis for n <= 2,
// 4096 deterministic ball samples otherwise) and checks that the Jacobian is
// symplectic to 1e-6 on the same points; throws validation_error when it is
// not, or when the claimed fixed point moves.
NearIdentityMap make_near_identity_map(std::function<Vec(const Vec&)> forward,
                                       std::function<Mat(const Vec&)> jacobian,
                                       const Vec& fixed_point, double radius);

// The generating function F in the chart of `frame` around `center`.  The
// callables take the mixed point (X, y) in chart coordinates; eval is the
// radial line integral of (d1F, d2F) from the origin (so F(0) = 0 exactly),
// grad comes straight from the implicit solve, and hess is assembled in
// closed form from the Jacobian blocks of the map, so no finite differences
// enter anywhere.  gf2_constant records the measured ratio
// ||F||_C2 / ||phi - id||_C1 in the chart (the C2 norm is taken over the
// probe lattice, |F| itself over a 9-per-axis sublattice to keep the
// quadratures affordable); closedness_residual is the worst triangle loop
// integral of dF seen by the symplecticity audit.
struct GeneratingFunction {
    std::function<double(const Vec&)> eval;
    std::function<Vec(const Vec&)> grad;
    std::function<Mat(const Vec&)> hess;
    SymplecticFrame frame;
    Vec center;                       // p in ambient coordinates
    double radius = 1.0;              // chart ball radius
    double c1_distance = 0.0;         // ||phi - id||_C1 measured in the chart
    double closedness_residual = 0.0;
    double gf2_constant = 0.0;

    int n() const { return frame.n(); }
};

// Builds F for phi in the given chart.  Per mixed point (X, y) the old
// x is recovered by a Newton solve of phi_x(x, y) = X started at x = X,
// after which d1F = Y - y and d2F = x - X; failure to converge throws
// numerical_error (solvability).  Closedness of (d1F, d2F) -- equivalent to
// phi being symplectic -- is audited on random triangle loops; a residual
// above 1e-6 throws validation_error (non-symplectic input).  The chart
// radius is phi.radius / ||C||_2 so the chart ball stays inside the trust
// ball of phi.
GeneratingFunction generating_function(const NearIdentityMap& phi,
                                       const SymplecticFrame& frame);

// The inverse construction, mainly for round trips: the map whose generating
// function is the given F.  Forward evaluation solves X = x - d2F(X, y) by
// Newton and sets Y = y + d1F(X, y); the Jacobian is assembled from the
// implicit function theorem.  The result is measured and validated by
// make_near_identity_map, so feeding it back into generating_function is
// always legal when the distances stay below the threshold.
NearIdentityMap generated_map(std::function<Vec(const Vec&)> gradF,
                              std::function<Mat(const Vec&)> hessF,
                              const SymplecticFrame& frame, const Vec& center,
                              double radius);
NearIdentityMap generated_map(const GeneratingFunction& F);

// The standard splitting R^{2n} = span(x) (+) span(y).
LagrangianSplitting standard_splitting(int n);

// Quadratic generating form of a linear symplectic map, in the adapted
// coordinates of the splitting (C = [L | L'] must be a symplectic basis).
// With P(M) the matrix M with its y-rows replaced by the identity, the
// relation
//
//         Phi - I = X_Q P(Phi)
//
// determines X_Q uniquely whenever P(Phi) is invertible, and Q is the
// symmetric matrix with X_Q = J_H Q.  Returned in adapted coordinates:
// Q(w) = 1/2 w^T Q w generates C^{-1} Phi C.  Singular P(Phi) throws
// degeneracy_error carrying its smallest singular value.
Mat linear_gf(const Mat& Phi, const LagrangianSplitting& split);

// The linear interpolation from I to Phi through generating forms: per
// sample t the matrix solving M = I + t X_Q P(M), which is affine in M, so
// each sample costs one linear solve ((I - t X_Q E_x) M = I + t X_Q E_y
// with E_x, E_y the coordinate projectors).  Samples are returned in the
// ambient coordinates (conjugated back out of the splitting), start at the
// identity, and are checked symplectic to 1e-8.  t_samples must increase
// strictly from 0; the path period is t_samples.back(), which is 1 for the
// full interpolation.
SymplecticPath linear_interpolated_flow(const Mat& Phi,
                                        const LagrangianSplitting& split,
                                        const std::vector<double>& t_samples);

// Time reparametrization used to close the family F_t = tF up into a
// one-periodic Hamiltonian: monotone from 0 to 1, identically 0 near t = 0
// and identically 1 near t = 1, so the reconstructed K_t equals F pointwise
// on both plateaus.
struct TimeProfile {
    std::function<double(double)> value;  // lambda(t)
    std::function<double(double)> slope;  // lambda'(t)
};

// The library default: the quintic smoothstep s(u) = u^3 (10 - 15u + 6u^2)
// composed with itself, run over the core interval [1/10, 9/10] and clamped
// flat outside.  Monotone, C^2 at the joins (the first four derivatives of
// s o s vanish at the ends), max slope ~ 4.4.
TimeProfile default_time_profile();

// The one-periodic Hamiltonian K with time-one flow equal to the map that F
// generates and K_t(p) = 0 for every t.  Construction: the family F_t = tF
// generates an isotopy phi^t whose Hamiltonian is Kt_t = F o kappa^t, where
// kappa^t sends (X, Y_t) to the mixed point (X, y); reparametrizing by
// lambda and flowing the gap with F itself gives
//
//     K_t(z) = (1 - lambda'(t)) F(z)
//              + lambda'(t) Kt_{lambda(t)}( phi_F^{lambda(t) - t}(z) ),
//
// which equals F on the plateaus of lambda and has time-one flow phi.  The
// inner transport integrates the autonomous field of F with step at most
// flow_step; gradients are exact through the chain rule (the flow
// monodromy supplies dphi_F), Hessians are symmetrized central differences
// of the gradient.  Evaluations that leave the chart ball throw
// numerical_error with a suggested smaller radius to rebuild with.
HamiltonianField hamiltonian_from_gf(const GeneratingFunction& F,
                                     const TimeProfile& profile = default_time_profile(),
                                     double flow_step = 1e-2);

// Measured quality report for a reconstruction, all sups taken over a
// deterministic sample of the chart ball (scaled by radius_fraction) and a
// uniform time grid.  hess_ratio is max_t ||d2(K_t)_p|| / ||d2F_p||;
// kf1_ratio is sup ||X_K - X_F|| / ||X_F||; kf2_ratio is
// sup ||dX_K/dt|| / ||X_F|| (time derivative by central differences).
// These are diagnostics -- the theory bounds them by
// O(||d2F_p||) + O_phi(r) -- so they are reported, never asserted.
struct ReconstructionReport {
    double hess_ratio = 0.0;
    double kf1_ratio = 0.0;
    double kf2_ratio = 0.0;
};

ReconstructionReport reconstruction_report(const GeneratingFunction& F,
                                           const HamiltonianField& K,
                                           int time_samples = 9,
                                           int space_samples = 48,
                                           double radius_fraction = 0.5);

// JSON export: frame, center, radius, the recorded constants, and F sampled
// on the per-axis lattice restricted to the chart ball.  Self-describing
// ("points" / "values" arrays); per_axis^(2n) evaluations, each a radial
// quadrature, so keep per_axis modest for n = 2.
std::string generating_function_json(const GeneratingFunction& F,
                                     int per_axis = 7);

}  // namespace conley
