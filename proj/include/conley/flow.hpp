// conley-lab: symplectic time stepping for Hamiltonian fields.  One scheme
// only -- the implicit midpoint rule -- integrated together with its exact
// variational equation, so the reported monodromy is symplectic to roundoff
// no matter how long the trajectory runs.
#pragma once

#include "conley/hamiltonian.hpp"
#include "conley/sympath.hpp"

namespace conley {

struct FlowResult {
    Vec end_point;             // lift in the universal cover (never reduced)
    SymplecticPath monodromy;  // linearized flow; times are elapsed |t - t0|
    int steps = 0;
    double energy_drift = 0.0;  // autonomous fields: max |H(z_k) - H(z_0)|
};

// Integrates z' = X_H(t, z) from (t0, z0) to t1 with the implicit midpoint
// rule at fixed step size (global error O(step^2)).  step must divide
// |t1 - t0| within rounding; t1 < t0 integrates backward.  Each step solves
// the midpoint equation by Newton iteration (tolerance 1e-12, at most 20
// iterations); divergence -- the usual symptom of a stiff field at this step
// size -- raises numerical_error with the time and residual in the message.
// The monodromy is advanced with the scheme's own linearization, a Cayley
// transform of J_H Hess H at the converged midpoint, hence exactly
// symplectic up to roundoff.
FlowResult flow(const HamiltonianField& H, const Vec& z0, double t0,
                double t1, double step);

}  // namespace conley
