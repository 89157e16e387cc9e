// conley-lab: time-periodic Hamiltonian fields on R^{2n} and on the unit
// torus T^{2n} = R^{2n}/Z^{2n}, with the operations that act on fields
// directly: composition K#H, iteration H^(T), and the action functional of
// sampled loops.  Time stepping lives in flow.hpp.
//
// Conventions (fixed once here and in linalg.hpp, used verbatim everywhere):
// omega = sum_i dx_i ^ dy_i = u^T J v with J = omega_matrix(n), and the
// Hamiltonian field solves i_{X_H} omega = -dH, which gives
//
//     X_H = J_H grad H,   J_H = field_matrix(n) = -J,
//
// so H = (x^2 + y^2)/2 on R^2 rotates counter-clockwise ((1,0) reaches (0,1)
// at t = pi/2) and H = y translates by (-1,0) per unit time.  The action of
// a contractible loop is A(gamma) = loop integral of y dx plus the time
// integral of H along gamma; a counter-clockwise circle of radius r with
// H = 0 has action -pi r^2.
#pragma once

#include "conley/common.hpp"

#include <functional>
#include <string>
#include <vector>

namespace conley {

struct PhaseSpace {
    enum class Kind { euclidean, torus };
    Kind kind = Kind::euclidean;
    int n = 1;  // degrees of freedom; phase dimension is 2n

    static PhaseSpace euclidean(int n) { return {Kind::euclidean, n}; }
    // The torus is R^{2n} modulo the unit lattice Z^{2n}.  Integration
    // always happens in the universal cover; reduction mod 1 only enters
    // where points are compared or reported.
    static PhaseSpace torus(int n) { return {Kind::torus, n}; }
};

// Componentwise reduction into [0,1) on the torus; identity on R^{2n}.
Vec reduce_point(const PhaseSpace& space, Vec z);
// a - b using the nearest lift of a to b on the torus (components in
// [-1/2, 1/2)); plain difference on R^{2n}.
Vec lift_difference(const PhaseSpace& space, const Vec& a, const Vec& b);

// A time-periodic Hamiltonian H_t(z).  grad and hess are with respect to z
// and must be exact enough to agree with finite differences of eval (the
// builders below all supply closed-form derivatives).  Fields on the torus
// must be Z-periodic in every coordinate they are meant to descend in; the
// integrator itself never reduces, so partially periodic cylinders work too.
struct HamiltonianField {
    std::function<double(double, const Vec&)> eval;
    std::function<Vec(double, const Vec&)> grad;
    std::function<Mat(double, const Vec&)> hess;
    double period = 1.0;
    PhaseSpace phase_space;
    bool autonomous = false;  // set by builders; enables energy-drift tracking

    int n() const { return phase_space.n; }
    int dim() const { return 2 * phase_space.n; }
    void validate() const;
};

// ----- builders ------------------------------------------------------------

HamiltonianField zero_field(int n, double period = 1.0);

// H = 1/2 z^T Q z for symmetric Q; the linearized flow is exp(t J_H Q).
HamiltonianField quadratic_field(const Mat& Q, double period = 1.0);

// H = F(rho) with rho = |z|^2 / 2.  dF and d2F are the exact profile
// derivatives; orbits are circles traversed with angular velocity F'(rho)
// (counter-clockwise when F' > 0).
HamiltonianField radial_field(std::function<double(double)> F,
                              std::function<double(double)> dF,
                              std::function<double(double)> d2F, int n,
                              double period = 1.0);

// Field parsed from an expression in x1..xn, y1..yn, t (x_1, y_1 spellings
// are accepted too).  Time is wrapped into [0, period) before evaluation,
// which enforces the periodicity invariant for free; gradients and Hessians
// are symbolic.  The field is flagged autonomous when the text never
// mentions t.
HamiltonianField expression_field(const std::string& text, int n,
                                  double period = 1.0,
                                  PhaseSpace::Kind kind = PhaseSpace::Kind::euclidean);

// ----- composition and iteration -------------------------------------------

// (K#H)_t = K_t + H_t o (phi_K^t)^{-1}; the flow of K#H is phi_K^t o phi_H^t.
// The inverse flow is evaluated by integrating K backward with step size at
// most `step` (adjusted to divide each interval), so the returned field costs
// one short integration per evaluation.  Periods must match.
HamiltonianField compose(const HamiltonianField& K, const HamiltonianField& H,
                         double step = 1e-3);

// The same field viewed with period T * period: time-T orbits of the result
// are the T-periodic orbits of H.
HamiltonianField iterate(const HamiltonianField& H, int T);

// ----- action of sampled loops ---------------------------------------------

// A closed curve sampled at increasing times; points are lifts in R^{2n}
// even for torus fields.  On R^{2n} the first and last points must agree to
// 1e-6; on the torus their difference is the integer winding vector, which
// must vanish for the action to be defined.
struct SampledLoop {
    std::vector<double> times;
    std::vector<Vec> points;
};

class contractibility_error : public validation_error {
public:
    using validation_error::validation_error;
};

// A(gamma) = (loop integral of y dx) + integral of H_t(gamma(t)) dt.  The
// area term is the Green's-theorem value of the radial coning from the
// loop's centroid, evaluated per coordinate pair by the trapezoid rule;
// uniformly sampled loops get two rounds of Richardson extrapolation, which
// makes circle areas exact to ~1e-12 at a few hundred samples.  The overload
// with a winding certificate checks the claimed lift displacement against
// the samples before rejecting non-contractible torus loops.
double action(const HamiltonianField& H, const SampledLoop& gamma);
double action(const HamiltonianField& H, const SampledLoop& gamma,
              const Eigen::VectorXi& winding_certificate);

// Sorted action values with duplicates closer than tol merged (the first
// representative wins).
std::vector<double> action_spectrum(std::vector<double> actions,
                                    double tol = 1e-9);

}  // namespace conley
