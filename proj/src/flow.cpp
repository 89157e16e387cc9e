// Implicit midpoint integrator with exact variational transport.
//
// SPDX-License-Identifier: MIT
#include "conley/flow.hpp"

#include "conley/linalg.hpp"

#include <cmath>
#include <sstream>

namespace conley {

namespace {

// One implicit midpoint step: solve w = z + h * X(tm, (z + w)/2) by Newton
// with the Jacobian frozen at the predictor midpoint (the correction it
// misses is O(step^2), so the iteration still contracts fast, and fields
// whose Hessian is expensive -- composed fields integrate backward for every
// evaluation -- pay for it once per step instead of once per iteration).
// Returns the converged midpoint through `mid` so the caller can linearize
// at exactly the point the scheme used.
Vec midpoint_step(const HamiltonianField& H, const Mat& JH, const Vec& z,
                  double tm, double h, Vec& mid) {
    const double tol = 1e-12 * std::max(1.0, z.lpNorm<Eigen::Infinity>());
    Vec w = z + h * (JH * H.grad(tm, z));  // Euler predictor
    mid = 0.5 * (z + w);
    Eigen::PartialPivLU<Mat> lu;
    if (mid.allFinite())
        lu.compute(Mat::Identity(z.size(), z.size()) -
                   (0.5 * h) * (JH * H.hess(tm, mid)));
    for (int iter = 0; mid.allFinite() && iter < 20; ++iter) {
        mid = 0.5 * (z + w);
        const Vec residual = w - z - h * (JH * H.grad(tm, mid));
        if (!residual.allFinite()) break;
        if (residual.lpNorm<Eigen::Infinity>() <= tol) return w;
        w += lu.solve(-residual);
    }
    std::ostringstream msg;
    msg << "flow: implicit midpoint Newton did not converge at t = " << tm
        << " with step " << h << " (stiff field at this step size?)";
    throw numerical_error(msg.str());
}

}  // namespace

FlowResult flow(const HamiltonianField& H, const Vec& z0, double t0,
                double t1, double step) {
    H.validate();
    require(z0.size() == H.dim(), "flow: z0 has the wrong dimension");
    require(step > 0.0, "flow: step must be positive");

    const int dim = H.dim();
    const double span = t1 - t0;
    const Mat I = Mat::Identity(dim, dim);

    FlowResult out;
    out.end_point = z0;
    out.monodromy.times = {0.0};
    out.monodromy.samples = {I};
    out.monodromy.period = 1.0;  // nominal; overwritten for real intervals

    const long nsteps = std::lround(std::abs(span) / step);
    require(std::abs(nsteps * step - std::abs(span)) <=
                1e-9 * std::max(1.0, std::abs(span)),
            "flow: step must divide the time interval");
    if (nsteps == 0) return out;

    out.monodromy.period = std::abs(span);
    out.monodromy.times.reserve(nsteps + 1);
    out.monodromy.samples.reserve(nsteps + 1);

    const double h = span / static_cast<double>(nsteps);
    const Mat JH = field_matrix(H.phase_space.n);
    const double energy0 = H.autonomous ? H.eval(t0, z0) : 0.0;

    Vec z = z0;
    Mat M = I;
    Vec mid(dim);
    for (long k = 0; k < nsteps; ++k) {
        const double tm = t0 + (static_cast<double>(k) + 0.5) * h;
        z = midpoint_step(H, JH, z, tm, h, mid);

        // Variational step at the converged midpoint: the Cayley transform
        // of a Hamiltonian matrix, so M stays symplectic to roundoff.
        Mat S = H.hess(tm, mid);
        S = 0.5 * (S + S.transpose()).eval();
        const Mat A = (0.5 * h) * (JH * S);
        M = ((I - A).partialPivLu().solve((I + A) * M)).eval();

        out.monodromy.times.push_back(std::abs(h) * static_cast<double>(k + 1));
        out.monodromy.samples.push_back(M);
        if (H.autonomous)
            out.energy_drift = std::max(out.energy_drift,
                                        std::abs(H.eval(t0, z) - energy0));
    }

    out.end_point = z;
    out.steps = static_cast<int>(nsteps);
    return out;
}

}  // namespace conley
