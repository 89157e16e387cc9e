// conley-lab: shared scalar/matrix aliases, error taxonomy and the
// deterministic RNG used by every sampling routine in the toolkit.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace conley {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

// Base class for everything thrown on purpose.  The CLI maps
// validation_error -> exit 2 and numerical_error -> exit 3; anything else
// escaping to main is a bug.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Bad inputs: dimension mismatches, schema violations, parameter windows
// that fail their inequalities, preconditions not met by the caller.
class validation_error : public error {
public:
    using error::error;
};

// The computation itself gave up: Newton stalls, unresolved winding,
// degenerate endpoints, resolution-dependent homology, lost isolation.
class numerical_error : public error {
public:
    using error::error;
};

// The data is too coarse for the answer to be unambiguous (angle jumps of
// more than pi/2 between path samples, grids too coarse to isolate a set).
// The caller can always recover by refining, hence a distinct type.
class resolution_error : public numerical_error {
public:
    using numerical_error::numerical_error;
};

// An eigenvalue-1 style degeneracy where the requested quantity is simply
// not defined.  Carries how close to degenerate the input actually was so
// callers can decide whether to perturb or to give up.
class degeneracy_error : public numerical_error {
public:
    degeneracy_error(const std::string& what, double gap)
        : numerical_error(what), gap(gap) {}
    double gap;  // min |eig - 1| (or analogous distance) actually observed
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw validation_error(what);
}

// Self-contained xorshift-free generator: std::mt19937_64 for the stream,
// hand-rolled mappings on top so that byte-identical output does not depend
// on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t raw() { return state_(); }

    // uniform on [0,1)
    double uniform() {
        return static_cast<double>(state_() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(state_() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    // Box-Muller, polar-free variant; one value per call keeps replay simple.
    double gaussian() {
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 1e-300);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    Vec gaussian_vec(int dim) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = gaussian();
        return v;
    }

private:
    std::mt19937_64 state_;
};

}  // namespace conley
