// Hamiltonian field builders, composition, iteration, and the action of
// sampled loops.
//
// SPDX-License-Identifier: MIT
#include "conley/hamiltonian.hpp"

#include "conley/expr.hpp"
#include "conley/flow.hpp"
#include "conley/linalg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <sstream>
#include <utility>

namespace conley {

void HamiltonianField::validate() const {
    require(static_cast<bool>(eval) && static_cast<bool>(grad) &&
                static_cast<bool>(hess),
            "HamiltonianField: eval, grad, and hess must all be set");
    require(period > 0.0, "HamiltonianField: period must be positive");
    require(phase_space.n >= 1,
            "HamiltonianField: need at least one degree of freedom");
}

Vec reduce_point(const PhaseSpace& space, Vec z) {
    if (space.kind == PhaseSpace::Kind::torus)
        for (Eigen::Index i = 0; i < z.size(); ++i)
            z[i] -= std::floor(z[i]);
    return z;
}

Vec lift_difference(const PhaseSpace& space, const Vec& a, const Vec& b) {
    Vec d = a - b;
    if (space.kind == PhaseSpace::Kind::torus)
        for (Eigen::Index i = 0; i < d.size(); ++i)
            d[i] -= std::round(d[i]);
    return d;
}

// ----- builders ------------------------------------------------------------

HamiltonianField zero_field(int n, double period) {
    require(n >= 1, "zero_field: need n >= 1");
    HamiltonianField H;
    H.eval = [](double, const Vec&) { return 0.0; };
    H.grad = [](double, const Vec& z) { return Vec(Vec::Zero(z.size())); };
    H.hess = [](double, const Vec& z) {
        return Mat(Mat::Zero(z.size(), z.size()));
    };
    H.period = period;
    H.phase_space = PhaseSpace::euclidean(n);
    H.autonomous = true;
    return H;
}

HamiltonianField quadratic_field(const Mat& Q, double period) {
    require(Q.rows() == Q.cols() && Q.rows() >= 2 && Q.rows() % 2 == 0,
            "quadratic_field: Q must be square of even dimension");
    const auto Qs = std::make_shared<const Mat>(0.5 * (Q + Q.transpose()));
    HamiltonianField H;
    H.eval = [Qs](double, const Vec& z) { return 0.5 * z.dot(*Qs * z); };
    H.grad = [Qs](double, const Vec& z) { return Vec(*Qs * z); };
    H.hess = [Qs](double, const Vec&) { return *Qs; };
    H.period = period;
    H.phase_space = PhaseSpace::euclidean(static_cast<int>(Q.rows()) / 2);
    H.autonomous = true;
    return H;
}

HamiltonianField radial_field(std::function<double(double)> F,
                              std::function<double(double)> dF,
                              std::function<double(double)> d2F, int n,
                              double period) {
    require(n >= 1, "radial_field: need n >= 1");
    require(static_cast<bool>(F) && static_cast<bool>(dF) &&
                static_cast<bool>(d2F),
            "radial_field: profile and both derivatives must be supplied");
    HamiltonianField H;
    H.eval = [F](double, const Vec& z) { return F(0.5 * z.squaredNorm()); };
    H.grad = [dF](double, const Vec& z) {
        return Vec(dF(0.5 * z.squaredNorm()) * z);
    };
    H.hess = [dF, d2F](double, const Vec& z) {
        const double rho = 0.5 * z.squaredNorm();
        Mat S = d2F(rho) * (z * z.transpose());
        S.diagonal().array() += dF(rho);
        return S;
    };
    H.period = period;
    H.phase_space = PhaseSpace::euclidean(n);
    H.autonomous = true;
    return H;
}

namespace {

// Normalize the x_3 / y_12 spellings to x3 / y12 so the parser sees a single
// variable set.  Only rewrites when the x/y starts an identifier and the
// underscore is followed by a digit.
std::string strip_coordinate_underscores(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const bool starts_ident =
            (c == 'x' || c == 'y') &&
            (i == 0 || (!std::isalnum(static_cast<unsigned char>(text[i - 1])) &&
                        text[i - 1] != '_'));
        if (starts_ident && i + 2 < text.size() && text[i + 1] == '_' &&
            std::isdigit(static_cast<unsigned char>(text[i + 2]))) {
            out += c;
            ++i;  // drop the underscore
            continue;
        }
        out += c;
    }
    return out;
}

struct ExpressionTable {
    std::vector<std::string> vars;  // x1..xn, y1..yn, t
    Expression h;
    std::vector<Expression> grad;
    std::vector<Expression> hess;  // row-major upper triangle mirrored
    int dim;
    double period;
};

}  // namespace

HamiltonianField expression_field(const std::string& text, int n,
                                  double period, PhaseSpace::Kind kind) {
    require(n >= 1, "expression_field: need n >= 1");
    require(period > 0.0, "expression_field: period must be positive");

    std::vector<std::string> vars;
    for (int i = 1; i <= n; ++i) vars.push_back("x" + std::to_string(i));
    for (int i = 1; i <= n; ++i) vars.push_back("y" + std::to_string(i));
    vars.push_back("t");

    auto tab = std::make_shared<ExpressionTable>(ExpressionTable{
        vars, Expression(strip_coordinate_underscores(text), vars), {}, {},
        2 * n, period});
    for (int i = 0; i < tab->dim; ++i)
        tab->grad.push_back(tab->h.derivative(i));
    for (int i = 0; i < tab->dim; ++i)
        for (int j = 0; j < tab->dim; ++j)
            tab->hess.push_back(i <= j ? tab->grad[i].derivative(j)
                                       : tab->grad[j].derivative(i));

    const auto fill = [tab](double t, const Vec& z, Vec& buf) {
        require(z.size() == tab->dim,
                "expression field evaluated at a point of wrong dimension");
        buf.head(tab->dim) = z;
        // Wrapping t enforces time periodicity for any expression.
        buf[tab->dim] = t - tab->period * std::floor(t / tab->period);
    };

    HamiltonianField H;
    H.eval = [tab, fill](double t, const Vec& z) {
        Vec buf(tab->dim + 1);
        fill(t, z, buf);
        return tab->h.eval(buf.data());
    };
    H.grad = [tab, fill](double t, const Vec& z) {
        Vec buf(tab->dim + 1);
        fill(t, z, buf);
        Vec g(tab->dim);
        for (int i = 0; i < tab->dim; ++i) g[i] = tab->grad[i].eval(buf.data());
        return g;
    };
    H.hess = [tab, fill](double t, const Vec& z) {
        Vec buf(tab->dim + 1);
        fill(t, z, buf);
        Mat S(tab->dim, tab->dim);
        for (int i = 0; i < tab->dim; ++i)
            for (int j = 0; j < tab->dim; ++j)
                S(i, j) = tab->hess[static_cast<std::size_t>(i) * tab->dim + j]
                              .eval(buf.data());
        return S;
    };
    H.period = period;
    H.phase_space = {kind, n};
    H.autonomous = !tab->h.depends_on("t");
    return H;
}

// ----- composition and iteration -------------------------------------------

namespace {

struct BackwardFlow {
    Vec point;  // (phi_K^t)^{-1}(z)
    Mat deriv;  // its differential at z
};

// Integrate K backward from time t to 0 starting at z.  The step is shrunk
// to divide the interval so flow()'s divisibility contract holds at any t.
BackwardFlow inverse_flow(const HamiltonianField& K, const Vec& z, double t,
                          double step, bool want_derivative) {
    if (std::abs(t) <= 1e-14)
        return {z, Mat::Identity(z.size(), z.size())};
    const long ns = std::max(1L, std::lround(std::ceil(std::abs(t) / step)));
    const FlowResult back = flow(K, z, t, 0.0, std::abs(t) / static_cast<double>(ns));
    return {back.end_point, want_derivative ? back.monodromy.samples.back()
                                            : Mat()};
}

}  // namespace

HamiltonianField compose(const HamiltonianField& K, const HamiltonianField& H,
                         double step) {
    K.validate();
    H.validate();
    require(step > 0.0, "compose: step must be positive");
    require(K.phase_space.n == H.phase_space.n &&
                K.phase_space.kind == H.phase_space.kind,
            "compose: fields live on different phase spaces");
    require(std::abs(K.period - H.period) <=
                1e-12 * std::max(K.period, H.period),
            "compose: fields must have equal periods");

    // Capture by value: the returned field must outlive the arguments.
    const auto Kc = std::make_shared<const HamiltonianField>(K);
    const auto Hc = std::make_shared<const HamiltonianField>(H);
    const double period = H.period;
    const auto wrap = [period](double t) {
        return t - period * std::floor(t / period);
    };

    HamiltonianField out;
    out.period = period;
    out.phase_space = H.phase_space;
    out.autonomous = false;  // H o (phi_K^t)^{-1} is time-dependent in general

    out.eval = [Kc, Hc, wrap, step](double t, const Vec& z) {
        const double tau = wrap(t);
        const BackwardFlow psi = inverse_flow(*Kc, z, tau, step, false);
        return Kc->eval(tau, z) + Hc->eval(tau, psi.point);
    };
    out.grad = [Kc, Hc, wrap, step](double t, const Vec& z) {
        const double tau = wrap(t);
        const BackwardFlow psi = inverse_flow(*Kc, z, tau, step, true);
        return Vec(Kc->grad(tau, z) +
                   psi.deriv.transpose() * Hc->grad(tau, psi.point));
    };
    // The composed Hessian differentiates the transported gradient by
    // central differences; the inner flows are smooth in z, so the O(step^2)
    // integration bias differentiates along, and accuracy stays ~1e-6.
    out.hess = [Kc, Hc, wrap, step](double t, const Vec& z) {
        const double tau = wrap(t);
        const int dim = static_cast<int>(z.size());
        const auto transported = [&](const Vec& p) {
            const BackwardFlow psi = inverse_flow(*Kc, p, tau, step, true);
            return Vec(psi.deriv.transpose() * Hc->grad(tau, psi.point));
        };
        Mat S(dim, dim);
        for (int j = 0; j < dim; ++j) {
            const double delta = 1e-5 * std::max(1.0, std::abs(z[j]));
            Vec zp = z, zm = z;
            zp[j] += delta;
            zm[j] -= delta;
            S.col(j) = (transported(zp) - transported(zm)) / (2.0 * delta);
        }
        S = 0.5 * (S + S.transpose()).eval();
        return Mat(Kc->hess(tau, z) + S);
    };
    return out;
}

HamiltonianField iterate(const HamiltonianField& H, int T) {
    H.validate();
    require(T >= 1, "iterate: T must be a positive integer");
    HamiltonianField out = H;
    out.period = H.period * static_cast<double>(T);
    return out;
}

// ----- action of sampled loops ---------------------------------------------

namespace {

// Trapezoid value of (loop integral of y dx) + (integral of H dt) using every
// stride-th sample.  hvals are H(t_k, z_k) precomputed at full resolution.
double action_at_stride(const SampledLoop& g, const std::vector<double>& hvals,
                        int n, std::size_t stride) {
    double area = 0.0, timeint = 0.0;
    const std::size_t last = g.points.size() - 1;
    for (std::size_t k = 0; k < last; k += stride) {
        const std::size_t k1 = k + stride;
        const Vec& a = g.points[k];
        const Vec& b = g.points[k1];
        for (int i = 0; i < n; ++i)
            area += 0.5 * (a[n + i] + b[n + i]) * (b[i] - a[i]);
        timeint += 0.5 * (hvals[k] + hvals[k1]) * (g.times[k1] - g.times[k]);
    }
    return area + timeint;
}

double action_impl(const HamiltonianField& H, const SampledLoop& gamma,
                   const Eigen::VectorXi* certificate) {
    H.validate();
    const int dim = H.dim();
    require(gamma.points.size() == gamma.times.size(),
            "action: times and points must be aligned");
    require(gamma.points.size() >= 3, "action: need at least three samples");
    for (const Vec& p : gamma.points)
        require(p.size() == dim, "action: sample of wrong dimension");
    for (std::size_t k = 1; k < gamma.times.size(); ++k)
        require(gamma.times[k] > gamma.times[k - 1],
                "action: times must be strictly increasing");

    const Vec displacement = gamma.points.back() - gamma.points.front();
    if (H.phase_space.kind == PhaseSpace::Kind::torus) {
        Eigen::VectorXi winding(dim);
        for (int i = 0; i < dim; ++i) {
            winding[i] = static_cast<int>(std::lround(displacement[i]));
            require(std::abs(displacement[i] - winding[i]) <= 1e-6,
                    "action: lift does not close up to an integer winding");
        }
        if (certificate) {
            require(certificate->size() == dim,
                    "action: winding certificate has the wrong dimension");
            require((*certificate - winding).cwiseAbs().maxCoeff() == 0,
                    "action: winding certificate does not match the sampled lift");
        }
        if (winding.cwiseAbs().maxCoeff() != 0) {
            std::ostringstream msg;
            msg << "action: loop is not contractible on the torus (winding";
            for (int i = 0; i < dim; ++i) msg << ' ' << winding[i];
            msg << ")";
            throw contractibility_error(msg.str());
        }
    } else {
        double scale = 1.0;
        for (const Vec& p : gamma.points)
            scale = std::max(scale, p.lpNorm<Eigen::Infinity>());
        require(displacement.lpNorm<Eigen::Infinity>() <= 1e-6 * scale,
                "action: loop is not closed");
        if (certificate)
            require(certificate->size() == dim &&
                        certificate->cwiseAbs().maxCoeff() == 0,
                    "action: a winding certificate on R^{2n} must vanish");
    }

    std::vector<double> hvals(gamma.points.size());
    for (std::size_t k = 0; k < gamma.points.size(); ++k)
        hvals[k] = H.eval(gamma.times[k], gamma.points[k]);

    // The area term is the Green's-theorem area of the radial cone over the
    // loop; per coordinate pair it reduces to the trapezoid rule applied to
    // y dx, so on uniform samples Richardson extrapolation applies verbatim.
    const std::size_t segments = gamma.points.size() - 1;
    bool uniform = true;
    const double hbar =
        (gamma.times.back() - gamma.times.front()) / static_cast<double>(segments);
    for (std::size_t k = 0; k + 1 < gamma.times.size() && uniform; ++k)
        uniform = std::abs(gamma.times[k + 1] - gamma.times[k] - hbar) <=
                  1e-9 * hbar;

    const int n = H.phase_space.n;
    const double a1 = action_at_stride(gamma, hvals, n, 1);
    if (!uniform || segments % 2 != 0) return a1;
    const double a2 = action_at_stride(gamma, hvals, n, 2);
    if (segments % 4 != 0 || segments < 8) return a1 + (a1 - a2) / 3.0;
    const double a4 = action_at_stride(gamma, hvals, n, 4);
    const double r12 = a1 + (a1 - a2) / 3.0;
    const double r24 = a2 + (a2 - a4) / 3.0;
    return r12 + (r12 - r24) / 15.0;
}

}  // namespace

double action(const HamiltonianField& H, const SampledLoop& gamma) {
    return action_impl(H, gamma, nullptr);
}

double action(const HamiltonianField& H, const SampledLoop& gamma,
              const Eigen::VectorXi& winding_certificate) {
    return action_impl(H, gamma, &winding_certificate);
}

std::vector<double> action_spectrum(std::vector<double> actions, double tol) {
    require(tol >= 0.0, "action_spectrum: tolerance must be nonnegative");
    std::sort(actions.begin(), actions.end());
    std::vector<double> out;
    for (double a : actions)
        if (out.empty() || a - out.back() > tol) out.push_back(a);
    return out;
}

}  // namespace conley
