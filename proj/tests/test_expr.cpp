#include "doctest.h"

#include "conley/expr.hpp"

#include <cmath>
#include <vector>

using namespace conley;

namespace {

const std::vector<std::string> kVars = {"x1", "y1", "t"};

double fd_partial(const Expression& e, std::vector<double> at, int slot) {
    const double h = 1e-6 * std::max(1.0, std::abs(at[slot]));
    std::vector<double> lo = at, hi = at;
    hi[slot] += h;
    lo[slot] -= h;
    return (e.eval(hi.data()) - e.eval(lo.data())) / (2.0 * h);
}

}  // namespace

TEST_CASE("expression evaluation respects precedence and associativity") {
    const std::vector<std::string> none;
    CHECK(Expression("2 + 3*4^2", none).eval(nullptr) == doctest::Approx(50.0));
    CHECK(Expression("2^3^2", none).eval(nullptr) == doctest::Approx(512.0));
    CHECK(Expression("7 - 4 - 2", none).eval(nullptr) == doctest::Approx(1.0));
    CHECK(Expression("12/4/3", none).eval(nullptr) == doctest::Approx(1.0));
    CHECK(Expression("-2^2", none).eval(nullptr) == doctest::Approx(-4.0));
    CHECK(Expression("(2+3)*4", none).eval(nullptr) == doctest::Approx(20.0));
    CHECK(Expression("1.5e2 + .25", none).eval(nullptr) == doctest::Approx(150.25));
}

TEST_CASE("expression variables and functions evaluate") {
    const Expression e("sin(t)*y1 + exp(-x1^2)/2", kVars);
    const double vals[3] = {0.4, -1.3, 0.9};
    const double expect =
        std::sin(0.9) * -1.3 + std::exp(-0.16) / 2.0;
    CHECK(e.eval(vals) == doctest::Approx(expect).epsilon(1e-14));

    CHECK(e.depends_on("t"));
    CHECK(e.depends_on("x1"));
    CHECK_FALSE(Expression("x1 + y1", kVars).depends_on("t"));
}

TEST_CASE("symbolic derivatives match finite differences") {
    const Expression e("x1^3*sin(y1) - cos(x1*t) + exp(y1/2)*t^2", kVars);
    const std::vector<std::vector<double>> probes = {
        {0.7, -0.4, 1.1}, {-1.2, 0.9, 0.3}, {0.05, 2.0, -0.8}};
    for (const auto& p : probes) {
        for (int slot = 0; slot < 3; ++slot) {
            const double sym = e.derivative(slot).eval(p.data());
            const double fd = fd_partial(e, p, slot);
            CHECK(sym == doctest::Approx(fd).epsilon(1e-6));
        }
    }
    // Second derivatives still differentiate cleanly.
    const Expression exy = e.derivative("x1").derivative("y1");
    const Expression eyx = e.derivative("y1").derivative("x1");
    const double at[3] = {0.3, 0.6, -0.2};
    CHECK(exy.eval(at) == doctest::Approx(eyx.eval(at)).epsilon(1e-12));
}

TEST_CASE("general power rule handles variable exponents") {
    const Expression e("x1^y1", kVars);
    const std::vector<double> p = {1.7, 2.3, 0.0};
    CHECK(e.derivative("x1").eval(p.data()) ==
          doctest::Approx(2.3 * std::pow(1.7, 1.3)).epsilon(1e-10));
    CHECK(e.derivative("y1").eval(p.data()) ==
          doctest::Approx(std::pow(1.7, 2.3) * std::log(1.7)).epsilon(1e-10));
}

TEST_CASE("derivatives of constants and absent variables vanish") {
    const Expression e("y1^2/2 + 3", kVars);
    const double p[3] = {5.0, -2.0, 7.0};
    CHECK(e.derivative("x1").eval(p) == 0.0);
    CHECK(e.derivative("t").eval(p) == 0.0);
    CHECK(e.derivative("y1").eval(p) == doctest::Approx(-2.0));
}

TEST_CASE("rendered expressions re-parse to the same values") {
    const Expression e("-(x1 - 2*y1)^2 / (1 + t^2) + sin(x1*y1)", kVars);
    const Expression back(e.str(), kVars);
    const double p[3] = {0.8, -0.6, 1.4};
    CHECK(back.eval(p) == doctest::Approx(e.eval(p)).epsilon(1e-14));
}

TEST_CASE("parse errors carry position and context") {
    CHECK_THROWS_AS(Expression("x1 + ", kVars), validation_error);
    CHECK_THROWS_AS(Expression("x1 y1", kVars), validation_error);
    CHECK_THROWS_AS(Expression("(x1 + y1", kVars), validation_error);
    CHECK_THROWS_AS(Expression("tan(x1)", kVars), validation_error);
    CHECK_THROWS_AS(Expression("x2 + 1", kVars), validation_error);
    CHECK_THROWS_AS(Expression("", kVars), validation_error);
    CHECK_THROWS_AS(Expression("1 + sin 2", kVars), validation_error);

    try {
        Expression("x1 + q7", kVars);
        CHECK(false);
    } catch (const validation_error& err) {
        const std::string what = err.what();
        CHECK(what.find("q7") != std::string::npos);
        CHECK(what.find("x1") != std::string::npos);  // declared list shown
    }
}

TEST_CASE("duplicate variable declarations are rejected") {
    CHECK_THROWS_AS(Expression("x1", {"x1", "x1"}), validation_error);
    CHECK_THROWS_AS(Expression("x1", kVars).derivative("zz"), validation_error);
}
