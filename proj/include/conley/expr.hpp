// conley-lab: a small expression language for Hamiltonians given in config
// files: +, -, *, /, ^, sin, cos, exp, numeric literals and declared
// variables (typically x_1..x_n, y_1..y_n, t).  Expressions differentiate
// symbolically, so integrator Newton solves get exact gradients rather than
// finite differences.
#pragma once

#include "conley/common.hpp"

#include <memory>
#include <string>
#include <vector>

namespace conley {

namespace detail {
struct ExprNode;
using ExprP = std::shared_ptr<const ExprNode>;
}  // namespace detail

class Expression {
public:
    // Parses text against a fixed variable list; every identifier must be a
    // declared variable or one of the built-in functions.  Throws
    // validation_error with a position marker on malformed input.
    Expression(const std::string& text, std::vector<std::string> variables);

    double eval(const double* values) const;
    double eval(const Vec& values) const;

    // Exact partial derivative; the result shares subtrees with *this.
    Expression derivative(const std::string& variable) const;
    Expression derivative(int slot) const;

    bool depends_on(const std::string& variable) const;
    const std::vector<std::string>& variables() const { return vars_; }
    std::string str() const;  // normalized rendering, for diagnostics

private:
    Expression(detail::ExprP root, std::vector<std::string> vars);
    detail::ExprP root_;
    std::vector<std::string> vars_;
};

}  // namespace conley
