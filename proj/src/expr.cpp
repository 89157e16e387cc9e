// Recursive-descent parser and symbolic differentiation for the expression
// language used by Hamiltonian config files.
//
// SPDX-License-Identifier: MIT
#include "conley/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <utility>

namespace conley {
namespace detail {

enum class Op {
    num, var,
    add, sub, mul, div, pow, neg,
    sin, cos, exp, log,  // log is not parseable; d/dx a^b introduces it
};

struct ExprNode {
    Op op;
    double value = 0.0;  // num
    int slot = -1;       // var
    ExprP a, b;
};

namespace {

ExprP num(double v) {
    auto n = std::make_shared<ExprNode>();
    n->op = Op::num;
    n->value = v;
    return n;
}

ExprP var(int slot) {
    auto n = std::make_shared<ExprNode>();
    n->op = Op::var;
    n->slot = slot;
    return n;
}

ExprP node(Op op, ExprP a, ExprP b = nullptr) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

bool is_num(const ExprP& e, double v) {
    return e->op == Op::num && e->value == v;
}

// Smart constructors fold constants and strip identities so derivatives stay
// small enough to evaluate cheaply inside integrator loops.
ExprP add(ExprP a, ExprP b) {
    if (a->op == Op::num && b->op == Op::num) return num(a->value + b->value);
    if (is_num(a, 0)) return b;
    if (is_num(b, 0)) return a;
    return node(Op::add, std::move(a), std::move(b));
}

ExprP sub(ExprP a, ExprP b) {
    if (a->op == Op::num && b->op == Op::num) return num(a->value - b->value);
    if (is_num(b, 0)) return a;
    if (is_num(a, 0)) return node(Op::neg, std::move(b));
    return node(Op::sub, std::move(a), std::move(b));
}

ExprP mul(ExprP a, ExprP b) {
    if (a->op == Op::num && b->op == Op::num) return num(a->value * b->value);
    if (is_num(a, 0) || is_num(b, 0)) return num(0);
    if (is_num(a, 1)) return b;
    if (is_num(b, 1)) return a;
    return node(Op::mul, std::move(a), std::move(b));
}

ExprP divide(ExprP a, ExprP b) {
    if (a->op == Op::num && b->op == Op::num && b->value != 0)
        return num(a->value / b->value);
    if (is_num(a, 0)) return num(0);
    if (is_num(b, 1)) return a;
    return node(Op::div, std::move(a), std::move(b));
}

ExprP neg(ExprP a) {
    if (a->op == Op::num) return num(-a->value);
    if (a->op == Op::neg) return a->a;
    return node(Op::neg, std::move(a));
}

ExprP pow_(ExprP a, ExprP b) {
    if (is_num(b, 0)) return num(1);
    if (is_num(b, 1)) return a;
    if (a->op == Op::num && b->op == Op::num)
        return num(std::pow(a->value, b->value));
    return node(Op::pow, std::move(a), std::move(b));
}

double eval_node(const ExprNode& n, const double* v) {
    switch (n.op) {
        case Op::num: return n.value;
        case Op::var: return v[n.slot];
        case Op::add: return eval_node(*n.a, v) + eval_node(*n.b, v);
        case Op::sub: return eval_node(*n.a, v) - eval_node(*n.b, v);
        case Op::mul: return eval_node(*n.a, v) * eval_node(*n.b, v);
        case Op::div: return eval_node(*n.a, v) / eval_node(*n.b, v);
        case Op::pow: return std::pow(eval_node(*n.a, v), eval_node(*n.b, v));
        case Op::neg: return -eval_node(*n.a, v);
        case Op::sin: return std::sin(eval_node(*n.a, v));
        case Op::cos: return std::cos(eval_node(*n.a, v));
        case Op::exp: return std::exp(eval_node(*n.a, v));
        case Op::log: return std::log(eval_node(*n.a, v));
    }
    return 0;  // unreachable
}

ExprP diff(const ExprP& e, int slot) {
    switch (e->op) {
        case Op::num: return num(0);
        case Op::var: return num(e->slot == slot ? 1 : 0);
        case Op::add: return add(diff(e->a, slot), diff(e->b, slot));
        case Op::sub: return sub(diff(e->a, slot), diff(e->b, slot));
        case Op::mul:
            return add(mul(diff(e->a, slot), e->b), mul(e->a, diff(e->b, slot)));
        case Op::div:
            return divide(sub(mul(diff(e->a, slot), e->b),
                              mul(e->a, diff(e->b, slot))),
                          mul(e->b, e->b));
        case Op::pow: {
            const ExprP da = diff(e->a, slot);
            const ExprP db = diff(e->b, slot);
            if (is_num(db, 0)) {
                // d(a^c) = c * a^(c-1) * a'
                return mul(mul(e->b, pow_(e->a, sub(e->b, num(1)))), da);
            }
            // General case: a^b * (b' log a + b a'/a).
            return mul(pow_(e->a, e->b),
                       add(mul(db, node(Op::log, e->a)),
                           mul(e->b, divide(da, e->a))));
        }
        case Op::neg: return neg(diff(e->a, slot));
        case Op::sin: return mul(node(Op::cos, e->a), diff(e->a, slot));
        case Op::cos: return neg(mul(node(Op::sin, e->a), diff(e->a, slot)));
        case Op::exp: return mul(node(Op::exp, e->a), diff(e->a, slot));
        case Op::log: return divide(diff(e->a, slot), e->a);
    }
    return num(0);  // unreachable
}

bool uses_slot(const ExprP& e, int slot) {
    if (e->op == Op::var) return e->slot == slot;
    if (e->a && uses_slot(e->a, slot)) return true;
    if (e->b && uses_slot(e->b, slot)) return true;
    return false;
}

int precedence(Op op) {
    switch (op) {
        case Op::add: case Op::sub: return 1;
        case Op::mul: case Op::div: return 2;
        case Op::neg: return 3;
        case Op::pow: return 4;
        default: return 5;
    }
}

void render(const ExprP& e, const std::vector<std::string>& vars,
            std::ostream& out, int parent_prec) {
    const int prec = precedence(e->op);
    const bool parens = prec < parent_prec;
    if (parens) out << '(';
    switch (e->op) {
        case Op::num: out << e->value; break;
        case Op::var: out << vars[e->slot]; break;
        case Op::add:
            render(e->a, vars, out, prec);
            out << " + ";
            render(e->b, vars, out, prec);
            break;
        case Op::sub:
            render(e->a, vars, out, prec);
            out << " - ";
            render(e->b, vars, out, prec + 1);
            break;
        case Op::mul:
            render(e->a, vars, out, prec);
            out << "*";
            render(e->b, vars, out, prec);
            break;
        case Op::div:
            render(e->a, vars, out, prec);
            out << "/";
            render(e->b, vars, out, prec + 1);
            break;
        case Op::pow:
            render(e->a, vars, out, prec + 1);
            out << "^";
            render(e->b, vars, out, prec);
            break;
        case Op::neg:
            out << "-";
            render(e->a, vars, out, prec);
            break;
        case Op::sin: out << "sin("; render(e->a, vars, out, 0); out << ')'; break;
        case Op::cos: out << "cos("; render(e->a, vars, out, 0); out << ')'; break;
        case Op::exp: out << "exp("; render(e->a, vars, out, 0); out << ')'; break;
        case Op::log: out << "log("; render(e->a, vars, out, 0); out << ')'; break;
    }
    if (parens) out << ')';
}

class Parser {
public:
    Parser(const std::string& text, const std::vector<std::string>& vars)
        : text_(text), vars_(vars) {}

    ExprP parse() {
        ExprP e = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected trailing input");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        std::ostringstream msg;
        msg << "expression parse error at offset " << pos_ << ": " << what
            << " in \"" << text_ << "\"";
        throw validation_error(msg.str());
    }

    void skip_ws() {
        while (pos_ < text_.size() &&
               std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    ExprP expr() {
        ExprP e = term();
        for (;;) {
            if (consume('+')) e = add(e, term());
            else if (consume('-')) e = sub(e, term());
            else return e;
        }
    }

    ExprP term() {
        ExprP e = unary();
        for (;;) {
            if (consume('*')) e = mul(e, unary());
            else if (consume('/')) e = divide(e, unary());
            else return e;
        }
    }

    ExprP unary() {
        if (consume('-')) return neg(unary());
        return power();
    }

    ExprP power() {
        ExprP base = atom();
        if (consume('^')) return pow_(base, unary());  // right-associative
        return base;
    }

    ExprP atom() {
        const char c = peek();
        if (c == '(') {
            ++pos_;
            ExprP e = expr();
            if (!consume(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
            return identifier();
        fail("expected a number, variable, or '('");
    }

    ExprP number() {
        const char* start = text_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(start, &end);
        if (end == start) fail("malformed number");
        pos_ += static_cast<std::size_t>(end - start);
        return num(v);
    }

    ExprP identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                text_[pos_] == '_'))
            ++pos_;
        const std::string name = text_.substr(start, pos_ - start);
        if (peek() == '(') {
            Op op;
            if (name == "sin") op = Op::sin;
            else if (name == "cos") op = Op::cos;
            else if (name == "exp") op = Op::exp;
            else fail("unknown function '" + name + "' (have sin, cos, exp)");
            ++pos_;  // '('
            ExprP arg = expr();
            if (!consume(')')) fail("expected ')' after argument of " + name);
            return node(op, std::move(arg));
        }
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i] == name) return var(static_cast<int>(i));
        std::string allowed;
        for (const auto& v : vars_) allowed += (allowed.empty() ? "" : ", ") + v;
        fail("unknown variable '" + name + "' (declared: " + allowed + ")");
    }

    const std::string& text_;
    const std::vector<std::string>& vars_;
    std::size_t pos_ = 0;
};

}  // namespace
}  // namespace detail

Expression::Expression(const std::string& text, std::vector<std::string> variables)
    : vars_(std::move(variables)) {
    for (std::size_t i = 0; i < vars_.size(); ++i)
        for (std::size_t j = i + 1; j < vars_.size(); ++j)
            require(vars_[i] != vars_[j],
                    "duplicate variable name '" + vars_[i] + "'");
    root_ = detail::Parser(text, vars_).parse();
}

Expression::Expression(detail::ExprP root, std::vector<std::string> vars)
    : root_(std::move(root)), vars_(std::move(vars)) {}

double Expression::eval(const double* values) const {
    return detail::eval_node(*root_, values);
}

double Expression::eval(const Vec& values) const {
    require(values.size() == static_cast<Eigen::Index>(vars_.size()),
            "expression evaluated with wrong number of values");
    return detail::eval_node(*root_, values.data());
}

Expression Expression::derivative(int slot) const {
    require(slot >= 0 && slot < static_cast<int>(vars_.size()),
            "derivative slot out of range");
    return Expression(detail::diff(root_, slot), vars_);
}

Expression Expression::derivative(const std::string& variable) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i] == variable) return derivative(static_cast<int>(i));
    throw validation_error("derivative with respect to undeclared variable '" +
                           variable + "'");
}

bool Expression::depends_on(const std::string& variable) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i] == variable)
            return detail::uses_slot(root_, static_cast<int>(i));
    return false;
}

std::string Expression::str() const {
    std::ostringstream out;
    detail::render(root_, vars_, out, 0);
    return out.str();
}

}  // namespace conley
