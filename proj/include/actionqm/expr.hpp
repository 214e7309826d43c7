// Small arithmetic expression evaluator over the variables (t, x, y) with
// +, -, *, /, sin, cos, exp, pi and parentheses. Used for closed-form
// Hamiltonians, J-fields and generator entries in config files.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "actionqm/common.hpp"

namespace expr {

class Expr {
public:
    Expr() = default;
    static Expr parse(const std::string& text);

    double eval(double t, double x, double y) const;
    bool depends_on_t() const { return uses_t_; }
    const std::string& text() const { return text_; }
    bool valid() const { return !code_.empty(); }

private:
    // compact bytecode: op, optional operand index/constant
    enum class Op : unsigned char { push_const, push_t, push_x, push_y,
                                    add, sub, mul, div, neg, sin_, cos_, exp_ };
    struct Instr {
        Op op;
        double value;
    };
    std::vector<Instr> code_;
    bool uses_t_ = false;
    std::string text_;
    friend class Parser;
};

} // namespace expr
