#include "actionqm/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace expr {

using aqm::validation_error;

class Parser {
public:
    explicit Parser(const std::string& text) : s_(text) {}

    Expr run() {
        Expr e;
        e.text_ = s_;
        out_ = &e;
        parse_expr();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing input");
        // static stack-depth bound matching the fixed evaluator stack
        int depth = 0, maxd = 0;
        for (const Expr::Instr& in : e.code_) {
            switch (in.op) {
                case Expr::Op::push_const:
                case Expr::Op::push_t:
                case Expr::Op::push_x:
                case Expr::Op::push_y: ++depth; break;
                case Expr::Op::add:
                case Expr::Op::sub:
                case Expr::Op::mul:
                case Expr::Op::div: --depth; break;
                default: break;
            }
            maxd = std::max(maxd, depth);
        }
        if (maxd >= 64) fail("expression too deeply nested");
        return e;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
    Expr* out_ = nullptr;

    [[noreturn]] void fail(const std::string& why) {
        throw validation_error("expression parse error at position " +
                               std::to_string(pos_) + ": " + why + " in '" + s_ + "'");
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void emit(Expr::Op op, double v = 0.0) { out_->code_.push_back({op, v}); }

    void parse_expr() {
        parse_term();
        for (;;) {
            if (consume('+')) {
                parse_term();
                emit(Expr::Op::add);
            } else if (consume('-')) {
                parse_term();
                emit(Expr::Op::sub);
            } else {
                return;
            }
        }
    }

    void parse_term() {
        parse_factor();
        for (;;) {
            if (consume('*')) {
                parse_factor();
                emit(Expr::Op::mul);
            } else if (consume('/')) {
                parse_factor();
                emit(Expr::Op::div);
            } else {
                return;
            }
        }
    }

    void parse_factor() {
        skip_ws();
        if (consume('-')) {
            parse_factor();
            emit(Expr::Op::neg);
            return;
        }
        if (consume('+')) {
            parse_factor();
            return;
        }
        parse_primary();
    }

    void parse_primary() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            emit(Expr::Op::push_const, v);
            return;
        }
        if (c == '(') {
            ++pos_;
            parse_expr();
            if (!consume(')')) fail("expected ')'");
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            std::string word = s_.substr(start, pos_ - start);
            if (word == "t") {
                out_->uses_t_ = true;
                emit(Expr::Op::push_t);
                return;
            }
            if (word == "x") {
                emit(Expr::Op::push_x);
                return;
            }
            if (word == "y") {
                emit(Expr::Op::push_y);
                return;
            }
            if (word == "pi") {
                emit(Expr::Op::push_const, 3.14159265358979323846);
                return;
            }
            if (word == "sin" || word == "cos" || word == "exp") {
                if (!consume('(')) fail("expected '(' after " + word);
                parse_expr();
                if (!consume(')')) fail("expected ')'");
                emit(word == "sin" ? Expr::Op::sin_
                                   : (word == "cos" ? Expr::Op::cos_ : Expr::Op::exp_));
                return;
            }
            fail("unknown identifier '" + word + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

Expr Expr::parse(const std::string& text) { return Parser(text).run(); }

double Expr::eval(double t, double x, double y) const {
    aqm::require(!code_.empty(), "Expr::eval: empty expression");
    double stack[64];
    int top = -1;
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::push_const: stack[++top] = in.value; break;
            case Op::push_t: stack[++top] = t; break;
            case Op::push_x: stack[++top] = x; break;
            case Op::push_y: stack[++top] = y; break;
            case Op::add: --top; stack[top] += stack[top + 1]; break;
            case Op::sub: --top; stack[top] -= stack[top + 1]; break;
            case Op::mul: --top; stack[top] *= stack[top + 1]; break;
            case Op::div: --top; stack[top] /= stack[top + 1]; break;
            case Op::neg: stack[top] = -stack[top]; break;
            case Op::sin_: stack[top] = std::sin(stack[top]); break;
            case Op::cos_: stack[top] = std::cos(stack[top]); break;
            case Op::exp_: stack[top] = std::exp(stack[top]); break;
        }
    }
    return stack[0];
}

} // namespace expr
