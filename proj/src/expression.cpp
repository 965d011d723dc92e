#include "mfstop/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>

#include "mfstop/errors.hpp"

namespace mfstop {

namespace {

struct Dual {
    double v;
    double d;
};


template <class V> V lift(double c);
template <> double lift<double>(double c) { return c; }
template <> Dual lift<Dual>(double c) { return {c, 0.0}; }

inline double neg(double a) { return -a; }
inline Dual neg(Dual a) { return {-a.v, -a.d}; }
inline double add(double a, double b) { return a + b; }
inline Dual add(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline double sub(double a, double b) { return a - b; }
inline Dual sub(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline double mul(double a, double b) { return a * b; }
inline Dual mul(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline double dvd(double a, double b) { return a / b; }
inline Dual dvd(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
inline double pw(double a, double b) { return std::pow(a, b); }
inline Dual pw(Dual a, Dual b) {
    double v = std::pow(a.v, b.v);
    double d = 0.0;
    if (a.d != 0.0) d += b.v * std::pow(a.v, b.v - 1.0) * a.d;
    if (b.d != 0.0) d += v * std::log(a.v) * b.d;
    return {v, d};
}
inline double fexp(double a) { return std::exp(a); }
inline Dual fexp(Dual a) { double e = std::exp(a.v); return {e, e * a.d}; }
inline double flog(double a) { return std::log(a); }
inline Dual flog(Dual a) { return {std::log(a.v), a.d / a.v}; }
inline double fsqrt(double a) { return std::sqrt(a); }
inline Dual fsqrt(Dual a) { double s = std::sqrt(a.v); return {s, a.d / (2.0 * s)}; }
inline double fabs_(double a) { return std::abs(a); }
inline Dual fabs_(Dual a) { return a.v < 0.0 ? neg(a) : a; }
inline double fmax_(double a, double b) { return a >= b ? a : b; }
inline Dual fmax_(Dual a, Dual b) { return a.v >= b.v ? a : b; }
inline double fmin_(double a, double b) { return a <= b ? a : b; }
inline Dual fmin_(Dual a, Dual b) { return a.v <= b.v ? a : b; }

}  // namespace

class ExpressionParser {
public:
    ExpressionParser(std::string_view text, std::string_view scalar) : s_(text), scalar_(scalar) {}

    Expression parse() {
        out_.source_ = std::string(s_);
        skip();
        if (pos_ >= s_.size()) error("empty expression");
        expr();
        skip();
        if (pos_ < s_.size()) error(std::string("unexpected '") + s_[pos_] + "'");
        // stack depth for the evaluator
        std::size_t depth = 0, max_depth = 0;
        for (const auto& in : out_.program_) {
            switch (in.op) {
            case Expression::Op::Const: case Expression::Op::VarT: case Expression::Op::VarX:
            case Expression::Op::VarAvg: case Expression::Op::VarStopped: case Expression::Op::VarScalar:
                ++depth;
                break;
            case Expression::Op::Add: case Expression::Op::Sub: case Expression::Op::Mul:
            case Expression::Op::Div: case Expression::Op::Pow: case Expression::Op::Max:
            case Expression::Op::Min:
                --depth;
                break;
            default:
                break;
            }
            if (depth > max_depth) max_depth = depth;
        }
        out_.max_depth_ = max_depth;
        return std::move(out_);
    }

private:
    using Op = Expression::Op;

    [[noreturn]] void error(const std::string& msg) const {
        fail(ErrorCode::ExpressionError, "column " + std::to_string(pos_ + 1) + ": " + msg + " in '" +
                                             std::string(s_) + "'");
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) error(std::string("expected '") + c + "'");
    }
    void emit(Op op, std::size_t index = 0, double value = 0.0) { out_.program_.push_back({op, index, value}); }

    // expr := term (('+'|'-') term)*
    void expr() {
        term();
        for (;;) {
            if (accept('+')) { term(); emit(Op::Add); }
            else if (accept('-')) { term(); emit(Op::Sub); }
            else return;
        }
    }
    // term := unary (('*'|'/') unary)*
    void term() {
        unary();
        for (;;) {
            if (accept('*')) { unary(); emit(Op::Mul); }
            else if (accept('/')) { unary(); emit(Op::Div); }
            else return;
        }
    }
    // unary := ('-'|'+') unary | power
    void unary() {
        if (accept('-')) { unary(); emit(Op::Neg); return; }
        if (accept('+')) { unary(); return; }
        power();
    }
    // power := primary ('^' unary)?   -- right associative, -x^2 == -(x^2)
    void power() {
        primary();
        if (accept('^')) { unary(); emit(Op::Pow); }
    }
    void primary() {
        skip();
        if (pos_ >= s_.size()) error("unexpected end of expression");
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') { number(); return; }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') { identifier(); return; }
        if (accept('(')) { expr(); expect(')'); return; }
        error(std::string("unexpected '") + c + "'");
    }
    void number() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            } else {
                pos_ = save;  // "2e" is 2 followed by identifier e: reject below
            }
        }
        std::string tok(s_.substr(start, pos_ - start));
        if (tok == ".") { pos_ = start; error("malformed number"); }
        emit(Op::Const, 0, std::strtod(tok.c_str(), nullptr));
    }
    void identifier() {
        std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        std::string name(s_.substr(start, pos_ - start));
        skip();
        if (pos_ < s_.size() && s_[pos_] == '(') {
            call(name, start);
            return;
        }
        if (name == "t") { emit(Op::VarT); out_.reads_t_ = true; return; }
        if (name == "x") { emit(Op::VarX); out_.reads_x_ = true; return; }
        if (name == "stopped_mass") { emit(Op::VarStopped); out_.reads_measure_ = true; return; }
        if (name == "avg") {
            expect('[');
            skip();
            std::size_t idx_start = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (idx_start == pos_) error("avg[] needs a non-negative integer index");
            std::size_t idx = std::stoul(std::string(s_.substr(idx_start, pos_ - idx_start)));
            expect(']');
            emit(Op::VarAvg, idx);
            out_.reads_measure_ = true;
            if (idx + 1 > out_.features_needed_) out_.features_needed_ = idx + 1;
            return;
        }
        if (!scalar_.empty() && name == scalar_) { emit(Op::VarScalar); out_.reads_scalar_ = true; return; }
        if (name == "pi") { emit(Op::Const, 0, std::numbers::pi); return; }
        if (name == "e") { emit(Op::Const, 0, std::numbers::e); return; }
        pos_ = start;
        error("unknown identifier '" + name + "'");
    }
    void call(const std::string& name, std::size_t start) {
        int arity = 0;
        Op op{};
        if (name == "exp") { op = Op::Exp; arity = 1; }
        else if (name == "log") { op = Op::Log; arity = 1; }
        else if (name == "sqrt") { op = Op::Sqrt; arity = 1; }
        else if (name == "abs") { op = Op::Abs; arity = 1; }
        else if (name == "max") { op = Op::Max; arity = 2; }
        else if (name == "min") { op = Op::Min; arity = 2; }
        else if (name == "pow") { op = Op::Pow; arity = 2; }
        else { pos_ = start; error("unknown function '" + name + "'"); }
        expect('(');
        expr();
        if (arity == 2) { expect(','); expr(); }
        if (accept(',')) error("function '" + name + "' takes " + std::to_string(arity) + " argument(s)");
        expect(')');
        emit(op);
    }

    std::string_view s_;
    std::string_view scalar_;
    std::size_t pos_ = 0;
    Expression out_;
};

Expression Expression::parse(std::string_view text, std::string_view scalar_name) {
    return ExpressionParser(text, scalar_name).parse();
}

Expression Expression::constant(double c) {
    Expression e;
    e.program_.push_back({Op::Const, 0, c});
    e.max_depth_ = 1;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", c);
    e.source_ = buf;
    return e;
}

template <class V>
V Expression::run(const ExprEnv& env, V seed) const {
    V small[32]{};
    std::vector<V> big;
    V* st = small;
    if (max_depth_ > 32) {
        big.resize(max_depth_);
        st = big.data();
    }
    std::size_t sp = 0;
    for (const auto& in : program_) {
        switch (in.op) {
        case Op::Const: st[sp++] = lift<V>(in.value); break;
        case Op::VarT: st[sp++] = lift<V>(env.t); break;
        case Op::VarX: st[sp++] = lift<V>(env.x); break;
        case Op::VarAvg:
            if (in.index >= env.avg.size())
                fail(ErrorCode::ExpressionError, "avg[" + std::to_string(in.index) + "] has no feature in '" +
                                                     source_ + "'");
            st[sp++] = lift<V>(env.avg[in.index]);
            break;
        case Op::VarStopped: st[sp++] = lift<V>(env.stopped_mass); break;
        case Op::VarScalar: st[sp++] = seed; break;
        case Op::Neg: st[sp - 1] = neg(st[sp - 1]); break;
        case Op::Add: --sp; st[sp - 1] = add(st[sp - 1], st[sp]); break;
        case Op::Sub: --sp; st[sp - 1] = sub(st[sp - 1], st[sp]); break;
        case Op::Mul: --sp; st[sp - 1] = mul(st[sp - 1], st[sp]); break;
        case Op::Div: --sp; st[sp - 1] = dvd(st[sp - 1], st[sp]); break;
        case Op::Pow: --sp; st[sp - 1] = pw(st[sp - 1], st[sp]); break;
        case Op::Max: --sp; st[sp - 1] = fmax_(st[sp - 1], st[sp]); break;
        case Op::Min: --sp; st[sp - 1] = fmin_(st[sp - 1], st[sp]); break;
        case Op::Exp: st[sp - 1] = fexp(st[sp - 1]); break;
        case Op::Log: st[sp - 1] = flog(st[sp - 1]); break;
        case Op::Sqrt: st[sp - 1] = fsqrt(st[sp - 1]); break;
        case Op::Abs: st[sp - 1] = fabs_(st[sp - 1]); break;
        }
    }
    return st[0];
}

double Expression::eval(const ExprEnv& env) const {
    if (program_.empty()) return 0.0;
    return run<double>(env, env.scalar);
}

double Expression::derivative(const ExprEnv& env) const {
    if (program_.empty()) return 0.0;
    return run<Dual>(env, Dual{env.scalar, 1.0}).d;
}

}  // namespace mfstop
