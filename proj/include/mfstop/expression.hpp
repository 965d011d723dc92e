#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfstop {

// Values an expression may read. `scalar` backs the optional free variable
// (p for distortions, y for interaction transforms).
struct ExprEnv {
    double t = 0.0;
    double x = 0.0;
    std::span<const double> avg{};
    double stopped_mass = 0.0;
    double scalar = 0.0;
};

// Compiled arithmetic expression (grammar in docs/expressions.md).
// Stored as a postfix program so copies are cheap and evaluation needs no recursion.
class Expression {
public:
    Expression() = default;

    // scalar_name: extra variable accepted by the parser ("" for none).
    static Expression parse(std::string_view text, std::string_view scalar_name = {});
    static Expression constant(double c);

    double eval(const ExprEnv& env) const;
    // d/d(scalar) by forward-mode dual numbers.
    double derivative(const ExprEnv& env) const;

    bool reads_measure() const { return reads_measure_; }
    bool reads_t() const { return reads_t_; }
    bool reads_x() const { return reads_x_; }
    bool reads_scalar() const { return reads_scalar_; }
    // 1 + largest avg[] index used, 0 if none.
    std::size_t features_needed() const { return features_needed_; }
    const std::string& source() const { return source_; }
    bool empty() const { return program_.empty(); }

    enum class Op : unsigned char {
        Const, VarT, VarX, VarAvg, VarStopped, VarScalar,
        Neg, Add, Sub, Mul, Div, Pow,
        Exp, Log, Sqrt, Abs, Max, Min,
    };
    struct Instr {
        Op op;
        std::size_t index = 0;
        double value = 0.0;
    };

private:
    template <class V>
    V run(const ExprEnv& env, V seed) const;

    std::vector<Instr> program_;
    std::size_t max_depth_ = 0;
    std::string source_;
    bool reads_measure_ = false;
    bool reads_t_ = false;
    bool reads_x_ = false;
    bool reads_scalar_ = false;
    std::size_t features_needed_ = 0;

    friend class ExpressionParser;
};

}  // namespace mfstop
