#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mfstop/expression.hpp"
#include "mfstop/grid.hpp"

namespace mfstop {

// Finite-dimensional view of the population at one time: mu_t[h_i] and the stopped mass.
struct InteractionStats {
    std::vector<double> feature_averages;
    double stopped_mass = 0.0;
    double time = 0.0;
};

// A state coefficient (t, x, stats) -> real. measure_dependent records whether
// the function reads the stats at all; expression-built coefficients derive it.
struct Coefficient {
    using Fn = std::function<double(double, double, const InteractionStats&)>;

    Fn fn;
    bool measure_dependent = false;
    std::string label;

    double operator()(double t, double x, const InteractionStats& s) const { return fn(t, x, s); }

    static Coefficient constant(double c);
    static Coefficient from_expression(const Expression& e);
    static Coefficient of(Fn fn, bool measure_dependent, std::string label = {});
};

struct Feature {
    std::function<double(double)> h;
    // Restrict the average to unstopped mass (stopped players count by default).
    bool unstopped_only = false;
    std::string label;

    static Feature from_expression(const Expression& e, bool unstopped_only = false);
};

// Scalar transform used by criteria (phi, F, G).
struct ScalarFunction {
    std::function<double(double)> value;
    std::function<double(double)> slope;  // optional; central difference otherwise
    std::string label;

    bool defined() const { return static_cast<bool>(value); }
    double operator()(double y) const { return value(y); }
    double derivative(double y) const;

    static ScalarFunction from_expression(const Expression& e);
    static ScalarFunction of(std::function<double(double)> v, std::function<double(double)> d = {},
                             std::string label = {});
};

enum class CriterionKind { linear, concave_of_expectation, distortion, anti_monotone_product, potential };

const char* to_string(CriterionKind k);
CriterionKind criterion_kind_from_string(const std::string& s);

// How pathwise rewards aggregate into J(P, m). The reward itself lives in ProblemSpec.
//   linear:                 E[g]
//   concave_of_expectation: phi(E[g])
//   distortion:             Choquet integral of g under phi
//   anti_monotone_product:  E[g] * F(m[g])
//   potential:              G(m) = Psi(m[g]); the player faces Psi'(m[g]) * g
struct CriterionSpec {
    CriterionKind kind = CriterionKind::linear;
    ScalarFunction phi;
    ScalarFunction F;
    ScalarFunction G;

    // Linear in P once the flow is frozen: best response is an obstacle problem.
    bool linear_in_P() const {
        return kind == CriterionKind::linear || kind == CriterionKind::anti_monotone_product ||
               kind == CriterionKind::potential;
    }
};

class InitialLaw {
public:
    enum class Kind { dirac, gaussian, density, nodal };

    InitialLaw() = default;
    static InitialLaw dirac(double x0);
    static InitialLaw gaussian(double mean, double sd);
    // Density evaluated at the nodes; rescaled to unit mass when normalize is set.
    static InitialLaw density(std::function<double(double)> f, bool normalize = true, std::string label = {});
    // Node densities on a declared grid, used as given.
    static InitialLaw nodal(const Grid& grid, std::vector<double> values);

    Kind kind() const { return kind_; }
    double location() const { return a_; }
    double scale() const { return b_; }
    const std::string& label() const { return label_; }

    // Node densities with sum(values) * dx == 1 for a valid law.
    std::vector<double> discretize(const Grid& grid) const;

private:
    Kind kind_ = Kind::dirac;
    double a_ = 0.0;
    double b_ = 0.0;
    bool normalize_ = true;
    std::function<double(double)> f_;
    Grid grid_{};
    std::vector<double> values_;
    std::string label_;
};

// Draws initial states for particle simulations.
class LawSampler {
public:
    LawSampler(const InitialLaw& law, const Grid& grid);
    double operator()(double u1, double u2) const;

private:
    InitialLaw::Kind kind_;
    double a_, b_;
    Grid grid_;
    std::vector<double> cdf_;
};

struct ProblemSpec {
    double horizon = 1.0;
    Coefficient drift = Coefficient::constant(0.0);
    Coefficient diffusion = Coefficient::constant(1.0);
    Coefficient reward = Coefficient::constant(0.0);
    CriterionSpec criterion;
    InitialLaw initial_law;
    std::vector<Feature> features;

    bool dynamics_read_measure() const { return drift.measure_dependent || diffusion.measure_dependent; }
    // True when the best response can depend on the population flow.
    bool has_interaction() const {
        return dynamics_read_measure() || reward.measure_dependent ||
               criterion.kind == CriterionKind::anti_monotone_product ||
               criterion.kind == CriterionKind::potential;
    }
};

struct ValidatedSpec {
    ProblemSpec spec;
    Grid grid;
    std::vector<double> law;  // discretized initial density
    std::vector<std::string> warnings;
};

// Throws ValidationError listing every violation found.
ValidatedSpec validate_spec(const ProblemSpec& spec, const Grid& grid);

// Stats used when no population information is supplied.
InteractionStats empty_stats(const ProblemSpec& spec, double t = 0.0);

}  // namespace mfstop
