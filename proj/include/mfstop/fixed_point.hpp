#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfstop/measure_flow.hpp"
#include "mfstop/obstacle.hpp"
#include "mfstop/policy.hpp"
#include "mfstop/policy_search.hpp"
#include "mfstop/problem.hpp"

namespace mfstop {

struct PicardOptions {
    double damping = 1.0;
    std::size_t max_iter = 200;
    double fp_tol = 1e-9;
    // policy-search backend for criteria nonlinear in P
    FamilyConfig family{};
    std::size_t search_samples = 4000;
    std::uint64_t seed = 1;
};

struct EquilibriumResult {
    MeasureFlow flow;
    double value = 0.0;        // best-response value against flow (HJB), or search value
    double flow_value = 0.0;   // same criterion evaluated on the flow's own stopping law
    ValueField value_field;    // empty grid when the policy-search backend was used
    StoppingPolicy policy;
    std::size_t iterations = 0;
    std::vector<double> residual_history;
    bool converged = false;
    bool policy_search = false;
};

struct BestResponse {
    StoppingPolicy policy;
    ValueField value_field;
    double value = 0.0;
    bool policy_search = false;
};

BestResponse best_response(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& flow,
                           std::span<const double> law, const PicardOptions& opt);

// max_t W1 of normalized (m1+m0)(t,.) (CDF differences) + max_t |stopped-mass difference|.
double flow_distance(const MeasureFlow& a, const MeasureFlow& b);

// mixed = half of each of the other two.
enum class InitialFlow { stopped_at_start, never_stopped, mixed };
const char* to_string(InitialFlow f);
MeasureFlow initial_flow(const ProblemSpec& spec, const Grid& grid, InitialFlow kind, std::span<const double> law);

// E^{flow}[linearized reward]: the value of the flow's own stopping law against itself.
double flow_value(const ProblemSpec& spec, const MeasureFlow& flow);

EquilibriumResult picard_iterate(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& init,
                                 const PicardOptions& opt);

// Best-response improvement available against result.flow (>= 0 up to scheme error).
double equilibrium_gap(const ProblemSpec& spec, const Grid& grid, const EquilibriumResult& r);
// 10 * (dt + dx^2) * (1 + |value|): consistency order of the two schemes.
double scheme_error_bound(const Grid& grid, double value);

struct UniquenessReport {
    std::vector<EquilibriumResult> results;
    std::vector<double> values;
    double spread = 0.0;
    std::vector<std::vector<double>> distances;
};

UniquenessReport uniqueness_probe(const ProblemSpec& spec, const Grid& grid, const std::vector<MeasureFlow>& inits,
                                  const PicardOptions& opt, unsigned workers = 1);

struct PotentialResult {
    EquilibriumResult equilibrium;
    ThresholdRule rule;
    double potential = 0.0;              // G at the maximizing flow
    double gap = 0.0;                    // best-response value minus flow value at the maximizer
    double discretization_error = 0.0;   // |backward value of the maximizer - flow value|
    std::size_t evaluations = 0;
};

PotentialResult potential_solve(const ProblemSpec& spec, const Grid& grid, std::size_t n_restarts,
                                const PicardOptions& opt, unsigned workers = 1);

struct DiagnosticReport {
    std::vector<double> series;
    double max_violation = 0.0;
    bool passed = true;
};

DiagnosticReport submartingale_check(const ProblemSpec& spec, const Grid& grid, std::size_t feature,
                                     const StoppingPolicy& policy, double tol = 1e-6);

}  // namespace mfstop
