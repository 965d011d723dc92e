#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfstop/measure_flow.hpp"
#include "mfstop/problem.hpp"

namespace mfstop {

struct StoppedSample {
    double time = 0.0;
    double state = 0.0;
    double weight = 0.0;
};

// Population information a criterion reads: per-node stats (for g(t,x,stats_t))
// and m[g], the population mean of the reward at its stopping points.
struct PopulationView {
    Grid grid;
    std::vector<InteractionStats> stats;
    double reward_mean = 0.0;

    const InteractionStats& at(double t) const;

    static PopulationView of_flow(const ProblemSpec& spec, const MeasureFlow& flow);
    // No population: stats are zero at every node.
    static PopulationView none(const ProblemSpec& spec, const Grid& grid);
};

// m[g] = sum_{n,j} g(t_n, x_j, stats_n) * (stopped inflow at node n) * dx.
double reward_mean(const ProblemSpec& spec, const MeasureFlow& flow, const std::vector<InteractionStats>& stats);

// Weights are normalized by their total.
double evaluate_criterion(const CriterionSpec& crit, const Coefficient& reward, std::span<const StoppedSample> samples,
                          const PopulationView& pop);

// Choquet integral sum_i (v_i - v_{i-1}) * phi(P[xi >= v_i]) over sorted distinct values (v_0 = 0).
double choquet(std::span<const double> values, std::span<const double> weights, const ScalarFunction& phi);

// Reward field the representative player faces once the flow is frozen
// (criteria linear in P only; CriterionNotLinear otherwise).
NodeField linearized_reward(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen,
                            const std::vector<InteractionStats>& stats);

struct ProbeReport {
    double worst_violation = 0.0;  // max of lambda*J(P) + (1-lambda)*J(P') - J(mix)
    std::size_t violations = 0;    // triples beyond 1e-12
    std::size_t triples = 0;
};

ProbeReport concavity_probe(const CriterionSpec& crit, const Coefficient& reward,
                            const std::vector<std::vector<StoppedSample>>& sample_laws, std::size_t n_triples,
                            std::uint64_t seed, const PopulationView& pop);

}  // namespace mfstop
