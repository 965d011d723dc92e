#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mfstop/measure_flow.hpp"
#include "mfstop/policy.hpp"
#include "mfstop/problem.hpp"
#include "mfstop/wasserstein.hpp"

namespace mfstop {

struct SimOptions {
    double dt_sim = 0.0;      // 0: the policy grid's dt; otherwise must divide it
    std::uint64_t rep = 0;    // independent replication index under the same seed
    unsigned workers = 1;     // threads across players within a step
};

// Trajectories are recorded on the grid's time nodes.
struct PlayerBatch {
    Grid grid;
    std::size_t N = 0;
    std::uint64_t seed = 0;
    std::uint64_t rep = 0;
    double dt_sim = 0.0;
    Field2D<double> paths;          // (player, node)
    Field2D<unsigned char> survival;  // (player, node): 1 while unstopped
    std::vector<double> stop_times;
    std::vector<double> stop_states;
    std::vector<InteractionStats> stats;  // empirical stats at each node, after stopping there
};

// Synchronous Euler-Maruyama of N interacting players. Coefficients read the running
// empirical stats; stopped players keep their frozen state in feature averages
// (unless a feature is unstopped_only). Pure policies stop on contact; randomized
// ones stop with probability 1 - exp(-theta * dt_sim) per substep plus node atoms.
PlayerBatch simulate_players(const ProblemSpec& spec, std::size_t N, const StoppingPolicy& policy,
                             std::uint64_t seed, const SimOptions& opt = {});

// Atoms (tau_k, X_{tau_k}), weight 1/N each.
EmpiricalMeasure empirical_measure(const PlayerBatch& batch);

struct GapEstimate {
    std::size_t N = 0;
    std::size_t n_rep = 0;
    double on_policy = 0.0;     // Monte Carlo value of following the policy
    double on_policy_se = 0.0;
    double deviation = 0.0;     // best response against the others' averaged flow
    double gap = 0.0;           // (deviation - on_policy)^+
    double se = 0.0;
};

// Linear-in-P criteria only (CriterionNotLinear). The deviation value is the
// mean-field obstacle solve against the cloud-in-cell flow of players 2..N,
// averaged over the repetitions; its grid bias is part of the estimate.
GapEstimate eps_nash_gap(const ProblemSpec& spec, std::size_t N, const StoppingPolicy& policy, std::uint64_t seed,
                         std::size_t n_rep, const SimOptions& opt = {});

struct ConvergenceRow {
    std::size_t N = 0;
    double w1 = 0.0;
    double w1_se = 0.0;
    double eps = 0.0;
    double eps_se = 0.0;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    double slope = 0.0;  // least squares of log W1 against log N
};

// reference defaults to the policy's own density evolution (no interaction feedback);
// pass the equilibrium flow for interacting problems. Repetitions run in parallel.
ConvergenceTable chaos_study(const ProblemSpec& spec, const StoppingPolicy& policy, const std::vector<std::size_t>& Ns,
                             std::size_t trials, std::uint64_t seed, const SimOptions& opt = {},
                             const MeasureFlow* reference = nullptr, bool with_gap = true);

void write_gap_csv(const std::vector<GapEstimate>& rows, std::ostream& out);
void write_convergence_csv(const ConvergenceTable& table, std::ostream& out);
// (player, t, x, survival); refuses batches with more than max_rows rows.
void write_trajectories_csv(const PlayerBatch& batch, std::ostream& out, std::size_t max_rows = 1000000);

}  // namespace mfstop
