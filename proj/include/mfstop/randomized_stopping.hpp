#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mfstop/policy.hpp"
#include "mfstop/problem.hpp"

namespace mfstop {

// Randomized stopping time as an adapted CDF A_t along each path, held in the
// canonical form the solvers consume: hazard field plus per-node atoms (see
// StoppingPolicy for the time convention). A_T = 1 always.
class RandomizedStop {
public:
    explicit RandomizedStop(StoppingPolicy policy);

    static RandomizedStop deterministic_time(const Grid& grid, double t0);
    static RandomizedStop constant_hazard(const Grid& grid, double lambda);
    // Path-independent law with CDF F on the time nodes (F(T) is forced to 1).
    static RandomizedStop time_cdf(const Grid& grid, const std::function<double(double)>& F);

    const StoppingPolicy& policy() const { return policy_; }
    const Grid& grid() const { return policy_.grid(); }

    // Conditional stop probability at node n given survival, at state x.
    double step_probability(std::size_t n, double x) const;
    // A at every node along a path sampled on the time nodes.
    std::vector<double> cdf(std::span<const double> path) const;

private:
    StoppingPolicy policy_;
};

// A_{t_n} = 1 - exp(-sum_{0<k<=n} theta(t_k, x_k) dt) for t_n < T, A_T = 1.
std::vector<double> hazard_to_cdf(const NodeField& theta, const Grid& grid, std::span<const double> path);
// Inverse on the hazard part: theta_n = -(log(1-A_n) - log(1-A_{n-1})) / dt, theta_0 = 0.
std::vector<double> cdf_to_hazard(std::span<const double> A, const Grid& grid);

// min{t_n : A_{t_n} >= u}; T if never crossed.
double sample_stop(const RandomizedStop& rs, std::span<const double> path, double u);
std::size_t sample_stop_node(const RandomizedStop& rs, std::span<const double> path, double u);

struct PathSample {
    double tau = 0.0;
    std::vector<double> path;  // full (unstopped) path on the time nodes
};

struct TestReport {
    double statistic = 0.0;
    double p_value = 1.0;
    bool passed = true;
    std::size_t n = 0;
};

// Permutation test of association between {tau <= t} and the future increment
// X_T - X_t, within quantile bins of X_t. Passes iff p >= 0.01.
TestReport cond_independence_test(std::span<const PathSample> samples, const Grid& grid, double t,
                                  std::size_t n_permutations, std::uint64_t seed, std::size_t bins = 10);

// Euler paths of the uncontrolled state on the time nodes (no interaction).
std::vector<std::vector<double>> simulate_paths(const ProblemSpec& spec, const Grid& grid, std::size_t n,
                                                std::uint64_t seed);

// Pure rule: stop at node n >= 1 iff frac(K * n * Y_n / (sigma_ref * sqrt(dt))) < q_n,
// Y_n the running time-average of the path and q_n the randomized rule's conditional
// stop probability. Larger K decorrelates the auxiliary uniform from the path.
class PurifiedRule {
public:
    PurifiedRule(const RandomizedStop& rs, double refinement, double sigma_ref);
    std::size_t stop_node(std::span<const double> path) const;
    double refinement() const { return k_; }

private:
    const RandomizedStop* rs_;
    double k_;
    double scale_;
};

struct PurifiedMember {
    double refinement = 0.0;
    double gap = 0.0;  // exact W1 on rescaled (tau, X_tau)
};

struct PurifiedFamily {
    std::size_t n_samples = 0;
    double sigma_ref = 0.0;
    std::vector<PurifiedMember> members;
};

PurifiedFamily purify(const RandomizedStop& rs, const ProblemSpec& spec, const Grid& grid, std::size_t n_samples,
                      std::span<const double> refinements, std::uint64_t seed, unsigned workers = 1);

}  // namespace mfstop
