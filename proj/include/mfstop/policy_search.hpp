#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mfstop/measure_flow.hpp"
#include "mfstop/policy.hpp"
#include "mfstop/problem.hpp"

namespace mfstop {

// Threshold rule x*(t), piecewise linear through knots+1 equispaced values
// (0 knots = constant), stopping below or above it, with an optional constant
// hazard overlay in the continuation region.
struct ThresholdRule {
    enum class Side { below, above };
    Side side = Side::below;
    std::vector<double> thresholds{0.0};
    double hazard = 0.0;

    double threshold_at(double t, double horizon) const;
    bool stops(double t, double x, double horizon) const {
        double c = threshold_at(t, horizon);
        return side == Side::below ? x <= c : x >= c;
    }
    // Same rule on a finer knot set (for nested searches).
    ThresholdRule with_knots(std::size_t knots, double horizon) const;
    StoppingPolicy to_policy(const Grid& grid) const;
};

struct FamilyConfig {
    std::size_t knots = 0;
    bool search_hazard = false;
    double hazard_max = 5.0;
    std::vector<ThresholdRule::Side> sides{ThresholdRule::Side::below, ThresholdRule::Side::above};
    std::size_t max_evaluations = 2000;
    double min_step_cells = 0.25;  // stop refining thresholds below this many dx
    unsigned workers = 1;
};

struct SearchResult {
    StoppingPolicy policy;
    ThresholdRule rule;
    double value = 0.0;
    double se = 0.0;
    std::size_t evaluations = 0;
    bool budget_exhausted = false;
};

// Monte Carlo criterion of a rule on n_samples representative paths driven by the
// frozen flow; paths and hazard draws are shared by all candidates (common random numbers).
class RepresentativeSampler {
public:
    RepresentativeSampler(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen, std::size_t n_samples,
                          std::uint64_t seed);

    struct Estimate {
        double value = 0.0;
        double se = 0.0;
    };
    Estimate evaluate(const ThresholdRule& rule) const;

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return n_; }
    double path(std::size_t i, std::size_t n) const { return paths_[i * (grid_.nt + 1) + n]; }

private:
    const ProblemSpec* spec_;
    Grid grid_;
    std::size_t n_;
    std::vector<double> paths_;
    std::vector<double> uniforms_;
    std::vector<InteractionStats> stats_;
    double reward_mean_ = 0.0;
};

// Coordinate search over a rule's thresholds (and hazard) with step halving.
// Candidates of one sweep are evaluated concurrently; the trajectory is sequential.
struct RuleEstimate {
    double value = 0.0;
    double se = 0.0;
};
struct CoordinateSearch {
    double lo = 0.0, hi = 1.0;  // threshold bounds
    double min_step = 0.0;
    bool search_hazard = false;
    double hazard_max = 0.0;
    std::size_t max_evaluations = 600;
    unsigned workers = 1;
};
struct CoordinateOutcome {
    ThresholdRule rule;
    RuleEstimate estimate;
    std::size_t evaluations = 0;
    bool exhausted = false;
};
CoordinateOutcome coordinate_search(const ThresholdRule& start, const std::function<RuleEstimate(const ThresholdRule&)>& eval,
                                    const CoordinateSearch& cfg);

SearchResult policy_search_best_response(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen,
                                         const FamilyConfig& family, std::size_t n_samples, std::uint64_t seed,
                                         const ThresholdRule* start = nullptr);

}  // namespace mfstop
