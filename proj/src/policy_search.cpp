#include "mfstop/policy_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfstop/criteria.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/parallel.hpp"
#include "mfstop/rng.hpp"

namespace mfstop {

double ThresholdRule::threshold_at(double t, double horizon) const {
    const std::size_t k = thresholds.size() - 1;
    if (k == 0) return thresholds[0];
    double r = std::clamp(t / horizon, 0.0, 1.0) * static_cast<double>(k);
    auto i = std::min(static_cast<std::size_t>(r), k - 1);
    double w = r - static_cast<double>(i);
    double a = thresholds[i], b = thresholds[i + 1];
    if (std::isinf(a) || std::isinf(b)) return w < 0.5 ? a : b;
    return (1.0 - w) * a + w * b;
}

ThresholdRule ThresholdRule::with_knots(std::size_t knots, double horizon) const {
    ThresholdRule r = *this;
    r.thresholds.resize(knots + 1);
    for (std::size_t i = 0; i <= knots; ++i)
        r.thresholds[i] = threshold_at(knots == 0 ? 0.0 : horizon * static_cast<double>(i) / static_cast<double>(knots),
                                       horizon);
    return r;
}

StoppingPolicy ThresholdRule::to_policy(const Grid& grid) const {
    NodeMask mask(grid, 0);
    NodeField margin(grid, 0.0);
    for (std::size_t n = 0; n <= grid.nt; ++n) {
        double c = threshold_at(grid.t(n), grid.horizon);
        for (std::size_t j = 0; j <= grid.nx; ++j) {
            double x = grid.x(j);
            double m = side == Side::below ? x - c : c - x;
            margin(n, j) = std::isfinite(m) ? m : (m > 0 ? 1e300 : -1e300);
            mask(n, j) = m <= 0.0 ? 1 : 0;
        }
    }
    if (hazard <= 0.0) return StoppingPolicy::pure(grid, std::move(mask), std::move(margin));
    NodeField atoms(grid, 0.0);
    for (std::size_t k = 0; k < atoms.data().size(); ++k) atoms.data()[k] = mask.data()[k] ? 1.0 : 0.0;
    return StoppingPolicy::randomized(grid, NodeField(grid, hazard), std::move(atoms));
}

RepresentativeSampler::RepresentativeSampler(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen,
                                             std::size_t n_samples, std::uint64_t seed)
    : spec_(&spec), grid_(grid), n_(n_samples) {
    if (n_samples < 20) fail(ErrorCode::EmptySample, "policy search needs at least 20 samples");
    if (!(frozen.grid == grid)) fail(ErrorCode::GridMismatch, "frozen flow is defined on a different grid");
    stats_ = snapshot_all(spec, frozen);
    reward_mean_ = reward_mean(spec, frozen, stats_);
    const std::size_t cols = grid.nt + 1;
    paths_.resize(n_ * cols);
    uniforms_.resize(n_ * cols);
    RandomStream rs(seed, kStreamPolicySearch);
    LawSampler law(spec.initial_law, grid);
    const double dt = grid.dt, sq = std::sqrt(dt);
    for (std::size_t i = 0; i < n_; ++i) {
        double x = law(rs.uniform(i, 0, 100), rs.uniform(i, 0, 101));
        paths_[i * cols] = x;
        uniforms_[i * cols] = rs.uniform(i, 0, 7);
        for (std::size_t n = 0; n < grid.nt; ++n) {
            double t = grid.t(n);
            x += spec.drift(t, x, stats_[n]) * dt + spec.diffusion(t, x, stats_[n]) * sq * rs.normal(i, n + 1, 0);
            paths_[i * cols + n + 1] = x;
            uniforms_[i * cols + n + 1] = rs.uniform(i, n + 1, 7);
        }
    }
}

RepresentativeSampler::Estimate RepresentativeSampler::evaluate(const ThresholdRule& rule) const {
    const std::size_t cols = grid_.nt + 1;
    const double p_hazard = rule.hazard > 0.0 ? 1.0 - std::exp(-rule.hazard * grid_.dt) : 0.0;
    std::vector<double> cut(cols);
    for (std::size_t n = 0; n < cols; ++n) cut[n] = rule.threshold_at(grid_.t(n), grid_.horizon);
    const bool below = rule.side == ThresholdRule::Side::below;

    std::vector<StoppedSample> samples(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        const double* p = &paths_[i * cols];
        const double* u = &uniforms_[i * cols];
        std::size_t n = 0;
        for (; n < grid_.nt; ++n) {
            double x = p[n];
            if (below ? x <= cut[n] : x >= cut[n]) break;
            if (n > 0 && u[n] < p_hazard) break;
        }
        samples[i] = {grid_.t(n), p[n], 1.0};
    }

    PopulationView pop;
    pop.grid = grid_;
    pop.stats = stats_;
    pop.reward_mean = reward_mean_;
    Estimate e;
    e.value = evaluate_criterion(spec_->criterion, spec_->reward, samples, pop);
    // batch means for the standard error (works for nonlinear criteria too)
    const std::size_t batches = 20, per = n_ / batches;
    double s = 0.0, s2 = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        std::span<const StoppedSample> part(samples.data() + b * per, per);
        double v = evaluate_criterion(spec_->criterion, spec_->reward, part, pop);
        s += v;
        s2 += v * v;
    }
    double mean = s / batches;
    double var = std::max(0.0, (s2 - batches * mean * mean) / (batches - 1));
    e.se = std::sqrt(var / batches);
    return e;
}

CoordinateOutcome coordinate_search(const ThresholdRule& start, const std::function<RuleEstimate(const ThresholdRule&)>& eval,
                                    const CoordinateSearch& cfg) {
    CoordinateOutcome out;
    out.rule = start;
    out.estimate = eval(start);
    out.evaluations = 1;
    double step = (cfg.hi - cfg.lo) / 4.0;
    double hstep = cfg.hazard_max / 4.0;
    const double min_hstep = cfg.hazard_max / 256.0;
    const std::size_t nth = start.thresholds.size();
    const std::size_t dims = nth + (cfg.search_hazard ? 1 : 0);
    for (;;) {
        if (out.evaluations + 2 * dims > cfg.max_evaluations) {
            out.exhausted = true;
            break;
        }
        std::vector<ThresholdRule> cand;
        for (std::size_t c = 0; c < dims; ++c)
            for (double sgn : {1.0, -1.0}) {
                ThresholdRule r = out.rule;
                if (c < nth) {
                    double v = r.thresholds[c];
                    if (!std::isfinite(v)) v = v > 0 ? cfg.hi : cfg.lo;
                    r.thresholds[c] = std::clamp(v + sgn * step, cfg.lo, cfg.hi);
                } else {
                    r.hazard = std::clamp(r.hazard + sgn * hstep, 0.0, cfg.hazard_max);
                }
                cand.push_back(std::move(r));
            }
        std::vector<RuleEstimate> est(cand.size());
        parallel_for(cand.size(), cfg.workers, [&](std::size_t i) { est[i] = eval(cand[i]); });
        out.evaluations += cand.size();
        std::size_t arg = cand.size();
        double v = out.estimate.value;
        for (std::size_t i = 0; i < cand.size(); ++i)
            if (est[i].value > v) {
                v = est[i].value;
                arg = i;
            }
        if (arg < cand.size()) {
            out.rule = cand[arg];
            out.estimate = est[arg];
            continue;
        }
        step *= 0.5;
        hstep *= 0.5;
        if (step < cfg.min_step && (!cfg.search_hazard || hstep < min_hstep)) break;
    }
    return out;
}

SearchResult policy_search_best_response(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen,
                                         const FamilyConfig& family, std::size_t n_samples, std::uint64_t seed,
                                         const ThresholdRule* start) {
    RepresentativeSampler sampler(spec, grid, frozen, n_samples, seed);
    CoordinateSearch cfg;
    cfg.lo = grid.x_min - grid.dx;
    cfg.hi = grid.x_max + grid.dx;
    cfg.min_step = family.min_step_cells * grid.dx;
    cfg.search_hazard = family.search_hazard;
    cfg.hazard_max = family.hazard_max;
    cfg.workers = family.workers;

    std::vector<ThresholdRule> starts;
    if (start) {
        starts.push_back(start->with_knots(family.knots, grid.horizon));
        if (!family.search_hazard) starts.back().hazard = 0.0;
    } else {
        double x0 = 0.0;
        auto law = spec.initial_law.discretize(grid);
        for (std::size_t j = 0; j <= grid.nx; ++j) x0 += grid.x(j) * law[j] * grid.dx;
        for (auto side : family.sides) {
            ThresholdRule never;
            never.side = side;
            never.thresholds.assign(family.knots + 1, side == ThresholdRule::Side::below ? cfg.lo : cfg.hi);
            starts.push_back(never);
            ThresholdRule mid = never;
            mid.thresholds.assign(family.knots + 1, std::clamp(x0, cfg.lo, cfg.hi));
            starts.push_back(mid);
            // steps from "never" to "always": near-deterministic stop times, which
            // single-coordinate moves cannot reach when paths barely move
            for (std::size_t k = 1; k <= family.knots; ++k) {
                ThresholdRule ramp = never;
                for (std::size_t i = k; i <= family.knots; ++i)
                    ramp.thresholds[i] = side == ThresholdRule::Side::below ? cfg.hi : cfg.lo;
                starts.push_back(ramp);
            }
        }
    }

    auto eval = [&](const ThresholdRule& r) {
        auto e = sampler.evaluate(r);
        return RuleEstimate{e.value, e.se};
    };
    SearchResult best;
    best.value = -std::numeric_limits<double>::infinity();
    for (const auto& s0 : starts) {
        cfg.max_evaluations = family.max_evaluations > best.evaluations ? family.max_evaluations - best.evaluations : 0;
        if (cfg.max_evaluations == 0) {
            best.budget_exhausted = true;
            break;
        }
        auto o = coordinate_search(s0, eval, cfg);
        best.evaluations += o.evaluations;
        if (o.estimate.value > best.value) {
            best.value = o.estimate.value;
            best.se = o.estimate.se;
            best.rule = o.rule;
        }
        if (o.exhausted) {
            best.budget_exhausted = true;
            break;
        }
    }
    best.policy = best.rule.to_policy(grid);
    return best;
}

}  // namespace mfstop
