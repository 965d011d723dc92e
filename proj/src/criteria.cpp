#include "mfstop/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mfstop/errors.hpp"

namespace mfstop {

const InteractionStats& PopulationView::at(double t) const {
    if (stats.empty()) fail(ErrorCode::EmptySample, "population view has no stats");
    double r = std::round(t / grid.dt);
    auto n = static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(stats.size() - 1)));
    return stats[n];
}

PopulationView PopulationView::of_flow(const ProblemSpec& spec, const MeasureFlow& flow) {
    PopulationView v;
    v.grid = flow.grid;
    v.stats = snapshot_all(spec, flow);
    v.reward_mean = mfstop::reward_mean(spec, flow, v.stats);
    return v;
}

PopulationView PopulationView::none(const ProblemSpec& spec, const Grid& grid) {
    PopulationView v;
    v.grid = grid;
    for (std::size_t n = 0; n <= grid.nt; ++n) v.stats.push_back(empty_stats(spec, grid.t(n)));
    return v;
}

double reward_mean(const ProblemSpec& spec, const MeasureFlow& flow, const std::vector<InteractionStats>& stats) {
    const Grid& g = flow.grid;
    double acc = 0.0;
    for (std::size_t n = 0; n <= g.nt; ++n) {
        double row = 0.0;
        for (std::size_t j = 0; j <= g.nx; ++j) {
            double inflow = n == 0 ? flow.m0(0, j) : flow.m0(n, j) - flow.m0(n - 1, j);
            if (inflow != 0.0) row += spec.reward(g.t(n), g.x(j), stats[n]) * inflow;
        }
        acc += row;
    }
    return acc * g.dx;
}

double choquet(std::span<const double> values, std::span<const double> weights, const ScalarFunction& phi) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double total = 0.0;
    for (double w : weights) total += w;
    // tail[k] = P[xi >= value of idx[k]], accumulated from the top
    std::vector<double> tail(idx.size());
    double acc = 0.0;
    for (std::size_t k = idx.size(); k-- > 0;) {
        acc += weights[idx[k]];
        tail[k] = acc / total;
    }
    double out = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        double v = values[idx[k]];
        if (k > 0 && v == values[idx[k - 1]]) continue;  // first occurrence carries the full tail
        out += (v - prev) * phi(std::min(tail[k], 1.0));
        prev = v;
    }
    return out;
}

double evaluate_criterion(const CriterionSpec& crit, const Coefficient& reward, std::span<const StoppedSample> samples,
                          const PopulationView& pop) {
    if (samples.empty()) fail(ErrorCode::EmptySample, "no stopped samples");
    double total = 0.0;
    for (const auto& s : samples) total += s.weight;
    if (!(total > 0.0)) fail(ErrorCode::EmptySample, "sample weights sum to zero");

    std::vector<double> g(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        g[i] = reward(samples[i].time, samples[i].state, pop.at(samples[i].time));

    auto mean = [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i) acc += samples[i].weight * g[i];
        return acc / total;
    };

    switch (crit.kind) {
    case CriterionKind::linear:
        return mean();
    case CriterionKind::concave_of_expectation:
        return crit.phi(mean());
    case CriterionKind::distortion: {
        std::vector<double> w(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (g[i] < 0.0)
                fail(ErrorCode::NegativeRewardForDistortion,
                     "reward " + std::to_string(g[i]) + " at t=" + std::to_string(samples[i].time));
            w[i] = samples[i].weight;
        }
        return choquet(g, w, crit.phi);
    }
    case CriterionKind::anti_monotone_product:
        return mean() * crit.F(pop.reward_mean);
    case CriterionKind::potential:
        return mean() * crit.G.derivative(pop.reward_mean);
    }
    return 0.0;
}

NodeField linearized_reward(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen,
                            const std::vector<InteractionStats>& stats) {
    const auto& crit = spec.criterion;
    if (!crit.linear_in_P())
        fail(ErrorCode::CriterionNotLinear,
             std::string("criterion ") + to_string(crit.kind) + " needs the policy-search best response");
    double factor = 1.0;
    if (crit.kind == CriterionKind::anti_monotone_product) factor = crit.F(reward_mean(spec, frozen, stats));
    if (crit.kind == CriterionKind::potential) factor = crit.G.derivative(reward_mean(spec, frozen, stats));
    NodeField r(grid);
    for (std::size_t n = 0; n <= grid.nt; ++n)
        for (std::size_t j = 0; j <= grid.nx; ++j) r(n, j) = factor * spec.reward(grid.t(n), grid.x(j), stats[n]);
    return r;
}

ProbeReport concavity_probe(const CriterionSpec& crit, const Coefficient& reward,
                            const std::vector<std::vector<StoppedSample>>& laws, std::size_t n_triples,
                            std::uint64_t seed, const PopulationView& pop) {
    if (laws.size() < 2) fail(ErrorCode::EmptySample, "concavity probe needs at least two sample laws");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, laws.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> J(laws.size());
    for (std::size_t i = 0; i < laws.size(); ++i) J[i] = evaluate_criterion(crit, reward, laws[i], pop);

    ProbeReport rep;
    rep.worst_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_triples; ++k) {
        std::size_t a = pick(rng), b = pick(rng);
        while (b == a) b = pick(rng);
        double lam = unit(rng);
        while (lam <= 0.0 || lam >= 1.0) lam = unit(rng);
        std::vector<StoppedSample> mix;
        mix.reserve(laws[a].size() + laws[b].size());
        double wa = 0.0, wb = 0.0;
        for (const auto& s : laws[a]) wa += s.weight;
        for (const auto& s : laws[b]) wb += s.weight;
        for (auto s : laws[a]) { s.weight *= lam / wa; mix.push_back(s); }
        for (auto s : laws[b]) { s.weight *= (1.0 - lam) / wb; mix.push_back(s); }
        double v = lam * J[a] + (1.0 - lam) * J[b] - evaluate_criterion(crit, reward, mix, pop);
        rep.worst_violation = std::max(rep.worst_violation, v);
        if (v > 1e-12) ++rep.violations;
        ++rep.triples;
    }
    return rep;
}

}  // namespace mfstop
