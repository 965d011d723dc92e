#include "mfstop/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfstop/criteria.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/fokker_planck.hpp"
#include "mfstop/parallel.hpp"

namespace mfstop {

BestResponse best_response(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& flow,
                           std::span<const double> law, const PicardOptions& opt) {
    BestResponse br;
    if (spec.criterion.linear_in_P()) {
        br.value_field = solve_obstacle(spec, grid, flow);
        br.policy = stop_region(br.value_field);
        br.value = initial_value(br.value_field, law);
        return br;
    }
    auto s = policy_search_best_response(spec, grid, flow, opt.family, opt.search_samples, opt.seed);
    br.policy = std::move(s.policy);
    br.value = s.value;
    br.policy_search = true;
    return br;
}

double flow_distance(const MeasureFlow& a, const MeasureFlow& b) {
    if (!(a.grid == b.grid)) fail(ErrorCode::GridMismatch, "flow_distance needs flows on the same grid");
    const Grid& g = a.grid;
    double w_max = 0.0, s_max = 0.0;
    for (std::size_t n = 0; n <= g.nt; ++n) {
        double ma = a.mass(n), mb = b.mass(n);
        double fa = 0.0, fb = 0.0, w = 0.0;
        for (std::size_t j = 0; j < g.nx; ++j) {
            fa += (a.m1(n, j) + a.m0(n, j)) * g.dx / ma;
            fb += (b.m1(n, j) + b.m0(n, j)) * g.dx / mb;
            w += std::abs(fa - fb);
        }
        w_max = std::max(w_max, w * g.dx);
        s_max = std::max(s_max, std::abs(a.stopped_mass(n) - b.stopped_mass(n)));
    }
    return w_max + s_max;
}

const char* to_string(InitialFlow f) {
    switch (f) {
    case InitialFlow::stopped_at_start: return "stopped_at_start";
    case InitialFlow::never_stopped: return "never_stopped";
    case InitialFlow::mixed: return "mixed";
    }
    return "?";
}

MeasureFlow initial_flow(const ProblemSpec& spec, const Grid& grid, InitialFlow kind, std::span<const double> law) {
    switch (kind) {
    case InitialFlow::stopped_at_start:
        return evolve_density(spec, grid, StoppingPolicy::stop_at_start(grid), law);
    case InitialFlow::never_stopped:
        return evolve_density(spec, grid, StoppingPolicy::never_stop(grid), law);
    case InitialFlow::mixed:
        return mix(initial_flow(spec, grid, InitialFlow::stopped_at_start, law),
                   initial_flow(spec, grid, InitialFlow::never_stopped, law), 0.5);
    }
    return {};
}

double flow_value(const ProblemSpec& spec, const MeasureFlow& flow) {
    const Grid& g = flow.grid;
    PopulationView pop = PopulationView::of_flow(spec, flow);
    std::vector<StoppedSample> samples;
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            double inflow = n == 0 ? flow.m0(0, j) : flow.m0(n, j) - flow.m0(n - 1, j);
            if (inflow > 0.0) samples.push_back({g.t(n), g.x(j), inflow * g.dx});
        }
    return evaluate_criterion(spec.criterion, spec.reward, samples, pop);
}

EquilibriumResult picard_iterate(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& init,
                                 const PicardOptions& opt) {
    if (!(init.grid == grid)) fail(ErrorCode::GridMismatch, "initial flow is defined on a different grid");
    if (!(opt.damping > 0.0 && opt.damping <= 1.0)) fail(ErrorCode::ConfigError, "damping must lie in (0, 1]");
    const auto law = spec.initial_law.discretize(grid);
    // without interaction the map is constant, so damping only slows it down
    const double damping = spec.has_interaction() ? opt.damping : 1.0;

    EquilibriumResult res;
    MeasureFlow m = init;
    double best_d = std::numeric_limits<double>::infinity();
    EquilibriumResult best;
    for (std::size_t k = 1; k <= opt.max_iter; ++k) {
        BestResponse br = best_response(spec, grid, m, law, opt);
        MeasureFlow next = evolve_density(spec, grid, br.policy, law, &m);
        double d = flow_distance(m, next);
        res.residual_history.push_back(d);
        res.iterations = k;
        if (d < best_d) {
            best_d = d;
            best.flow = m;
            best.value = br.value;
            best.value_field = br.value_field;
            best.policy = br.policy;
            best.policy_search = br.policy_search;
        }
        if (d <= opt.fp_tol) {
            res.flow = std::move(m);
            res.value = br.value;
            res.value_field = std::move(br.value_field);
            res.policy = std::move(br.policy);
            res.policy_search = br.policy_search;
            res.converged = true;
            res.flow_value = flow_value(spec, res.flow);
            return res;
        }
        m = damping >= 1.0 ? std::move(next) : mix(m, next, damping);
    }
    best.iterations = res.iterations;
    best.residual_history = std::move(res.residual_history);
    best.converged = false;
    best.flow_value = flow_value(spec, best.flow);
    return best;
}

double equilibrium_gap(const ProblemSpec& spec, const Grid& grid, const EquilibriumResult& r) {
    const auto law = spec.initial_law.discretize(grid);
    return best_response_value(spec, grid, r.flow, law) - r.flow_value;
}

double scheme_error_bound(const Grid& grid, double value) {
    return 10.0 * (grid.dt + grid.dx * grid.dx) * (1.0 + std::abs(value));
}

UniquenessReport uniqueness_probe(const ProblemSpec& spec, const Grid& grid, const std::vector<MeasureFlow>& inits,
                                  const PicardOptions& opt, unsigned workers) {
    UniquenessReport rep;
    rep.results.resize(inits.size());
    parallel_for(inits.size(), workers, [&](std::size_t i) { rep.results[i] = picard_iterate(spec, grid, inits[i], opt); });
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : rep.results) {
        rep.values.push_back(r.value);
        lo = std::min(lo, r.value);
        hi = std::max(hi, r.value);
    }
    rep.spread = rep.results.empty() ? 0.0 : hi - lo;
    rep.distances.assign(inits.size(), std::vector<double>(inits.size(), 0.0));
    for (std::size_t i = 0; i < inits.size(); ++i)
        for (std::size_t j = i + 1; j < inits.size(); ++j)
            rep.distances[i][j] = rep.distances[j][i] = flow_distance(rep.results[i].flow, rep.results[j].flow);
    return rep;
}

PotentialResult potential_solve(const ProblemSpec& spec, const Grid& grid, std::size_t n_restarts,
                                const PicardOptions& opt, unsigned workers) {
    if (spec.criterion.kind != CriterionKind::potential)
        fail(ErrorCode::ConfigError, "potential_solve needs a criterion of kind potential");
    if (spec.dynamics_read_measure())
        fail(ErrorCode::PotentialHypothesisViolated, "drift or diffusion reads the population stats");
    const auto law = spec.initial_law.discretize(grid);

    auto potential_of = [&](const MeasureFlow& f) {
        auto stats = snapshot_all(spec, f);
        return spec.criterion.G(reward_mean(spec, f, stats));
    };
    auto eval = [&](const ThresholdRule& r) {
        MeasureFlow f = evolve_density(spec, grid, r.to_policy(grid), law);
        return RuleEstimate{potential_of(f), 0.0};
    };

    CoordinateSearch cfg;
    cfg.lo = grid.x_min - grid.dx;
    cfg.hi = grid.x_max + grid.dx;
    cfg.min_step = opt.family.min_step_cells * grid.dx;
    cfg.max_evaluations = opt.family.max_evaluations;

    // restarts: never-stop plus constant thresholds spread over the domain, both sides
    std::vector<ThresholdRule> starts;
    for (auto side : {ThresholdRule::Side::below, ThresholdRule::Side::above}) {
        ThresholdRule r;
        r.side = side;
        r.thresholds.assign(opt.family.knots + 1, side == ThresholdRule::Side::below ? cfg.lo : cfg.hi);
        starts.push_back(r);
    }
    for (std::size_t k = 0; k < n_restarts; ++k) {
        ThresholdRule r;
        r.side = k % 2 == 0 ? ThresholdRule::Side::below : ThresholdRule::Side::above;
        double c = grid.x_min + grid.width() * static_cast<double>(k / 2 + 1) / static_cast<double>(n_restarts / 2 + 2);
        r.thresholds.assign(opt.family.knots + 1, c);
        starts.push_back(r);
    }
    std::vector<CoordinateOutcome> outcomes(starts.size());
    parallel_for(starts.size(), workers, [&](std::size_t i) { outcomes[i] = coordinate_search(starts[i], eval, cfg); });

    PotentialResult res;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        res.evaluations += outcomes[i].evaluations;
        if (outcomes[i].estimate.value > outcomes[arg].estimate.value) arg = i;
    }
    res.rule = outcomes[arg].rule;
    StoppingPolicy policy = res.rule.to_policy(grid);
    MeasureFlow flow = evolve_density(spec, grid, policy, law);
    double G = potential_of(flow);

    // polish: best-response steps that do not lower the potential. Ties in the
    // best response (u - g within tolerance) can move a maximizer to another
    // maximizer; we stop at one the tie-broken best-response map reproduces,
    // accepting potential losses up to the scheme's resolution.
    const double G_best = G, slack = opt.fp_tol * (1.0 + std::abs(G)) + scheme_error_bound(grid, G);
    bool fixed = false;
    std::size_t steps = 0;
    std::vector<double> history;
    for (; steps < 50; ++steps) {
        ValueField vf = solve_obstacle(spec, grid, flow);
        StoppingPolicy p2 = stop_region(vf);
        MeasureFlow f2 = evolve_density(spec, grid, p2, law);
        ++res.evaluations;
        history.push_back(flow_distance(f2, flow));
        if (history.back() <= opt.fp_tol) {
            fixed = true;
            break;
        }
        double G2 = potential_of(f2);
        if (G2 < G_best - slack) break;
        policy = std::move(p2);
        flow = std::move(f2);
    }

    auto& eq = res.equilibrium;
    eq.flow = flow;
    eq.policy = policy;
    eq.value_field = solve_obstacle(spec, grid, flow);
    eq.value = initial_value(eq.value_field, law);
    eq.flow_value = flow_value(spec, flow);
    eq.iterations = steps + 1;
    eq.converged = fixed;
    eq.residual_history = std::move(history);
    res.potential = potential_of(flow);
    res.gap = eq.value - eq.flow_value;
    auto stats = snapshot_all(spec, flow);
    NodeField reward = linearized_reward(spec, grid, flow, stats);
    double backward = initial_value(policy_value(spec, grid, stats, reward, policy), law);
    res.discretization_error = std::abs(backward - eq.flow_value);
    return res;
}

DiagnosticReport submartingale_check(const ProblemSpec& spec, const Grid& grid, std::size_t feature,
                                     const StoppingPolicy& policy, double tol) {
    if (feature >= spec.features.size())
        fail(ErrorCode::ConfigError, "feature index " + std::to_string(feature) + " out of range");
    const auto law = spec.initial_law.discretize(grid);
    MeasureFlow flow = evolve_density(spec, grid, policy, law);
    FeatureTable table(spec, grid);
    DiagnosticReport rep;
    for (std::size_t n = 0; n <= grid.nt; ++n) rep.series.push_back(snapshot_at(table, flow, n).feature_averages[feature]);
    for (std::size_t n = 1; n < rep.series.size(); ++n)
        rep.max_violation = std::max(rep.max_violation, rep.series[n - 1] - rep.series[n]);
    rep.passed = rep.max_violation <= tol;
    return rep;
}

}  // namespace mfstop
