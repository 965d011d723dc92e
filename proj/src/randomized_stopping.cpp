#include "mfstop/randomized_stopping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mfstop/errors.hpp"
#include "mfstop/parallel.hpp"
#include "mfstop/rng.hpp"
#include "mfstop/wasserstein.hpp"

namespace mfstop {

RandomizedStop::RandomizedStop(StoppingPolicy policy) : policy_(std::move(policy)) {
    if (!policy_.terminal_stop()) fail(ErrorCode::InvalidPolicy, "a randomized stopping time needs A_T = 1");
}

RandomizedStop RandomizedStop::deterministic_time(const Grid& grid, double t0) {
    auto n0 = grid.time_index(t0);
    if (!n0) fail(ErrorCode::TimeNotOnGrid, "t0=" + std::to_string(t0) + " is not a grid node");
    NodeField atoms(grid, 0.0);
    for (auto& a : atoms.row(*n0)) a = 1.0;
    return RandomizedStop(StoppingPolicy::randomized(grid, NodeField(grid, 0.0), std::move(atoms)));
}

RandomizedStop RandomizedStop::constant_hazard(const Grid& grid, double lambda) {
    return RandomizedStop(StoppingPolicy::constant_hazard(grid, lambda));
}

RandomizedStop RandomizedStop::time_cdf(const Grid& grid, const std::function<double(double)>& F) {
    NodeField atoms(grid, 0.0);
    double prev = 0.0;
    for (std::size_t n = 0; n <= grid.nt; ++n) {
        double f = n == grid.nt ? 1.0 : std::clamp(F(grid.t(n)), prev, 1.0);
        double a = prev >= 1.0 ? 1.0 : (f - prev) / (1.0 - prev);
        for (auto& v : atoms.row(n)) v = std::clamp(a, 0.0, 1.0);
        prev = f;
    }
    return RandomizedStop(StoppingPolicy::randomized(grid, NodeField(grid, 0.0), std::move(atoms)));
}

double RandomizedStop::step_probability(std::size_t n, double x) const {
    const Grid& g = grid();
    if (n == g.nt) return 1.0;
    if (policy_.kind() == StoppingPolicy::Kind::pure) return policy_.contact(n, x) ? 1.0 : 0.0;
    double a = policy_.atom_at(n, x);
    if (n == 0) return a;
    if (a >= 1.0) return 1.0;
    return 1.0 - (1.0 - a) * std::exp(-policy_.hazard_at(n, x) * g.dt);
}

std::vector<double> RandomizedStop::cdf(std::span<const double> path) const {
    const Grid& g = grid();
    std::vector<double> A(g.nt + 1);
    double log_survival = 0.0;
    for (std::size_t n = 0; n <= g.nt; ++n) {
        double q = step_probability(n, path[n]);
        if (q >= 1.0) {
            std::fill(A.begin() + static_cast<std::ptrdiff_t>(n), A.end(), 1.0);
            break;
        }
        log_survival += std::log1p(-q);
        A[n] = -std::expm1(log_survival);
    }
    return A;
}

std::vector<double> hazard_to_cdf(const NodeField& theta, const Grid& grid, std::span<const double> path) {
    StoppingPolicy p = StoppingPolicy::randomized(grid, theta);
    std::vector<double> A(grid.nt + 1, 0.0);
    double cum = 0.0;
    for (std::size_t n = 1; n < grid.nt; ++n) {
        cum += p.hazard_at(n, path[n]) * grid.dt;
        A[n] = -std::expm1(-cum);
    }
    A[grid.nt] = 1.0;
    return A;
}

std::vector<double> cdf_to_hazard(std::span<const double> A, const Grid& grid) {
    std::vector<double> theta(grid.nt + 1, 0.0);
    for (std::size_t n = 1; n < grid.nt; ++n) {
        if (A[n] >= 1.0) break;
        theta[n] = (std::log1p(-A[n - 1]) - std::log1p(-A[n])) / grid.dt;
    }
    return theta;
}

std::size_t sample_stop_node(const RandomizedStop& rs, std::span<const double> path, double u) {
    auto A = rs.cdf(path);
    for (std::size_t n = 0; n < A.size(); ++n)
        if (A[n] >= u) return n;
    return A.size() - 1;
}

double sample_stop(const RandomizedStop& rs, std::span<const double> path, double u) {
    return rs.grid().t(sample_stop_node(rs, path, u));
}

TestReport cond_independence_test(std::span<const PathSample> samples, const Grid& grid, double t,
                                  std::size_t n_permutations, std::uint64_t seed, std::size_t bins) {
    const std::size_t n = samples.size();
    if (n < 1000) fail(ErrorCode::InsufficientSamples, std::to_string(n) + " samples (need >= 1000)");
    auto k = grid.time_index(t);
    if (!k) fail(ErrorCode::TimeNotOnGrid, "t=" + std::to_string(t) + " is not a grid node");
    for (const auto& s : samples)
        if (s.path.size() != grid.time_nodes()) fail(ErrorCode::GridMismatch, "sample path length does not match grid");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return samples[a].path[*k] < samples[b].path[*k]; });
    bins = std::clamp<std::size_t>(bins, 1, n / 50);

    // per bin: centred increments and event indicators, in sorted order
    std::vector<std::size_t> start(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) start[b] = b * n / bins;
    std::vector<double> d(n), e(n), ebar(bins);
    const double tol = 1e-9 * grid.dt;
    for (std::size_t b = 0; b < bins; ++b) {
        double sd = 0.0, se = 0.0;
        for (std::size_t i = start[b]; i < start[b + 1]; ++i) {
            const auto& s = samples[order[i]];
            d[i] = s.path.back() - s.path[*k];
            e[i] = s.tau <= t + tol ? 1.0 : 0.0;
            sd += d[i];
            se += e[i];
        }
        double cnt = static_cast<double>(start[b + 1] - start[b]);
        for (std::size_t i = start[b]; i < start[b + 1]; ++i) d[i] -= sd / cnt;
        ebar[b] = se / cnt;
    }
    auto statistic = [&](const std::vector<double>& ev) {
        double acc = 0.0;
        for (std::size_t b = 0; b < bins; ++b)
            for (std::size_t i = start[b]; i < start[b + 1]; ++i) acc += (ev[i] - ebar[b]) * d[i];
        return std::abs(acc) / static_cast<double>(n);
    };

    TestReport rep;
    rep.n = n;
    rep.statistic = statistic(e);
    std::size_t exceed = 0;
    std::vector<double> perm(n);
    for (std::size_t p = 0; p < n_permutations; ++p) {
        RandomStream rs(seed, kStreamPermutation, p);
        perm = e;
        for (std::size_t b = 0; b < bins; ++b) {
            std::size_t lo = start[b], len = start[b + 1] - start[b];
            for (std::size_t i = len; i > 1; --i) {
                auto j = static_cast<std::size_t>(rs.uniform(lo + i, 0) * static_cast<double>(i));
                std::swap(perm[lo + i - 1], perm[lo + std::min(j, i - 1)]);
            }
        }
        if (statistic(perm) >= rep.statistic) ++exceed;
    }
    rep.p_value = static_cast<double>(1 + exceed) / static_cast<double>(1 + n_permutations);
    rep.passed = rep.p_value >= 0.01;
    return rep;
}

std::vector<std::vector<double>> simulate_paths(const ProblemSpec& spec, const Grid& grid, std::size_t n,
                                                std::uint64_t seed) {
    RandomStream rs(seed, kStreamPurify);
    LawSampler law(spec.initial_law, grid);
    InteractionStats none = empty_stats(spec);
    const double sq = std::sqrt(grid.dt);
    std::vector<std::vector<double>> paths(n, std::vector<double>(grid.nt + 1));
    for (std::size_t i = 0; i < n; ++i) {
        double x = law(rs.uniform(i, 0, 100), rs.uniform(i, 0, 101));
        paths[i][0] = x;
        for (std::size_t k = 0; k < grid.nt; ++k) {
            double t = grid.t(k);
            none.time = t;
            x += spec.drift(t, x, none) * grid.dt + spec.diffusion(t, x, none) * sq * rs.normal(i, k + 1);
            paths[i][k + 1] = x;
        }
    }
    return paths;
}

PurifiedRule::PurifiedRule(const RandomizedStop& rs, double refinement, double sigma_ref)
    : rs_(&rs), k_(refinement), scale_(sigma_ref * std::sqrt(rs.grid().dt)) {}

std::size_t PurifiedRule::stop_node(std::span<const double> path) const {
    const Grid& g = rs_->grid();
    double running = 0.0;  // n * Y_n, Y_n the running time-average over (0, t_n]
    for (std::size_t n = 0; n <= g.nt; ++n) {
        double q = rs_->step_probability(n, path[n]);
        if (q >= 1.0) return n;
        if (n > 0) running += path[n];
        if (q <= 0.0) continue;
        double v = k_ * (n == 0 ? path[0] : running) / scale_;
        double u = v - std::floor(v);
        if (u < q) return n;
    }
    return g.nt;
}

PurifiedFamily purify(const RandomizedStop& rs, const ProblemSpec& spec, const Grid& grid, std::size_t n_samples,
                      std::span<const double> refinements, std::uint64_t seed, unsigned workers) {
    if (!(rs.grid() == grid)) fail(ErrorCode::GridMismatch, "randomized stop is defined on a different grid");
    InteractionStats none = empty_stats(spec);
    double smin = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n <= grid.nt; ++n)
        for (std::size_t j = 0; j <= grid.nx; ++j) smin = std::min(smin, std::abs(spec.diffusion(grid.t(n), grid.x(j), none)));
    if (!(smin > 1e-8))
        fail(ErrorCode::DegenerateDiffusion, "diffusion vanishes on the grid; purification needs a non-atomic path law");

    auto law = spec.initial_law.discretize(grid);
    double x0 = 0.0;
    for (std::size_t j = 0; j <= grid.nx; ++j) x0 += grid.x(j) * law[j] * grid.dx;

    PurifiedFamily fam;
    fam.n_samples = n_samples;
    fam.sigma_ref = std::abs(spec.diffusion(0.0, x0, none));
    auto paths = simulate_paths(spec, grid, n_samples, seed);

    RandomStream draws(seed, kStreamStopping);
    EmpiricalMeasure target;
    target.atoms.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        std::size_t k = sample_stop_node(rs, paths[i], draws.uniform(i, 0));
        target.atoms[i] = {grid.t(k), paths[i][k]};
    }

    fam.members.resize(refinements.size());
    parallel_for(refinements.size(), workers, [&](std::size_t r) {
        PurifiedRule rule(rs, refinements[r], fam.sigma_ref);
        EmpiricalMeasure pure;
        pure.atoms.resize(n_samples);
        for (std::size_t i = 0; i < n_samples; ++i) {
            std::size_t k = rule.stop_node(paths[i]);
            pure.atoms[i] = {grid.t(k), paths[i][k]};
        }
        fam.members[r] = {refinements[r], wasserstein_empirical(pure, target, 1, grid)};
    });
    return fam;
}

}  // namespace mfstop
