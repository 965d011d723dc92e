#include "mfstop/nplayer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfstop/csv.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/fokker_planck.hpp"
#include "mfstop/obstacle.hpp"
#include "mfstop/parallel.hpp"
#include "mfstop/rng.hpp"

namespace mfstop {
namespace {

std::size_t substeps(const Grid& g, double dt_sim) {
    if (dt_sim <= 0.0) return 1;
    double r = g.dt / dt_sim;
    auto m = static_cast<std::size_t>(std::llround(r));
    if (m < 1 || std::abs(r - static_cast<double>(m)) > 1e-9 * r)
        fail(ErrorCode::GridError, "dt_sim must divide the grid dt");
    return m;
}

InteractionStats empirical_stats(const ProblemSpec& spec, std::span<const double> x,
                                 std::span<const unsigned char> alive, double t, std::vector<double>& scratch) {
    const std::size_t N = x.size();
    InteractionStats s;
    s.time = t;
    s.feature_averages.resize(spec.features.size());
    scratch.resize(N);
    for (std::size_t i = 0; i < spec.features.size(); ++i) {
        const auto& f = spec.features[i];
        for (std::size_t k = 0; k < N; ++k) scratch[k] = (f.unstopped_only && !alive[k]) ? 0.0 : f.h(x[k]);
        s.feature_averages[i] = pairwise_sum(scratch.begin(), N) / static_cast<double>(N);
    }
    std::size_t stopped = 0;
    for (std::size_t k = 0; k < N; ++k) stopped += alive[k] ? 0 : 1;
    s.stopped_mass = static_cast<double>(stopped) / static_cast<double>(N);
    return s;
}

std::size_t node_of(const Grid& g, double t) {
    double r = t / g.dt;
    auto n = static_cast<std::size_t>(std::ceil(r - 1e-9));
    return std::min(n, g.nt);
}

// Cloud-in-cell deposit of players [first, N) into flow with the given weight per player.
void deposit(const PlayerBatch& b, std::size_t first, double weight, MeasureFlow& flow) {
    const Grid& g = b.grid;
    for (std::size_t n = 0; n <= g.nt; ++n) {
        auto r1 = flow.m1.row(n);
        auto r0 = flow.m0.row(n);
        for (std::size_t k = first; k < b.N; ++k) {
            double pos = std::clamp((b.paths(k, n) - g.x_min) / g.dx, 0.0, static_cast<double>(g.nx));
            auto j = std::min(static_cast<std::size_t>(pos), g.nx - 1);
            double w = pos - static_cast<double>(j);
            auto row = b.survival(k, n) ? r1 : r0;
            row[j] += weight * (1.0 - w) / g.dx;
            row[j + 1] += weight * w / g.dx;
        }
    }
}

double payoff_factor(const ProblemSpec& spec, double rm) {
    switch (spec.criterion.kind) {
    case CriterionKind::anti_monotone_product: return spec.criterion.F(rm);
    case CriterionKind::potential: return spec.criterion.G.derivative(rm);
    default: return 1.0;
    }
}

// Mean linearized payoff over the batch's players.
double on_policy_payoff(const ProblemSpec& spec, const PlayerBatch& b) {
    std::vector<double> g(b.N);
    for (std::size_t k = 0; k < b.N; ++k)
        g[k] = spec.reward(b.stop_times[k], b.stop_states[k], b.stats[node_of(b.grid, b.stop_times[k])]);
    double rm = pairwise_sum(g.begin(), b.N) / static_cast<double>(b.N);
    return payoff_factor(spec, rm) * rm;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
    MeanSe r;
    const double n = static_cast<double>(v.size());
    r.mean = pairwise_sum(v.begin(), v.size()) / n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return r;
}

// Runs n_rep batches in blocks of `workers`; per_rep(r, batch, flow_slot) runs in parallel,
// then flows are accumulated into `acc` in repetition order.
template <class Fn>
void run_reps(const ProblemSpec& spec, std::size_t N, const StoppingPolicy& policy, std::uint64_t seed,
              std::size_t n_rep, const SimOptions& opt, MeasureFlow* acc, Fn&& per_rep) {
    const unsigned workers = std::max(1u, opt.workers);
    std::vector<MeasureFlow> slots(acc ? std::min<std::size_t>(workers, n_rep) : 0);
    for (std::size_t start = 0; start < n_rep; start += workers) {
        std::size_t count = std::min<std::size_t>(workers, n_rep - start);
        parallel_for(count, workers, [&](std::size_t i) {
            SimOptions o = opt;
            o.rep = opt.rep * 1000003ULL + start + i;
            o.workers = 1;
            PlayerBatch b = simulate_players(spec, N, policy, seed, o);
            MeasureFlow* slot = nullptr;
            if (acc) {
                slots[i] = MeasureFlow(policy.grid());
                slot = &slots[i];
            }
            per_rep(start + i, b, slot);
        });
        if (acc)
            for (std::size_t i = 0; i < count; ++i) {
                auto& a1 = acc->m1.data();
                auto& a0 = acc->m0.data();
                const auto& s1 = slots[i].m1.data();
                const auto& s0 = slots[i].m0.data();
                for (std::size_t q = 0; q < a1.size(); ++q) {
                    a1[q] += s1[q];
                    a0[q] += s0[q];
                }
            }
    }
}

}  // namespace

PlayerBatch simulate_players(const ProblemSpec& spec, std::size_t N, const StoppingPolicy& policy,
                             std::uint64_t seed, const SimOptions& opt) {
    if (N < 1) fail(ErrorCode::InvalidPolicy, "N must be at least 1");
    const Grid& g = policy.grid();
    if (policy.kind() == StoppingPolicy::Kind::pure ? policy.stop_mask().empty() : policy.hazard().empty())
        fail(ErrorCode::InvalidPolicy, "policy has no fields");
    const std::size_t m = substeps(g, opt.dt_sim);
    const double h = g.dt / static_cast<double>(m);
    const double sqh = std::sqrt(h);

    PlayerBatch b;
    b.grid = g;
    b.N = N;
    b.seed = seed;
    b.rep = opt.rep;
    b.dt_sim = h;
    b.paths = Field2D<double>(N, g.nt + 1);
    b.survival = Field2D<unsigned char>(N, g.nt + 1, 0);
    b.stop_times.assign(N, g.horizon);
    b.stop_states.assign(N, 0.0);
    b.stats.reserve(g.nt + 1);

    RandomStream init(seed, kStreamInitial, opt.rep);
    RandomStream noise(seed, kStreamSimulation, opt.rep);
    RandomStream stop(seed, kStreamStopping, opt.rep);
    LawSampler law(spec.initial_law, g);

    std::vector<double> x(N);
    std::vector<unsigned char> alive(N, 1);
    std::vector<double> scratch;
    for (std::size_t k = 0; k < N; ++k) x[k] = law(init.uniform(k, 0, 0), init.uniform(k, 0, 1));

    auto stop_player = [&](std::size_t k, double t) {
        alive[k] = 0;
        b.stop_times[k] = t;
        b.stop_states[k] = x[k];
    };
    // Stop decision at substep s (time s*h), governed by node n = ceil(s/m).
    auto decide = [&](std::size_t k, std::size_t s) {
        const bool exact = s % m == 0;
        const std::size_t n = (s + m - 1) / m;
        const double t = exact ? g.t(n) : static_cast<double>(s) * h;
        if (exact && n == g.nt) return stop_player(k, t);
        double q;
        if (policy.kind() == StoppingPolicy::Kind::pure) {
            q = policy.contact(n, x[k]) ? 1.0 : 0.0;
        } else {
            double a = exact ? policy.atom_at(n, x[k]) : 0.0;
            q = s == 0 ? a : 1.0 - (1.0 - a) * std::exp(-policy.hazard_at(n, x[k]) * h);
        }
        if (q >= 1.0 || (q > 0.0 && stop.uniform(k, s) < q)) stop_player(k, t);
    };
    auto record = [&](std::size_t n) {
        for (std::size_t k = 0; k < N; ++k) {
            b.paths(k, n) = x[k];
            b.survival(k, n) = alive[k];
        }
    };

    for (std::size_t k = 0; k < N; ++k) decide(k, 0);
    InteractionStats cur = empirical_stats(spec, x, alive, 0.0, scratch);
    b.stats.push_back(cur);
    record(0);

    const std::size_t total = g.nt * m;
    const unsigned workers = N >= 4096 ? std::max(1u, opt.workers) : 1u;
    const std::size_t chunk = (N + workers - 1) / workers;
    std::vector<unsigned char> cfl_bad(N, 0);
    for (std::size_t s = 0; s < total; ++s) {
        const double t = static_cast<double>(s) * h;
        parallel_for(workers, workers, [&](std::size_t w) {
            for (std::size_t k = w * chunk; k < std::min(N, (w + 1) * chunk); ++k) {
                if (!alive[k]) continue;
                double bk = spec.drift(t, x[k], cur);
                if (std::abs(bk) * h > g.dx) cfl_bad[k] = 1;
                x[k] += bk * h + spec.diffusion(t, x[k], cur) * sqh * noise.normal(k, s + 1);
                decide(k, s + 1);
            }
        });
        for (std::size_t k = 0; k < N; ++k)
            if (cfl_bad[k])
                fail(ErrorCode::CFLViolation, "dt_sim * |b| exceeds dx for player " + std::to_string(k) +
                                                  " at t=" + format_double(t));
        const bool node = (s + 1) % m == 0;
        const double t1 = node ? g.t((s + 1) / m) : static_cast<double>(s + 1) * h;
        cur = empirical_stats(spec, x, alive, t1, scratch);
        if (node) {
            b.stats.push_back(cur);
            record((s + 1) / m);
        }
    }
    return b;
}

EmpiricalMeasure empirical_measure(const PlayerBatch& batch) {
    EmpiricalMeasure em;
    em.atoms.resize(batch.N);
    for (std::size_t k = 0; k < batch.N; ++k) em.atoms[k] = {batch.stop_times[k], batch.stop_states[k]};
    return em;
}

namespace {

struct GapWork {
    std::vector<double> payoffs;
    MeasureFlow flow;
};

GapEstimate finish_gap(const ProblemSpec& spec, std::size_t N, std::size_t n_rep, GapWork& w) {
    const Grid& g = w.flow.grid;
    GapEstimate est;
    est.N = N;
    est.n_rep = n_rep;
    auto ms = mean_se(w.payoffs);
    est.on_policy = ms.mean;
    est.on_policy_se = ms.se;
    est.deviation = best_response_value(spec, g, w.flow, spec.initial_law.discretize(g));
    est.gap = std::max(est.deviation - est.on_policy, 0.0);
    est.se = ms.se;
    return est;
}

void gap_rep(const ProblemSpec& spec, std::size_t n_rep, const PlayerBatch& b, std::size_t r, MeasureFlow* slot,
             GapWork& w) {
    w.payoffs[r] = on_policy_payoff(spec, b);
    std::size_t first = b.N > 1 ? 1 : 0;
    deposit(b, first, 1.0 / (static_cast<double>(b.N - first) * static_cast<double>(n_rep)), *slot);
}

}  // namespace

GapEstimate eps_nash_gap(const ProblemSpec& spec, std::size_t N, const StoppingPolicy& policy, std::uint64_t seed,
                         std::size_t n_rep, const SimOptions& opt) {
    if (!spec.criterion.linear_in_P())
        fail(ErrorCode::CriterionNotLinear,
             std::string("eps-Nash gap needs a criterion linear in P, got ") + to_string(spec.criterion.kind));
    if (n_rep < 1) fail(ErrorCode::EmptySample, "n_rep must be at least 1");
    GapWork w{std::vector<double>(n_rep), MeasureFlow(policy.grid())};
    run_reps(spec, N, policy, seed, n_rep, opt, &w.flow,
             [&](std::size_t r, const PlayerBatch& b, MeasureFlow* slot) { gap_rep(spec, n_rep, b, r, slot, w); });
    return finish_gap(spec, N, n_rep, w);
}

ConvergenceTable chaos_study(const ProblemSpec& spec, const StoppingPolicy& policy, const std::vector<std::size_t>& Ns,
                             std::size_t trials, std::uint64_t seed, const SimOptions& opt,
                             const MeasureFlow* reference, bool with_gap) {
    if (trials < 2) fail(ErrorCode::EmptySample, "chaos study needs at least two trials");
    const Grid& g = policy.grid();
    MeasureFlow own;
    if (!reference) {
        own = evolve_density(spec, g, policy, spec.initial_law.discretize(g));
        reference = &own;
    }
    with_gap = with_gap && spec.criterion.linear_in_P();

    ConvergenceTable table;
    for (std::size_t N : Ns) {
        std::vector<double> w1(trials);
        GapWork w{std::vector<double>(trials), MeasureFlow(g)};
        run_reps(spec, N, policy, seed, trials, opt, with_gap ? &w.flow : nullptr,
                 [&](std::size_t r, const PlayerBatch& b, MeasureFlow* slot) {
                     auto target = sample_flow_atoms(*reference, N, seed, r * 1000003ULL + N);
                     w1[r] = wasserstein_empirical(empirical_measure(b), target, 1, g);
                     if (with_gap) gap_rep(spec, trials, b, r, slot, w);
                 });
        ConvergenceRow row;
        row.N = N;
        auto ms = mean_se(w1);
        row.w1 = ms.mean;
        row.w1_se = ms.se;
        if (with_gap) {
            auto est = finish_gap(spec, N, trials, w);
            row.eps = est.gap;
            row.eps_se = est.se;
        }
        table.rows.push_back(row);
    }
    if (table.rows.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(table.rows.size());
        for (const auto& r : table.rows) {
            double lx = std::log(static_cast<double>(r.N)), ly = std::log(r.w1);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        table.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return table;
}

void write_gap_csv(const std::vector<GapEstimate>& rows, std::ostream& out) {
    CsvWriter w(out, {"N", "n_rep", "on_policy", "on_policy_se", "deviation", "gap", "se"});
    for (const auto& r : rows) {
        w.cell(r.N).cell(r.n_rep).cell(r.on_policy).cell(r.on_policy_se).cell(r.deviation).cell(r.gap).cell(r.se);
        w.end_row();
    }
}

void write_convergence_csv(const ConvergenceTable& table, std::ostream& out) {
    CsvWriter w(out, {"N", "w1", "w1_se", "eps", "eps_se"});
    for (const auto& r : table.rows) {
        w.cell(r.N).cell(r.w1).cell(r.w1_se).cell(r.eps).cell(r.eps_se);
        w.end_row();
    }
}

void write_trajectories_csv(const PlayerBatch& batch, std::ostream& out, std::size_t max_rows) {
    std::size_t rows = batch.N * batch.grid.time_nodes();
    if (rows > max_rows)
        fail(ErrorCode::IoError, "trajectory dump of " + std::to_string(rows) + " rows exceeds the limit of " +
                                     std::to_string(max_rows));
    CsvWriter w(out, {"player", "t", "x", "survival"});
    for (std::size_t k = 0; k < batch.N; ++k)
        for (std::size_t n = 0; n <= batch.grid.nt; ++n) {
            w.cell(k).cell(batch.grid.t(n)).cell(batch.paths(k, n)).cell(static_cast<int>(batch.survival(k, n)));
            w.end_row();
        }
}

}  // namespace mfstop
