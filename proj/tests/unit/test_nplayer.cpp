#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/fixed_point.hpp"
#include "mfstop/nplayer.hpp"
#include "mfstop/obstacle.hpp"
#include "mfstop/wasserstein.hpp"

using namespace mfstop;

namespace {

const Grid kGrid = build_grid(-4, 6, 100, 1, 100);

ProblemSpec brownian(double x0 = 0.0) {
    auto s = fixture::toy_put(x0);
    return s;
}

double mean_sd(const std::vector<double>& v, double* se) {
    double m = 0, q = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) q += (x - m) * (x - m);
    q /= (v.size() - 1);
    if (se) *se = std::sqrt(q / v.size());
    return m;
}

}  // namespace

TEST_CASE("frozen single player") {
    auto s = brownian(0.7);
    s.diffusion = Coefficient::constant(0.0);
    auto b = simulate_players(s, 1, StoppingPolicy::never_stop(kGrid), 1);
    for (std::size_t n = 0; n <= kGrid.nt; ++n) CHECK(b.paths(0, n) == 0.7);
    auto m = empirical_measure(b);
    REQUIRE(m.size() == 1);
    CHECK(m.atoms[0].tau == 1.0);
    CHECK(m.atoms[0].x == 0.7);
}

TEST_CASE("Brownian players: CLT and second moment") {
    const std::size_t N = 10000;
    auto b = simulate_players(brownian(), N, StoppingPolicy::never_stop(kGrid), 5);
    std::vector<double> xt(N);
    for (std::size_t k = 0; k < N; ++k) xt[k] = b.paths(k, kGrid.nt);
    double se;
    double m = mean_sd(xt, &se);
    CHECK(std::abs(m) <= 3 / std::sqrt(double(N)));
    double var = 0;
    for (double x : xt) var += (x - m) * (x - m);
    var /= N - 1;
    CHECK(std::abs(var - 1.0) <= 0.05);

    auto small = simulate_players(brownian(), 1000, StoppingPolicy::never_stop(kGrid), 6);
    std::vector<double> sq;
    for (const auto& a : empirical_measure(small).atoms) sq.push_back(a.x * a.x);
    double se2;
    double m2 = mean_sd(sq, &se2);
    CHECK(std::abs(m2 - 1.0) <= 3 * se2);
}

TEST_CASE("interacting drift follows the mean-field ODE") {
    auto g = build_grid(-2, 3, 50, 1, 1000);
    auto s = brownian(1.0);
    s.diffusion = Coefficient::constant(0.0);
    s.features = {Feature::from_expression(Expression::parse("x"))};
    s.drift = fixture::expr("-avg[0]");
    auto b = simulate_players(s, 10000, StoppingPolicy::never_stop(g), 2);
    double y = oracle::rk4([](double v) { return -v; }, 1.0, 1.0, 1000);
    double mean = 0;
    for (std::size_t k = 0; k < b.N; ++k) mean += b.paths(k, g.nt - 1);
    mean /= b.N;
    CHECK(std::abs(b.stats[g.nt - 1].feature_averages[0] - y) <= 0.01 * y);
    CHECK(std::abs(mean - y) <= 0.01 * y);
}

TEST_CASE("identical players give one repeated atom; paths freeze after stopping") {
    auto s = brownian(0.2);
    s.diffusion = Coefficient::constant(0.0);
    auto b = simulate_players(s, 16, StoppingPolicy::stop_at_start(kGrid), 3);
    for (const auto& a : empirical_measure(b).atoms) {
        CHECK(a.tau == 0.0);
        CHECK(a.x == 0.2);
    }

    auto v = simulate_players(brownian(1.0), 200, stop_region(solve_obstacle(validate_spec(brownian(1.0), kGrid),
                                                                             MeasureFlow(kGrid))),
                              4);
    for (std::size_t k = 0; k < v.N; ++k) {
        auto n0 = *kGrid.time_index(v.stop_times[k]);
        for (std::size_t n = n0; n <= kGrid.nt; ++n) {
            CHECK(v.paths(k, n) == v.stop_states[k]);
            CHECK(v.survival(k, n) == 0);
        }
    }
}

TEST_CASE("batches do not depend on the worker count") {
    auto s = brownian(0.5);
    s.features = {Feature::from_expression(Expression::parse("x"))};
    s.drift = fixture::expr("0.3 * (avg[0] - x)");
    auto pol = StoppingPolicy::constant_hazard(kGrid, 1.0);
    SimOptions one, four;
    four.workers = 4;
    one.dt_sim = four.dt_sim = kGrid.dt / 4;
    auto a = simulate_players(s, 5000, pol, 9, one), b = simulate_players(s, 5000, pol, 9, four);
    CHECK(a.paths == b.paths);
    CHECK(a.stop_times == b.stop_times);
}

TEST_CASE("Wasserstein: identity, translation, brute force") {
    auto g = build_grid(0, 4, 4, 1, 4);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 25; ++trial) {
        std::size_t n = 1 + trial % 8;
        EmpiricalMeasure a, b;
        for (std::size_t i = 0; i < n; ++i) {
            a.atoms.push_back({u(rng), 4 * u(rng)});
            b.atoms.push_back({u(rng), 4 * u(rng)});
        }
        CHECK(wasserstein_empirical(a, a, 1, g) == 0.0);
        for (int p : {1, 2}) {
            std::vector<std::vector<double>> c(n, std::vector<double>(n));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double dt = a.atoms[i].tau - b.atoms[j].tau, dx = (a.atoms[i].x - b.atoms[j].x) / 4;
                    c[i][j] = p == 1 ? std::sqrt(dt * dt + dx * dx) : dt * dt + dx * dx;
                }
            double bf = oracle::brute_force_assignment(c) / n;
            if (p == 2) bf = std::sqrt(bf);
            CHECK(std::abs(wasserstein_empirical(a, b, p, g) - bf) <= 1e-12);
        }
        auto shifted = a;
        for (auto& at : shifted.atoms) at.x += 0.6;
        CHECK(std::abs(wasserstein_empirical(a, shifted, 1, g) - 0.6 / 4) <= 1e-12);
    }
    EmpiricalMeasure one{{{0.0, 0.0}}}, two{{{0.0, 0.0}, {1.0, 1.0}}};
    CHECK_THROWS_AS(wasserstein_empirical(one, two, 1, g), Error);
    CHECK(wasserstein_empirical(one, two, 1, g, MatchMode::subsample, 1) >= 0.0);
}

TEST_CASE("epsilon-Nash gap without interaction") {
    auto g = build_grid(-3, 5, 100, 1, 100);
    auto s = fixture::toy_put(1.0);
    auto vs = validate_spec(s, g);
    auto vf = solve_obstacle(vs, MeasureFlow(g));
    double disc = scheme_error_bound(g, initial_value(vf, vs.law));
    auto opt = eps_nash_gap(s, 16, stop_region(vf), 3, 100);
    CHECK(opt.gap <= 2 * opt.se + disc);

    auto nev = eps_nash_gap(s, 16, StoppingPolicy::never_stop(g), 3, 100);
    double best = oracle::binomial_stopping([](double, double x) { return std::max(1 - x, 0.0); }, 1, 1, 1, 2000);
    double never = 1 / std::sqrt(2 * std::acos(-1.0));  // E(1 - X_1)^+ for X_1 ~ N(1, 1)
    CHECK(std::abs(nev.gap - (best - never)) <= 2 * nev.se + 1e-2);
}

TEST_CASE("chaos study: rate and Monte Carlo scaling") {
    auto g = build_grid(-3, 5, 100, 1, 100);
    auto s = fixture::toy_put(1.0);
    auto pol = stop_region(solve_obstacle(validate_spec(s, g), MeasureFlow(g)));
    auto t = chaos_study(s, pol, {16, 64, 256}, 60, 5, {}, nullptr, false);
    CHECK(t.slope >= -0.7);
    CHECK(t.slope <= -0.3);

    auto a = chaos_study(s, pol, {32}, 100, 6, {}, nullptr, false);
    auto b = chaos_study(s, pol, {32}, 200, 6, {}, nullptr, false);
    double ratio = a.rows[0].w1_se / b.rows[0].w1_se;
    CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("large-N reference beats small N in paired trials") {
    auto g = build_grid(-3, 5, 100, 1, 100);
    auto s = fixture::toy_put(1.0);
    s.features = {Feature::from_expression(Expression::parse("x"))};
    s.drift = fixture::expr("0.5 * (avg[0] - x)");
    auto pol = StoppingPolicy::constant_hazard(g, 1.0);
    auto ref = empirical_measure(simulate_players(s, 1024, pol, 99));
    int wins = 0;
    const int trials = 20;
    for (int r = 0; r < trials; ++r) {
        SimOptions o;
        o.rep = r;
        auto m16 = empirical_measure(simulate_players(s, 16, pol, 1, o));
        auto m256 = empirical_measure(simulate_players(s, 256, pol, 2, o));
        double w16 = wasserstein_empirical(m16, ref, 1, g, MatchMode::subsample, r);
        double w256 = wasserstein_empirical(m256, ref, 1, g, MatchMode::subsample, r);
        wins += w16 > w256;
    }
    CHECK(wins >= 18);
}

TEST_CASE("simulation guards") {
    auto s = brownian(0.0);
    auto never = StoppingPolicy::never_stop(kGrid);
    SimOptions bad;
    bad.dt_sim = kGrid.dt * 0.3;
    CHECK_THROWS_AS(simulate_players(s, 4, never, 1, bad), Error);

    auto fast = s;
    fast.drift = Coefficient::constant(50.0);
    try {
        simulate_players(fast, 4, never, 1);
        FAIL("expected a CFL violation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CFLViolation);
    }

    auto b = simulate_players(s, 50, never, 1);
    std::ostringstream out;
    CHECK_THROWS_AS(write_trajectories_csv(b, out, 100), Error);
    std::ostringstream ok;
    write_trajectories_csv(b, ok);
    const std::string text = ok.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 50 * static_cast<long>(kGrid.nt + 1));
}

TEST_CASE("stopped players keep weighing in unless a feature says otherwise") {
    auto s = brownian(0.0);
    s.diffusion = Coefficient::constant(0.0);
    s.features = {Feature::from_expression(Expression::parse("1")), Feature::from_expression(Expression::parse("1"), true)};
    auto b = simulate_players(s, 40, StoppingPolicy::constant_hazard(kGrid, 2.0), 12);
    const auto& st = b.stats[kGrid.nt / 2];
    CHECK(st.feature_averages[0] == 1.0);
    CHECK(st.feature_averages[1] == doctest::Approx(1.0 - st.stopped_mass));
}
