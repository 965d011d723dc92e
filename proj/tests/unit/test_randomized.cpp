#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/randomized_stopping.hpp"
#include "mfstop/rng.hpp"

using namespace mfstop;

namespace {

const Grid kGrid = build_grid(-4, 4, 80, 1, 100);

std::vector<double> flat_path(const Grid& g) { return std::vector<double>(g.nt + 1, 0.0); }

std::vector<double> draw_times(const RandomizedStop& rs, std::size_t n, std::uint64_t seed) {
    RandomStream rng(seed, kStreamStopping);
    auto path = flat_path(rs.grid());
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = sample_stop(rs, path, rng.uniform(i, 0));
    return t;
}

std::vector<PathSample> hitting_samples(const std::vector<std::vector<double>>& paths, const Grid& g, double level) {
    std::vector<PathSample> out;
    for (const auto& p : paths) {
        std::size_t n = 0;
        while (n < g.nt && p[n] > level) ++n;
        out.push_back({g.t(n), p});
    }
    return out;
}

}  // namespace

TEST_CASE("deterministic time always returns t0") {
    auto rs = RandomizedStop::deterministic_time(kGrid, 0.37);
    for (double u : {1e-9, 0.3, 0.999999}) CHECK(sample_stop(rs, flat_path(kGrid), u) == doctest::Approx(0.37));
}

TEST_CASE("uniform time law") {
    auto g = build_grid(-1, 1, 4, 1, 1000);
    auto rs = RandomizedStop::time_cdf(g, [](double t) { return t; });
    auto t = draw_times(rs, 100000, 4);
    double mean = 0, m2 = 0;
    for (double v : t) mean += v;
    mean /= t.size();
    for (double v : t) m2 += (v - mean) * (v - mean);
    double se = std::sqrt(m2 / (t.size() - 1) / t.size());
    CHECK(std::abs(mean - 0.5) <= 3 * se);
}

TEST_CASE("constant hazard survival and KS") {
    auto rs = RandomizedStop::constant_hazard(kGrid, 2.0);
    const std::size_t n = 100000;
    auto t = draw_times(rs, n, 7);
    double surv = 0;
    for (double v : t) surv += v > 0.5 + 1e-12;
    surv /= n;
    double p = std::exp(-1.0), se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(surv - p) <= 3 * se);

    std::vector<double> nodes;
    for (std::size_t k = 0; k <= kGrid.nt; ++k) nodes.push_back(kGrid.t(k));
    double ks = oracle::ks_distance_lattice(t, nodes, [](double s) { return s >= 1.0 ? 1.0 : 1 - std::exp(-2 * s); });
    CHECK(ks <= 1.36 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("cdf conversions") {
    auto path = flat_path(kGrid);
    auto zero = hazard_to_cdf(NodeField(kGrid, 0.0), kGrid, path);
    for (std::size_t n = 0; n < kGrid.nt; ++n) CHECK(zero[n] == 0.0);
    CHECK(zero[kGrid.nt] == 1.0);

    auto c = hazard_to_cdf(NodeField(kGrid, 1.5), kGrid, path);
    for (std::size_t n = 0; n < kGrid.nt; ++n) CHECK(std::abs(c[n] - (1 - std::exp(-1.5 * kGrid.t(n)))) < 1e-12);

    NodeField huge(kGrid, 0.0);
    for (std::size_t j = 0; j <= kGrid.nx; ++j) huge(1, j) = 1e9;
    CHECK(hazard_to_cdf(huge, kGrid, path)[1] >= 1 - 1e-12);

    // round trip where A < 1
    NodeField theta(kGrid);
    for (std::size_t n = 1; n <= kGrid.nt; ++n)
        for (std::size_t j = 0; j <= kGrid.nx; ++j) theta(n, j) = 0.5 + std::sin(0.1 * n) * 0.4;
    auto A = hazard_to_cdf(theta, kGrid, path);
    auto back = cdf_to_hazard(A, kGrid);
    for (std::size_t n = 1; n < kGrid.nt; ++n) CHECK(std::abs(back[n] - theta(n, 0)) < 1e-12);

    // every constructed stop has a monotone CDF ending at one
    for (const auto& rs : {RandomizedStop::constant_hazard(kGrid, 3.0), RandomizedStop::deterministic_time(kGrid, 0.5),
                           RandomizedStop::time_cdf(kGrid, [](double t) { return t * t; })}) {
        auto a = rs.cdf(path);
        for (std::size_t n = 1; n < a.size(); ++n) CHECK(a[n] >= a[n - 1]);
        CHECK(a.back() == 1.0);
    }
}

TEST_CASE("conditional independence test") {
    auto s = fixture::toy_put(0.0);
    auto paths = simulate_paths(s, kGrid, 10000, 21);

    CHECK(cond_independence_test(hitting_samples(paths, kGrid, -0.5), kGrid, 0.5, 200, 1).passed);

    std::vector<PathSample> peek;
    for (const auto& p : paths) peek.push_back({p.back() > p.front() ? 0.25 : 1.0, p});
    auto bad = cond_independence_test(peek, kGrid, 0.25, 200, 1);
    CHECK_FALSE(bad.passed);
    CHECK(bad.p_value < 0.01);

    auto rs = RandomizedStop::constant_hazard(kGrid, 1.0);
    RandomStream u(21, kStreamStopping);
    std::vector<PathSample> haz;
    for (std::size_t i = 0; i < paths.size(); ++i) haz.push_back({sample_stop(rs, paths[i], u.uniform(i, 0)), paths[i]});
    CHECK(cond_independence_test(haz, kGrid, 0.5, 200, 2).passed);
}

TEST_CASE("calibration: adapted generators rarely fail") {
    auto s = fixture::toy_put(0.0);
    auto g = build_grid(-4, 4, 80, 1, 50);
    int failures = 0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        auto paths = simulate_paths(s, g, 2000, 100 + k);
        auto samples = hitting_samples(paths, g, -0.2 - 0.05 * static_cast<double>(k % 5));
        failures += !cond_independence_test(samples, g, 0.5, 200, 500 + k).passed;
    }
    CHECK(failures <= 1);
}

TEST_CASE("purification") {
    auto s = fixture::toy_put(0.0);
    auto g = build_grid(-4, 4, 160, 1, 100);

    auto pure = RandomizedStop::deterministic_time(g, 0.5);
    std::vector<double> ks{0.1};
    auto same = purify(pure, s, g, 500, ks, 3);
    CHECK(same.members.at(0).gap <= 0.05);

    auto two = RandomizedStop::time_cdf(g, [](double t) { return t < 0.5 - 1e-9 ? 0.0 : 0.5; });
    std::vector<double> refine{0.0005, 0.01, 1.0};
    auto fam = purify(two, s, g, 1000, refine, 3, 2);
    REQUIRE(fam.members.size() == 3);
    CHECK(fam.members[2].gap < fam.members[0].gap);
    CHECK(fam.members[2].gap <= 0.05);

    auto still = s;
    still.diffusion = Coefficient::constant(0.0);
    CHECK_THROWS_AS(purify(two, still, g, 100, refine, 3), Error);
}
