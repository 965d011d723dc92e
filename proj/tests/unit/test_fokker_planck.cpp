#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/fixed_point.hpp"
#include "mfstop/fokker_planck.hpp"
#include "mfstop/obstacle.hpp"

using namespace mfstop;

namespace {

void check_conservation(const MeasureFlow& f) {
    auto r = mass_accounting(f);
    CHECK(r.max_defect <= 1e-8);
    for (std::size_t n = 1; n < r.stopped.size(); ++n) CHECK(r.stopped[n] >= r.stopped[n - 1] - 1e-12);
    for (double v : f.m1.data()) CHECK(v >= -1e-12);
    for (double v : f.m0.data()) CHECK(v >= -1e-12);
}

}  // namespace

TEST_CASE("frozen dynamics keep the initial law") {
    auto g = build_grid(-2, 2, 40, 1, 10);
    auto s = fixture::toy_put(0.3);
    s.diffusion = Coefficient::constant(0.0);
    auto vs = validate_spec(s, g);
    auto f = evolve_density(vs, StoppingPolicy::never_stop(g));
    for (std::size_t n = 0; n < g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            CHECK(f.m1(n, j) == vs.law[j]);
            CHECK(f.m0(n, j) == 0.0);
        }
    CHECK(frozen_region_check(f, StoppingPolicy::never_stop(g)) == 0.0);
    check_conservation(f);
}

TEST_CASE("stop everything at the start") {
    auto g = build_grid(-2, 2, 40, 1, 10);
    auto vs = validate_spec(fixture::toy_put(0.3), g);
    auto p = StoppingPolicy::stop_at_start(g);
    auto f = evolve_density(vs, p);
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            CHECK(f.m1(n, j) == 0.0);
            CHECK(f.m0(n, j) == vs.law[j]);
        }
    CHECK(frozen_region_check(f, p) == 0.0);
}

TEST_CASE("heat kernel second moment") {
    auto g = build_grid(-6, 6, 400, 1, 400);
    auto vs = validate_spec(fixture::toy_put(0.0), g);
    auto f = evolve_density(vs, StoppingPolicy::never_stop(g));
    check_conservation(f);
    double m2 = 0.0;
    const std::size_t n = *g.time_index(0.5);
    for (std::size_t j = 0; j <= g.nx; ++j) m2 += g.x(j) * g.x(j) * f.m1(n, j) * g.dx;
    double exact = oracle::heat_second_moment(0.0, 1.0, 0.5);
    CHECK(std::abs(m2 - exact) <= 0.02 * exact);
}

TEST_CASE("constant hazard without diffusion gives exponential survival") {
    auto g = build_grid(-1, 1, 20, 1, 1000);
    auto s = fixture::toy_put(0.0);
    s.diffusion = Coefficient::constant(0.0);
    auto vs = validate_spec(s, g);
    auto f = evolve_density(vs, StoppingPolicy::constant_hazard(g, 2.0));
    auto r = mass_accounting(f);
    CHECK(std::abs(r.stopped[*g.time_index(0.5)] - (1 - std::exp(-1.0))) < 1e-3);
    check_conservation(f);
}

TEST_CASE("empty stop region: inflow only at T") {
    auto g = build_grid(-4, 4, 80, 1, 50);
    auto vs = validate_spec(fixture::toy_put(0.0), g);
    auto f = evolve_density(vs, StoppingPolicy::never_stop(g));
    auto r = mass_accounting(f);
    for (std::size_t n = 0; n < g.nt; ++n) CHECK(r.stopped[n] == 0.0);
    CHECK(std::abs(r.stopped[g.nt] - 1.0) < 1e-12);
}

TEST_CASE("toy-put equilibrium: conservation and frozen region") {
    auto g = build_grid(-3, 5, 400, 1, 400);
    auto vs = validate_spec(fixture::toy_put(), g);
    auto vf = solve_obstacle(vs, MeasureFlow(g));
    auto p = stop_region(vf);
    auto f = evolve_density(vs, p);
    check_conservation(f);
    CHECK(frozen_region_check(f, p) <= 1e-10);
}

TEST_CASE("pure region and its randomized form give the same flow") {
    auto g = build_grid(-3, 5, 120, 1, 100);
    auto vs = validate_spec(fixture::toy_put(), g);
    auto p = stop_region(solve_obstacle(vs, MeasureFlow(g)));
    auto a = evolve_density(vs, p), b = evolve_density(vs, p.as_randomized());
    CHECK(a.m1 == b.m1);
    CHECK(a.m0 == b.m0);
}

TEST_CASE("drifted diffusion conserves mass and the mean drifts") {
    auto g = build_grid(-5, 5, 200, 1, 200);
    auto s = fixture::toy_put(0.0);
    s.drift = Coefficient::constant(0.5);
    auto vs = validate_spec(s, g);
    auto f = evolve_density(vs, StoppingPolicy::never_stop(g));
    check_conservation(f);
    double mean = 0.0;
    for (std::size_t j = 0; j <= g.nx; ++j) mean += g.x(j) * f.m1(g.nt - 1, j) * g.dx;
    CHECK(mean == doctest::Approx(0.5 * g.t(g.nt - 1)).epsilon(0.02));
}
