#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/fixed_point.hpp"
#include "mfstop/fokker_planck.hpp"

using namespace mfstop;

namespace {

const Grid kGrid = build_grid(-3, 5, 200, 1, 200);

ScalarFunction F_of(const char* s) { return ScalarFunction::from_expression(Expression::parse(s, "y")); }

EquilibriumResult solve_from(const ProblemSpec& s, InitialFlow init, double damping = 1.0) {
    auto law = s.initial_law.discretize(kGrid);
    PicardOptions opt;
    opt.damping = damping;
    opt.max_iter = 300;
    return picard_iterate(s, kGrid, initial_flow(s, kGrid, init, law), opt);
}

MeasureFlow point_flow(const Grid& g, std::size_t j, double stopped_share) {
    MeasureFlow f(g);
    for (std::size_t n = 0; n <= g.nt; ++n) {
        f.m1(n, j) = (1 - stopped_share) / g.dx;
        f.m0(n, j) = stopped_share / g.dx;
    }
    return f;
}

}  // namespace

TEST_CASE("flow_distance examples") {
    auto g = build_grid(-2, 2, 40, 1, 4);
    auto a = point_flow(g, 10, 0.3), b = point_flow(g, 25, 0.3);
    CHECK(flow_distance(a, a) == 0.0);
    CHECK(flow_distance(a, b) == doctest::Approx(15 * g.dx).epsilon(1e-12));
    CHECK(std::abs(flow_distance(a, point_flow(g, 11, 0.3)) - g.dx) < 1e-12);
}

TEST_CASE("no interaction converges at once to the standalone value") {
    auto s = fixture::toy_put();
    auto r = solve_from(s, InitialFlow::stopped_at_start);
    CHECK(r.converged);
    CHECK(r.iterations <= 2);
    auto law = s.initial_law.discretize(kGrid);
    CHECK(std::abs(r.value - best_response_value(s, kGrid, MeasureFlow(kGrid), law)) <= 1e-12);
}

TEST_CASE("anti-monotone toy: initial flows and damping do not change the value") {
    auto s = fixture::anti_monotone(F_of("1 / (1 + y)"));
    auto a = solve_from(s, InitialFlow::stopped_at_start);
    auto b = solve_from(s, InitialFlow::never_stopped);
    auto c = solve_from(s, InitialFlow::never_stopped, 0.5);
    auto d = solve_from(s, InitialFlow::mixed, 0.3);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    REQUIRE(c.converged);
    REQUIRE(d.converged);
    CHECK(std::abs(a.value - b.value) <= 1e-6);
    CHECK(std::abs(b.value - c.value) <= 1e-6);
    CHECK(std::abs(b.value - d.value) <= 10 * 1e-9);
    CHECK(std::abs(b.value - c.value) <= 10 * 1e-9);

    // certificates
    for (const auto* r : {&a, &b}) {
        auto law = s.initial_law.discretize(kGrid);
        PicardOptions opt;
        auto br = best_response(s, kGrid, r->flow, law, opt);
        auto next = evolve_density(s, kGrid, br.policy, law, &r->flow);
        CHECK(flow_distance(next, r->flow) <= 2 * opt.fp_tol);
        CHECK(equilibrium_gap(s, kGrid, *r) <= opt.fp_tol * (1 + std::abs(r->value)) +
                                                  scheme_error_bound(kGrid, r->value));
    }
}

TEST_CASE("uniqueness probe") {
    auto law = fixture::toy_put().initial_law.discretize(kGrid);
    auto inits_for = [&](const ProblemSpec& s) {
        std::vector<MeasureFlow> v;
        for (auto k : {InitialFlow::stopped_at_start, InitialFlow::never_stopped, InitialFlow::mixed})
            v.push_back(initial_flow(s, kGrid, k, law));
        return v;
    };
    PicardOptions opt;
    opt.damping = 0.5;
    opt.max_iter = 300;

    auto dec = fixture::anti_monotone(F_of("-y"));
    auto r = uniqueness_probe(dec, kGrid, inits_for(dec), opt, 3);
    CHECK(r.values.size() == 3);
    CHECK(r.spread <= 1e-6);

    auto flat = fixture::anti_monotone(F_of("2"));
    CHECK(uniqueness_probe(flat, kGrid, inits_for(flat), opt).spread <= 1e-12);

    auto inc = fixture::anti_monotone(F_of("y"));
    auto ri = uniqueness_probe(inc, kGrid, inits_for(inc), opt);
    CHECK(ri.distances.size() == 3);
    MESSAGE("coordination-game spread: " << ri.spread);

    // worker count does not change anything
    auto r1 = uniqueness_probe(dec, kGrid, inits_for(dec), opt, 1);
    CHECK(r1.values == r.values);
}

TEST_CASE("potential reduction") {
    auto g = build_grid(-4, 5, 180, 1, 160);
    PicardOptions opt;

    auto lin = fixture::toy_put(0.5);
    lin.criterion.kind = CriterionKind::potential;
    lin.criterion.G = ScalarFunction::from_expression(Expression::parse("y", "y"));
    auto rl = potential_solve(lin, g, 2, opt);
    auto law = lin.initial_law.discretize(g);
    CHECK(std::abs(rl.equilibrium.value - best_response_value(fixture::toy_put(0.5), g, MeasureFlow(g), law)) <= 1e-10);

    for (const char* G : {"-y^2 / 2", "y^2 / 2"}) {
        auto s = lin;
        s.criterion.G = ScalarFunction::from_expression(Expression::parse(G, "y"));
        auto r = potential_solve(s, g, 4, opt, 2);
        CAPTURE(G);
        CHECK(r.gap <= 1e-4 + r.discretization_error);
    }
}

TEST_CASE("submartingale diagnostic") {
    auto g = build_grid(-6, 6, 240, 1, 100);
    auto s = fixture::toy_put(0.0);
    s.features = {Feature::from_expression(Expression::parse("x"))};
    auto never = StoppingPolicy::never_stop(g);
    CHECK(submartingale_check(s, g, 0, never, 1e-8).max_violation <= 1e-8);
    s.drift = Coefficient::constant(0.5);
    CHECK(submartingale_check(s, g, 0, never).passed);
    s.drift = Coefficient::constant(-0.5);
    auto r = submartingale_check(s, g, 0, never);
    CHECK_FALSE(r.passed);
    CHECK(r.max_violation == doctest::Approx(0.5 * g.dt).epsilon(0.05));
    CHECK_THROWS_AS(submartingale_check(s, g, 3, never), Error);
}
