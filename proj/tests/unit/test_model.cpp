#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/expression.hpp"
#include "mfstop/measure_flow.hpp"
#include "mfstop/problem.hpp"

using namespace mfstop;

namespace {

bool has_code(const ValidationError& e, ErrorCode c) {
    for (const auto& v : e.violations())
        if (v.code == c) return true;
    return false;
}

MeasureFlow flow_from_law(const Grid& g, const std::vector<double>& law) {
    MeasureFlow f(g);
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) f.m1(n, j) = law[j];
    return f;
}

}  // namespace

TEST_CASE("build_grid arithmetic and degenerate inputs") {
    auto g = build_grid(-3, 3, 6, 1, 5);
    CHECK(g.dx == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.dt == doctest::Approx(0.2).epsilon(1e-15));
    auto h = build_grid(0, 1, 2, 1, 1);
    CHECK(h.dx == 0.5);
    CHECK(h.dt == 1.0);
    CHECK_THROWS_AS(build_grid(1, 1, 2, 1, 1), Error);
    CHECK_THROWS_AS(build_grid(0, 1, 1, 1, 1), Error);
    CHECK_THROWS_AS(build_grid(0, 1, 2, 1, 0), Error);
    CHECK(g.time_index(0.4).value() == 2);
    CHECK_FALSE(g.time_index(0.3).has_value());
}

TEST_CASE("validate_spec accepts the toy put and reports violations") {
    auto g = build_grid(-3, 5, 80, 1, 40);
    auto vs = validate_spec(fixture::toy_put(), g);
    CHECK(vs.law.size() == g.space_nodes());

    Grid bad = g;
    bad.nt = 0;
    try {
        validate_spec(fixture::toy_put(), bad);
        FAIL("expected a violation");
    } catch (const ValidationError& e) {
        CHECK(has_code(e, ErrorCode::GridError));
    }

    auto neg = fixture::toy_put();
    neg.diffusion = Coefficient::constant(-1.0);
    try {
        validate_spec(neg, g);
        FAIL("expected a violation");
    } catch (const ValidationError& e) {
        CHECK(has_code(e, ErrorCode::CoefficientError));
    }

    auto unnorm = fixture::toy_put();
    unnorm.initial_law = InitialLaw::density([](double x) { return std::exp(-x * x); }, false);
    try {
        validate_spec(unnorm, g);
        FAIL("expected a violation");
    } catch (const ValidationError& e) {
        CHECK(has_code(e, ErrorCode::LawError));
    }
}

TEST_CASE("initial laws integrate to one") {
    auto g = build_grid(-6, 6, 240, 1, 10);
    for (auto law : {InitialLaw::dirac(0.013), InitialLaw::gaussian(0.5, 0.7),
                     InitialLaw::density([](double x) { return 1.0 / (1.0 + x * x); })}) {
        auto v = law.discretize(g);
        double m = 0.0;
        for (double d : v) m += d * g.dx;
        CHECK(std::abs(m - 1.0) < 1e-12);
    }
    auto d = InitialLaw::dirac(0.013).discretize(g);
    double mean = 0.0;
    for (std::size_t j = 0; j <= g.nx; ++j) mean += g.x(j) * d[j] * g.dx;
    CHECK(mean == doctest::Approx(0.013).epsilon(1e-12));
}

TEST_CASE("interaction_snapshot examples") {
    auto g = build_grid(-8, 8, 320, 1, 4);
    ProblemSpec s = fixture::toy_put();
    s.features = {Feature::from_expression(Expression::parse("1")), Feature::from_expression(Expression::parse("x")),
                  Feature::from_expression(Expression::parse("x^2"))};

    auto normal = flow_from_law(g, InitialLaw::gaussian(0.0, 1.0).discretize(g));
    auto st = interaction_snapshot(s, normal, 0.5);
    CHECK(std::abs(st.feature_averages[0] - 1.0) < 1e-12);
    CHECK(st.feature_averages[2] == doctest::Approx(1.0).epsilon(1e-3));

    auto point = flow_from_law(g, InitialLaw::dirac(2.0).discretize(g));
    CHECK(interaction_snapshot(s, point, 0.25).feature_averages[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(interaction_snapshot(s, point, 0.3), Error);

    // linear in the flow
    auto mixed = mix(normal, point, 0.3);
    auto a = interaction_snapshot(s, normal, 0.5), b = interaction_snapshot(s, point, 0.5),
         c = interaction_snapshot(s, mixed, 0.5);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::abs(c.feature_averages[i] - (0.7 * a.feature_averages[i] + 0.3 * b.feature_averages[i])) < 1e-12);
}

TEST_CASE("expressions: grammar, derivative, errors") {
    auto e = Expression::parse("max(1 - x, 0) + 2^3^0 * exp(0) - -t / 2");
    CHECK(e.eval(ExprEnv{1.0, 0.25}) == doctest::Approx(0.75 + 2.0 + 0.5));
    std::vector<double> avg{3.0, 5.0};
    auto m = Expression::parse("avg[1] - avg[0] + stopped_mass");
    CHECK(m.reads_measure());
    CHECK(m.features_needed() == 2);
    CHECK(m.eval(ExprEnv{0, 0, avg, 0.25}) == doctest::Approx(2.25));
    auto f = Expression::parse("1 / (1 + y)", "y");
    ExprEnv env;
    env.scalar = 1.0;
    CHECK(f.derivative(env) == doctest::Approx(-0.25));
    CHECK(Expression::parse("pow(2, 10) + sqrt(16) + log(e) + abs(-pi) - pi + min(1, 2)").eval({}) ==
          doctest::Approx(1024 + 4 + 1 + 1));
    CHECK_THROWS_AS(Expression::parse("1 +"), Error);
    CHECK_THROWS_AS(Expression::parse("foo(1)"), Error);
    CHECK_THROWS_AS(Expression::parse("y + 1"), Error);
    try {
        Expression::parse("max(1, 2");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::ExpressionError);
        CHECK(std::string(err.what()).find("column") != std::string::npos);
    }
}

TEST_CASE("flow CSV round trip is exact") {
    auto g = build_grid(-1, 1, 10, 1, 5);
    MeasureFlow f(g);
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            f.m1(n, j) = std::sin(0.1 + n + 0.37 * j) + 1.0;
            f.m0(n, j) = 1.0 / (3.0 + n + j);
        }
    std::stringstream ss;
    write_flow_csv(f, ss);
    auto back = read_flow_csv(ss);
    CHECK(back.grid.nx == g.nx);
    CHECK(back.m1 == f.m1);
    CHECK(back.m0 == f.m0);
}
