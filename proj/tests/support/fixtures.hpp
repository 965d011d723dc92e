#pragma once

#include <algorithm>

#include "mfstop/problem.hpp"

namespace fixture {

inline mfstop::Coefficient expr(const char* s) {
    return mfstop::Coefficient::from_expression(mfstop::Expression::parse(s));
}

// b = 0, sigma = 1, g = (1 - x)^+, T = 1, X_0 = x0.
inline mfstop::ProblemSpec toy_put(double x0 = 1.0) {
    mfstop::ProblemSpec s;
    s.drift = mfstop::Coefficient::constant(0.0);
    s.diffusion = mfstop::Coefficient::constant(1.0);
    s.reward = mfstop::Coefficient::of(
        [](double, double x, const mfstop::InteractionStats&) { return std::max(1.0 - x, 0.0); }, false, "put");
    s.initial_law = mfstop::InitialLaw::dirac(x0);
    return s;
}

inline mfstop::ProblemSpec anti_monotone(mfstop::ScalarFunction F, double x0 = 1.0) {
    auto s = toy_put(x0);
    s.criterion.kind = mfstop::CriterionKind::anti_monotone_product;
    s.criterion.F = std::move(F);
    return s;
}

}  // namespace fixture
