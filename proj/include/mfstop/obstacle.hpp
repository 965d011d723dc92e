#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "mfstop/measure_flow.hpp"
#include "mfstop/policy.hpp"
#include "mfstop/problem.hpp"

namespace mfstop {

struct ValueField {
    Grid grid;
    NodeField u;
    NodeField g;            // obstacle actually used (linearized reward)
    NodeMask continuation;  // u - g > tol * (1 + |g|)
    double tol = 1e-9;
};

// Backward Euler, central diffusion, upwind drift, projection onto u >= g after
// every tridiagonal solve. Coefficients read the frozen flow's stats at the slice
// being solved; linearity (u_xx = 0) closes the truncated domain.
ValueField solve_obstacle(const ValidatedSpec& vs, const MeasureFlow& frozen);
ValueField solve_obstacle(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen);

// Lower level: explicit per-node stats and obstacle; `terminal` overrides u(T,.) when non-empty.
ValueField solve_backward(const ProblemSpec& spec, const Grid& grid, const std::vector<InteractionStats>& stats,
                          const NodeField& obstacle, std::span<const double> terminal = {});

// Backward value of a fixed policy with the same stencils (no optimization):
// u = q*g + (1-q)*continuation value, q the policy's node stop probability.
ValueField policy_value(const ProblemSpec& spec, const Grid& grid, const std::vector<InteractionStats>& stats,
                        const NodeField& reward, const StoppingPolicy& policy);

// Pure policy stopping where u - g <= tol * (1 + |g|). margin = u - g - tol*(1+|g|).
StoppingPolicy stop_region(const ValueField& vf, double tol = 1e-9);

struct ResidualReport {
    double max_abs = 0.0;
    double max_continuation = 0.0;
    double max_stopping = 0.0;
    std::size_t worst_n = 0;
    std::size_t worst_j = 0;
};

// max |min{-(d_t + L)u, u - g}| over interior nodes t < T, using the solver's stencils.
ResidualReport residual_check(const ValueField& vf, const ProblemSpec& spec, const Grid& grid,
                              const MeasureFlow& frozen);

// integral of u(0, .) against the law; CriterionNotLinear for criteria nonlinear in P.
double best_response_value(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen,
                           std::span<const double> law);
double initial_value(const ValueField& vf, std::span<const double> law);

void write_value_field_csv(const ValueField& vf, std::ostream& out);

}  // namespace mfstop
