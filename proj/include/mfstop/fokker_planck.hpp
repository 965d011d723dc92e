#pragma once

#include <span>
#include <vector>

#include "mfstop/measure_flow.hpp"
#include "mfstop/policy.hpp"
#include "mfstop/problem.hpp"

namespace mfstop {

// Forward evolution of (m1, m0) under a stopping policy.
// Each step: explicit upwind drift, implicit central diffusion of d_xx(a m) with
// a = sigma^2/2 and no-flux ends, then the stop transfer at the new time node.
// Cells where the policy stops with probability one are absorbing during the
// diffusion step (zero outgoing rates), so stopped mass lands on dS_t only.
//
// Coefficients read the flow's own stats (McKean-Vlasov) unless `frozen` is given.
MeasureFlow evolve_density(const ProblemSpec& spec, const Grid& grid, const StoppingPolicy& policy,
                           std::span<const double> law, const MeasureFlow* frozen = nullptr);
MeasureFlow evolve_density(const ValidatedSpec& vs, const StoppingPolicy& policy,
                           const MeasureFlow* frozen = nullptr);

struct MassReport {
    std::vector<double> unstopped, stopped, total, inflow;
    double max_defect = 0.0;      // max_t |total - 1|
    double min_inflow = 0.0;      // most negative per-step stopped inflow
};

MassReport mass_accounting(const MeasureFlow& flow);

// Largest |m0(t+dt, x) - m0(t, x)| over cells whose neighbourhood lies in S_t and S_{t+dt}.
double frozen_region_check(const MeasureFlow& flow, const StoppingPolicy& policy);

}  // namespace mfstop
