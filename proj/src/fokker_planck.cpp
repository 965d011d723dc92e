#include "mfstop/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfstop/errors.hpp"
#include "mfstop/tridiagonal.hpp"

namespace mfstop {

namespace {

void transfer(MeasureFlow& f, const StoppingPolicy& p, std::size_t n) {
    for (std::size_t j = 0; j <= f.grid.nx; ++j) {
        double q = p.node_stop_probability(n, j);
        if (q <= 0.0) continue;
        double moved = q >= 1.0 ? f.m1(n, j) : q * f.m1(n, j);
        f.m0(n, j) += moved;
        f.m1(n, j) = q >= 1.0 ? 0.0 : f.m1(n, j) - moved;
    }
}

}  // namespace

MeasureFlow evolve_density(const ProblemSpec& spec, const Grid& grid, const StoppingPolicy& policy,
                           std::span<const double> law, const MeasureFlow* frozen) {
    if (!(policy.grid() == grid)) fail(ErrorCode::GridMismatch, "policy is defined on a different grid");
    if (frozen && !(frozen->grid == grid)) fail(ErrorCode::GridMismatch, "frozen flow is defined on a different grid");
    if (law.size() != grid.space_nodes()) fail(ErrorCode::LawError, "initial law does not match the grid");

    const std::size_t nx = grid.nx;
    const double dt = grid.dt, dx = grid.dx;
    FeatureTable table(spec, grid);
    MeasureFlow f(grid);
    std::copy(law.begin(), law.end(), f.m1.row(0).begin());
    transfer(f, policy, 0);

    std::vector<double> b(nx + 1), rate(nx + 1), star(nx + 1), lo(nx + 1), di(nx + 1), up(nx + 1), next(nx + 1),
        scratch;
    std::vector<unsigned char> absorbing(nx + 1);
    double prev_mass = f.mass(0);

    for (std::size_t n = 0; n < grid.nt; ++n) {
        const double t = grid.t(n);
        InteractionStats stats = snapshot_at(table, frozen ? *frozen : f, n);
        const std::size_t k = n + 1 < grid.nt ? n + 1 : n;  // S_T is the forced stop; use S_{T-dt} before it
        double bmax = 0.0;
        for (std::size_t j = 0; j <= nx; ++j) {
            double x = grid.x(j);
            b[j] = spec.drift(t, x, stats);
            double s = spec.diffusion(t, x, stats);
            rate[j] = 0.5 * s * s / (dx * dx);
            absorbing[j] = policy.node_stop_probability(k, j) >= 1.0 ? 1 : 0;
            bmax = std::max(bmax, std::abs(b[j]));
        }
        if (bmax * dt > dx * (1.0 + 1e-12))
            fail(ErrorCode::CFLViolation, "dt*max|b| = " + std::to_string(bmax * dt) + " exceeds dx = " +
                                              std::to_string(dx) + " at t=" + std::to_string(t));

        auto m1 = f.m1.row(n);
        // explicit upwind drift
        std::copy(m1.begin(), m1.end(), star.begin());
        for (std::size_t j = 0; j <= nx; ++j) {
            if (absorbing[j] || m1[j] == 0.0) continue;
            if (b[j] > 0.0 && j < nx) {
                double out = dt * b[j] / dx * m1[j];
                star[j] -= out;
                star[j + 1] += out;
            } else if (b[j] < 0.0 && j > 0) {
                double out = -dt * b[j] / dx * m1[j];
                star[j] -= out;
                star[j - 1] += out;
            }
        }
        // implicit diffusion: (I - dt K^T) m = star, K the nearest-neighbour jump generator
        for (std::size_t j = 0; j <= nx; ++j) {
            double r = absorbing[j] ? 0.0 : rate[j];
            double out = (j > 0 ? r : 0.0) + (j < nx ? r : 0.0);
            di[j] = 1.0 + dt * out;
            lo[j] = j > 0 && !absorbing[j - 1] ? -dt * rate[j - 1] : 0.0;
            up[j] = j < nx && !absorbing[j + 1] ? -dt * rate[j + 1] : 0.0;
        }
        solve_tridiagonal(lo, di, up, star, next, scratch);

        auto n1 = f.m1.row(n + 1);
        std::copy(next.begin(), next.end(), n1.begin());
        auto o0 = f.m0.row(n);
        auto n0 = f.m0.row(n + 1);
        std::copy(o0.begin(), o0.end(), n0.begin());
        transfer(f, policy, n + 1);

        double lowest = 0.0;
        for (std::size_t j = 0; j <= nx; ++j) lowest = std::min({lowest, f.m1(n + 1, j), f.m0(n + 1, j)});
        if (lowest < -1e-12)
            fail(ErrorCode::NegativeDensity, "density " + std::to_string(lowest) + " at t=" + std::to_string(grid.t(n + 1)));
        double mass = f.mass(n + 1);
        if (std::abs(mass - prev_mass) > 1e-8)
            fail(ErrorCode::MassLossError, "mass changed by " + std::to_string(mass - prev_mass) + " at t=" +
                                               std::to_string(grid.t(n + 1)));
        prev_mass = mass;
    }
    return f;
}

MeasureFlow evolve_density(const ValidatedSpec& vs, const StoppingPolicy& policy, const MeasureFlow* frozen) {
    return evolve_density(vs.spec, vs.grid, policy, vs.law, frozen);
}

MassReport mass_accounting(const MeasureFlow& flow) {
    MassReport r;
    const Grid& g = flow.grid;
    for (std::size_t n = 0; n <= g.nt; ++n) {
        double u = flow.unstopped_mass(n), s = flow.stopped_mass(n);
        r.unstopped.push_back(u);
        r.stopped.push_back(s);
        r.total.push_back(u + s);
        r.inflow.push_back(n == 0 ? s : s - r.stopped[n - 1]);
        r.max_defect = std::max(r.max_defect, std::abs(u + s - 1.0));
        r.min_inflow = std::min(r.min_inflow, r.inflow.back());
    }
    return r;
}

double frozen_region_check(const MeasureFlow& flow, const StoppingPolicy& policy) {
    if (policy.kind() != StoppingPolicy::Kind::pure)
        fail(ErrorCode::InvalidPolicy, "frozen_region_check needs a pure policy");
    const Grid& g = flow.grid;
    const auto& S = policy.stop_mask();
    double worst = 0.0;
    for (std::size_t n = 0; n < g.nt; ++n)
        for (std::size_t j = 1; j < g.nx; ++j) {
            bool interior = S(n, j - 1) && S(n, j) && S(n, j + 1) && S(n + 1, j - 1) && S(n + 1, j) &&
                            S(n + 1, j + 1);
            if (interior) worst = std::max(worst, std::abs(flow.m0(n + 1, j) - flow.m0(n, j)));
        }
    return worst;
}

}  // namespace mfstop
