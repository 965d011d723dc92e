#include "mfstop/obstacle.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfstop/criteria.hpp"
#include "mfstop/csv.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/tridiagonal.hpp"

namespace mfstop {

namespace {

struct Stencil {
    double lower, diag, upper;  // coefficients of the implicit operator I - dt*A on an interior row
};

inline Stencil stencil(double b, double sigma, double dt, double dx) {
    double a = 0.5 * sigma * sigma / (dx * dx);
    double bp = std::max(b, 0.0) / dx, bm = std::max(-b, 0.0) / dx;
    return {-dt * (a + bm), 1.0 + dt * (2.0 * a + bp + bm), -dt * (a + bp)};
}

void check_grid(const Grid& grid, const MeasureFlow& frozen) {
    if (!(frozen.grid == grid)) fail(ErrorCode::GridMismatch, "frozen flow is defined on a different grid");
}

}  // namespace

namespace {

// One backward sweep; `combine(n, row)` turns the continuation values of slice n into u(n, .).
// Rows with absorbing(n, j) have no outgoing rates during the step into slice n+1,
// mirroring the absorbing cells of the forward step.
template <class Combine, class Absorbing>
void sweep(const ProblemSpec& spec, const Grid& grid, const std::vector<InteractionStats>& stats, NodeField& u,
           Combine&& combine, Absorbing&& absorbing) {
    const std::size_t nx = grid.nx;
    const double dt = grid.dt, dx = grid.dx;
    const std::size_t m = nx - 1;  // interior unknowns
    std::vector<double> lo(m), di(m), up(m), rhs(m), sol(m), scratch;
    for (std::size_t n = grid.nt; n-- > 0;) {
        const double t = grid.t(n);
        auto next = u.row(n + 1);
        auto cur = u.row(n);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j = i + 1;
            double x = grid.x(j);
            Stencil s = stencil(spec.drift(t, x, stats[n]), spec.diffusion(t, x, stats[n]), dt, dx);
            lo[i] = s.lower;
            di[i] = s.diag;
            up[i] = s.upper;
            rhs[i] = next[j];
            if (absorbing(n, j)) lo[i] = up[i] = 0.0, di[i] = 1.0;
        }
        if (m >= 2) {
            // u_0 = 2u_1 - u_2 and u_nx = 2u_{nx-1} - u_{nx-2} folded into the first/last rows
            di[0] += 2.0 * lo[0];
            up[0] -= lo[0];
            di[m - 1] += 2.0 * up[m - 1];
            lo[m - 1] -= up[m - 1];
        } else {
            // nx == 2: boundary values carried from the later slice
            rhs[0] -= lo[0] * next[0] + up[0] * next[2];
        }
        solve_tridiagonal(lo, di, up, rhs, sol, scratch);
        for (std::size_t i = 0; i < m; ++i) cur[i + 1] = sol[i];
        if (m >= 2) {
            cur[0] = 2.0 * cur[1] - cur[2];
            cur[nx] = 2.0 * cur[nx - 1] - cur[nx - 2];
        } else {
            cur[0] = next[0];
            cur[nx] = next[nx];
        }
        combine(n, cur);
    }
}

}  // namespace

ValueField policy_value(const ProblemSpec& spec, const Grid& grid, const std::vector<InteractionStats>& stats,
                        const NodeField& reward, const StoppingPolicy& policy) {
    ValueField vf;
    vf.grid = grid;
    vf.g = reward;
    vf.u = NodeField(grid);
    vf.continuation = NodeMask(grid, 0);
    for (std::size_t j = 0; j <= grid.nx; ++j) {
        double q = policy.node_stop_probability(grid.nt, j);
        vf.u(grid.nt, j) = q * reward(grid.nt, j);
    }
    sweep(spec, grid, stats, vf.u, [&](std::size_t n, std::span<double> row) {
        for (std::size_t j = 0; j <= grid.nx; ++j) {
            double q = policy.node_stop_probability(n, j);
            row[j] = q * reward(n, j) + (1.0 - q) * row[j];
            vf.continuation(n, j) = q < 1.0 ? 1 : 0;
        }
    }, [&](std::size_t n, std::size_t j) {
        // same absorbing set as the forward step n -> n+1
        std::size_t k = n + 1 < grid.nt ? n + 1 : n;
        return policy.node_stop_probability(k, j) >= 1.0;
    });
    return vf;
}

ValueField solve_backward(const ProblemSpec& spec, const Grid& grid, const std::vector<InteractionStats>& stats,
                          const NodeField& obstacle, std::span<const double> terminal) {
    const std::size_t nx = grid.nx;
    ValueField vf;
    vf.grid = grid;
    vf.g = obstacle;
    vf.u = NodeField(grid);
    vf.continuation = NodeMask(grid, 0);

    auto top = vf.u.row(grid.nt);
    if (terminal.empty())
        std::copy(obstacle.row(grid.nt).begin(), obstacle.row(grid.nt).end(), top.begin());
    else
        std::copy(terminal.begin(), terminal.end(), top.begin());

    sweep(spec, grid, stats, vf.u, [&](std::size_t n, std::span<double> row) {
        auto g = obstacle.row(n);
        for (std::size_t j = 0; j <= nx; ++j) row[j] = std::max(row[j], g[j]);
    }, [](std::size_t, std::size_t) { return false; });

    for (std::size_t n = 0; n < grid.nt; ++n)
        for (std::size_t j = 0; j <= nx; ++j) {
            double g = obstacle(n, j);
            vf.continuation(n, j) = vf.u(n, j) - g > vf.tol * (1.0 + std::abs(g)) ? 1 : 0;
        }
    return vf;
}

ValueField solve_obstacle(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen) {
    check_grid(grid, frozen);
    auto stats = snapshot_all(spec, frozen);
    NodeField reward = linearized_reward(spec, grid, frozen, stats);
    return solve_backward(spec, grid, stats, reward);
}

ValueField solve_obstacle(const ValidatedSpec& vs, const MeasureFlow& frozen) {
    return solve_obstacle(vs.spec, vs.grid, frozen);
}

StoppingPolicy stop_region(const ValueField& vf, double tol) {
    const Grid& g = vf.grid;
    NodeMask mask(g, 0);
    NodeField margin(g, 0.0);
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            double gv = vf.g(n, j);
            double mg = vf.u(n, j) - gv - tol * (1.0 + std::abs(gv));
            margin(n, j) = mg;
            mask(n, j) = mg <= 0.0 ? 1 : 0;
        }
    return StoppingPolicy::pure(g, std::move(mask), std::move(margin));
}

ResidualReport residual_check(const ValueField& vf, const ProblemSpec& spec, const Grid& grid,
                              const MeasureFlow& frozen) {
    check_grid(grid, frozen);
    auto stats = snapshot_all(spec, frozen);
    const double dt = grid.dt, dx = grid.dx;
    ResidualReport rep;
    for (std::size_t n = 0; n < grid.nt; ++n) {
        const double t = grid.t(n);
        for (std::size_t j = 1; j < grid.nx; ++j) {
            double x = grid.x(j);
            double b = spec.drift(t, x, stats[n]);
            double sg = spec.diffusion(t, x, stats[n]);
            double u = vf.u(n, j), ul = vf.u(n, j - 1), ur = vf.u(n, j + 1);
            double ux = b >= 0.0 ? (ur - u) / dx : (u - ul) / dx;
            double uxx = (ur - 2.0 * u + ul) / (dx * dx);
            double pde = -((vf.u(n + 1, j) - u) / dt + b * ux + 0.5 * sg * sg * uxx);
            double obs = u - vf.g(n, j);
            double r = std::abs(std::min(pde, obs));
            if (r > rep.max_abs) {
                rep.max_abs = r;
                rep.worst_n = n;
                rep.worst_j = j;
            }
            if (vf.continuation(n, j))
                rep.max_continuation = std::max(rep.max_continuation, r);
            else
                rep.max_stopping = std::max(rep.max_stopping, r);
        }
    }
    return rep;
}

double initial_value(const ValueField& vf, std::span<const double> law) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= vf.grid.nx; ++j) acc += vf.u(0, j) * law[j];
    return acc * vf.grid.dx;
}

double best_response_value(const ProblemSpec& spec, const Grid& grid, const MeasureFlow& frozen,
                           std::span<const double> law) {
    return initial_value(solve_obstacle(spec, grid, frozen), law);
}

void write_value_field_csv(const ValueField& vf, std::ostream& out) {
    CsvWriter w(out, {"t", "x", "u", "g", "in_continuation"});
    const Grid& g = vf.grid;
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            w.cell(g.t(n)).cell(g.x(j)).cell(vf.u(n, j)).cell(vf.g(n, j)).cell(static_cast<int>(vf.continuation(n, j)));
            w.end_row();
        }
}

}  // namespace mfstop
