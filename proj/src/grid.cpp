#include "mfstop/grid.hpp"

#include <cmath>
#include <string>

#include "mfstop/errors.hpp"

namespace mfstop {

Grid build_grid(double x_min, double x_max, std::size_t nx, double horizon, std::size_t nt) {
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_min < x_max))
        fail(ErrorCode::GridError, "empty or non-finite state domain [" + std::to_string(x_min) + ", " +
                                       std::to_string(x_max) + "]");
    if (nx < 2) fail(ErrorCode::GridError, "nx must be >= 2");
    if (nt < 1) fail(ErrorCode::GridError, "nt must be >= 1");
    if (!std::isfinite(horizon) || !(horizon > 0.0)) fail(ErrorCode::GridError, "horizon must be > 0");
    Grid g;
    g.x_min = x_min;
    g.x_max = x_max;
    g.nx = nx;
    g.horizon = horizon;
    g.nt = nt;
    g.dx = (x_max - x_min) / static_cast<double>(nx);
    g.dt = horizon / static_cast<double>(nt);
    return g;
}

std::optional<std::size_t> Grid::time_index(double t) const {
    if (!std::isfinite(t)) return std::nullopt;
    double r = t / dt;
    double n = std::round(r);
    if (n < 0.0 || n > static_cast<double>(nt) || std::abs(r - n) > 1e-9) return std::nullopt;
    return static_cast<std::size_t>(n);
}

std::size_t Grid::nearest_x(double xv) const {
    if (!(xv > x_min)) return 0;
    if (!(xv < x_max)) return nx;
    auto j = static_cast<std::size_t>(std::lround((xv - x_min) / dx));
    return j > nx ? nx : j;
}

}  // namespace mfstop
