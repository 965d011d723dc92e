#include "mfstop/tridiagonal.hpp"

#include <cmath>
#include <string>

#include "mfstop/errors.hpp"

namespace mfstop {

void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag, std::span<const double> upper,
                       std::span<const double> rhs, std::span<double> x, std::vector<double>& c) {
    const std::size_t n = diag.size();
    if (n == 0) return;
    c.resize(n);
    double pivot = diag[0];
    if (!(std::abs(pivot) > 1e-300) || !std::isfinite(pivot))
        fail(ErrorCode::LinearSolveError, "singular tridiagonal system at row 0");
    c[0] = upper[0] / pivot;
    x[0] = rhs[0] / pivot;
    for (std::size_t i = 1; i < n; ++i) {
        pivot = diag[i] - lower[i] * c[i - 1];
        if (!(std::abs(pivot) > 1e-300) || !std::isfinite(pivot))
            fail(ErrorCode::LinearSolveError, "singular tridiagonal system at row " + std::to_string(i));
        c[i] = i + 1 < n ? upper[i] / pivot : 0.0;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / pivot;
    }
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
}

}  // namespace mfstop
