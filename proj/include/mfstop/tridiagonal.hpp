#pragma once

#include <span>
#include <vector>

namespace mfstop {

// Thomas algorithm: lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i].
// lower[0] and upper[n-1] are ignored. Throws LinearSolveError on a vanishing pivot.
void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag, std::span<const double> upper,
                       std::span<const double> rhs, std::span<double> x, std::vector<double>& scratch);

}  // namespace mfstop
