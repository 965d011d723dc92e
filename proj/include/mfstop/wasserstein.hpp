#pragma once

#include <cstdint>
#include <vector>

#include "mfstop/measure_flow.hpp"

namespace mfstop {

struct Atom {
    double tau = 0.0;
    double x = 0.0;  // X at tau
};

// Equal-weight atoms (1/N each).
struct EmpiricalMeasure {
    std::vector<Atom> atoms;
    std::size_t size() const { return atoms.size(); }
};

enum class MatchMode { exact, subsample };

// W_p on the plane (tau/T, x/(x_max - x_min)) by exact assignment. exact mode needs
// equal atom counts (AtomCountMismatch); subsample draws the larger set down to
// the smaller one without replacement.
double wasserstein_empirical(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int p, const Grid& grid,
                             MatchMode mode = MatchMode::exact, std::uint64_t seed = 0);

// Atoms drawn from the stopped inflow of a flow: tau = t_n, x uniform in the cell of x_j.
EmpiricalMeasure sample_flow_atoms(const MeasureFlow& flow, std::size_t count, std::uint64_t seed,
                                   std::uint64_t rep = 0);

double wasserstein_to_flow(const EmpiricalMeasure& a, const MeasureFlow& flow, int p, std::uint64_t seed,
                           std::uint64_t rep = 0);

}  // namespace mfstop
