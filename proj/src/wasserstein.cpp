#include "mfstop/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>

#include "mfstop/assignment.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/rng.hpp"

namespace mfstop {

namespace {

std::vector<Atom> subsample(const std::vector<Atom>& src, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> idx(src.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    RandomStream rs(seed, kStreamSubsample);
    for (std::size_t i = 0; i < k; ++i) {
        auto j = i + static_cast<std::size_t>(rs.uniform(i, 0) * static_cast<double>(src.size() - i));
        std::swap(idx[i], idx[std::min(j, src.size() - 1)]);
    }
    std::vector<Atom> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = src[idx[i]];
    return out;
}

}  // namespace

double wasserstein_empirical(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int p, const Grid& grid,
                             MatchMode mode, std::uint64_t seed) {
    if (p != 1 && p != 2) fail(ErrorCode::ConfigError, "wasserstein order must be 1 or 2");
    if (a.size() == 0 || b.size() == 0) fail(ErrorCode::EmptySample, "empty empirical measure");
    const std::vector<Atom>* pa = &a.atoms;
    const std::vector<Atom>* pb = &b.atoms;
    std::vector<Atom> sa, sb;
    if (a.size() != b.size()) {
        if (mode == MatchMode::exact)
            fail(ErrorCode::AtomCountMismatch,
                 std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " atoms in exact mode");
        if (a.size() > b.size()) {
            sa = subsample(a.atoms, b.size(), seed);
            pa = &sa;
        } else {
            sb = subsample(b.atoms, a.size(), seed);
            pb = &sb;
        }
    }
    const double ts = 1.0 / grid.horizon, xs = 1.0 / grid.width();
    const std::size_t n = pa->size();
    if (p == 1) {
        // W1 depends on a - b only (Kantorovich-Rubinstein), so atoms present in both
        // sets cancel exactly; shared paths with equal stop times make this common.
        auto less = [](const Atom& l, const Atom& r) { return l.tau < r.tau || (l.tau == r.tau && l.x < r.x); };
        std::vector<Atom> ca(*pa), cb(*pb), ra, rb;
        std::sort(ca.begin(), ca.end(), less);
        std::sort(cb.begin(), cb.end(), less);
        std::set_difference(ca.begin(), ca.end(), cb.begin(), cb.end(), std::back_inserter(ra), less);
        std::set_difference(cb.begin(), cb.end(), ca.begin(), ca.end(), std::back_inserter(rb), less);
        sa = std::move(ra);
        sb = std::move(rb);
        pa = &sa;
        pb = &sb;
    }
    const auto& A = *pa;
    const auto& B = *pb;
    auto cost = [&](std::size_t i, std::size_t j) {
        double dt = (A[i].tau - B[j].tau) * ts, dx = (A[i].x - B[j].x) * xs;
        double d2 = dt * dt + dx * dx;
        return p == 2 ? d2 : std::sqrt(d2);
    };
    double c = min_cost_assignment(A.size(), cost).cost / static_cast<double>(n);
    return p == 2 ? std::sqrt(c) : c;
}

EmpiricalMeasure sample_flow_atoms(const MeasureFlow& flow, std::size_t count, std::uint64_t seed, std::uint64_t rep) {
    const Grid& g = flow.grid;
    std::vector<double> cdf;
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    double acc = 0.0;
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            double inflow = n == 0 ? flow.m0(0, j) : flow.m0(n, j) - flow.m0(n - 1, j);
            if (inflow <= 0.0) continue;
            acc += inflow;
            cdf.push_back(acc);
            cells.emplace_back(n, j);
        }
    if (cells.empty()) fail(ErrorCode::EmptySample, "flow has no stopped mass to sample");
    RandomStream rs(seed, kStreamFlowAtoms, rep);
    EmpiricalMeasure m;
    m.atoms.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        double u = rs.uniform(i, 0, 0) * acc;
        auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        k = std::min(k, cells.size() - 1);
        auto [n, j] = cells[k];
        double x = std::clamp(g.x(j) + (rs.uniform(i, 0, 1) - 0.5) * g.dx, g.x_min, g.x_max);
        m.atoms[i] = {g.t(n), x};
    }
    return m;
}

double wasserstein_to_flow(const EmpiricalMeasure& a, const MeasureFlow& flow, int p, std::uint64_t seed,
                           std::uint64_t rep) {
    return wasserstein_empirical(a, sample_flow_atoms(flow, a.size(), seed, rep), p, flow.grid);
}

}  // namespace mfstop
