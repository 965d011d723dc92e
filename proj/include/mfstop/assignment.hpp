#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

namespace mfstop {

struct Assignment {
    double cost = 0.0;
    std::vector<std::size_t> match;  // row i is assigned column match[i]
};

// Exact minimum-cost perfect matching on a dense n x n cost (Hungarian method with
// potentials, O(n^3) time). Costs are requested on the fly, so memory stays O(n).
// The reported cost is re-summed in row order from the final matching.
template <class Cost>
Assignment min_cost_assignment(std::size_t n, Cost&& cost) {
    Assignment out;
    out.match.assign(n, 0);
    if (n == 0) return out;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            std::size_t j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    for (std::size_t j = 1; j <= n; ++j) out.match[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) out.cost += cost(i, out.match[i]);
    return out;
}

}  // namespace mfstop
