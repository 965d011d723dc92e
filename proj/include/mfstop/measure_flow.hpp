#pragma once

#include <iosfwd>
#include <vector>

#include "mfstop/grid.hpp"
#include "mfstop/problem.hpp"

namespace mfstop {

// Sub-densities of unstopped (m1) and stopped (m0) players at every node.
// Masses are dx * sum over all space nodes.
struct MeasureFlow {
    Grid grid;
    NodeField m1;
    NodeField m0;

    MeasureFlow() = default;
    explicit MeasureFlow(const Grid& g) : grid(g), m1(g), m0(g) {}

    double mass(std::size_t n) const;
    double stopped_mass(std::size_t n) const;
    double unstopped_mass(std::size_t n) const;
};

// (1 - w) * a + w * b, node by node.
MeasureFlow mix(const MeasureFlow& a, const MeasureFlow& b, double w);

void write_flow_csv(const MeasureFlow& flow, std::ostream& out);
MeasureFlow read_flow_csv(std::istream& in);

// h_i(x_j) cached per grid.
class FeatureTable {
public:
    FeatureTable(const ProblemSpec& spec, const Grid& grid);
    std::size_t size() const { return values_.size(); }
    double operator()(std::size_t i, std::size_t j) const { return values_[i][j]; }
    bool unstopped_only(std::size_t i) const { return unstopped_only_[i]; }

private:
    std::vector<std::vector<double>> values_;
    std::vector<bool> unstopped_only_;
};

InteractionStats snapshot_at(const FeatureTable& table, const MeasureFlow& flow, std::size_t n);
InteractionStats interaction_snapshot(const ProblemSpec& spec, const MeasureFlow& flow, double t);
std::vector<InteractionStats> snapshot_all(const ProblemSpec& spec, const MeasureFlow& flow);

}  // namespace mfstop
