#include "mfstop/measure_flow.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "mfstop/csv.hpp"
#include "mfstop/errors.hpp"

namespace mfstop {

static double row_sum(const NodeField& f, std::size_t n) {
    double s = 0.0;
    for (double v : f.row(n)) s += v;
    return s;
}

double MeasureFlow::mass(std::size_t n) const { return (row_sum(m1, n) + row_sum(m0, n)) * grid.dx; }
double MeasureFlow::stopped_mass(std::size_t n) const { return row_sum(m0, n) * grid.dx; }
double MeasureFlow::unstopped_mass(std::size_t n) const { return row_sum(m1, n) * grid.dx; }

MeasureFlow mix(const MeasureFlow& a, const MeasureFlow& b, double w) {
    if (!(a.grid == b.grid)) fail(ErrorCode::GridMismatch, "cannot mix flows on different grids");
    MeasureFlow out(a.grid);
    auto& o1 = out.m1.data();
    auto& o0 = out.m0.data();
    const auto& a1 = a.m1.data();
    const auto& a0 = a.m0.data();
    const auto& b1 = b.m1.data();
    const auto& b0 = b.m0.data();
    for (std::size_t k = 0; k < o1.size(); ++k) {
        o1[k] = (1.0 - w) * a1[k] + w * b1[k];
        o0[k] = (1.0 - w) * a0[k] + w * b0[k];
    }
    return out;
}

void write_flow_csv(const MeasureFlow& flow, std::ostream& out) {
    CsvWriter w(out, {"t", "x", "m1", "m0"});
    const Grid& g = flow.grid;
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            w.cell(g.t(n)).cell(g.x(j)).cell(flow.m1(n, j)).cell(flow.m0(n, j));
            w.end_row();
        }
}

MeasureFlow read_flow_csv(std::istream& in) {
    CsvTable t = read_numeric_csv(in);
    std::size_t ct = t.column("t"), cx = t.column("x"), c1 = t.column("m1"), c0 = t.column("m0");
    if (t.rows.empty()) fail(ErrorCode::IoError, "flow CSV has no rows");
    std::vector<double> ts, xs;
    for (const auto& r : t.rows) {
        ts.push_back(r[ct]);
        xs.push_back(r[cx]);
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    if (ts.size() < 2 || xs.size() < 3) fail(ErrorCode::GridError, "flow CSV does not span a grid");
    if (std::abs(ts.front()) > 1e-12) fail(ErrorCode::GridError, "flow CSV must start at t=0");
    Grid g = build_grid(xs.front(), xs.back(), xs.size() - 1, ts.back(), ts.size() - 1);
    if (t.rows.size() != g.time_nodes() * g.space_nodes())
        fail(ErrorCode::GridError, "flow CSV is not a full lattice");
    MeasureFlow f(g);
    for (const auto& r : t.rows) {
        auto n = g.time_index(r[ct]);
        double rx = (r[cx] - g.x_min) / g.dx;
        double jr = std::round(rx);
        if (!n || std::abs(rx - jr) > 1e-6) fail(ErrorCode::GridError, "flow CSV node off the uniform lattice");
        auto j = static_cast<std::size_t>(jr);
        f.m1(*n, j) = r[c1];
        f.m0(*n, j) = r[c0];
    }
    return f;
}

FeatureTable::FeatureTable(const ProblemSpec& spec, const Grid& g) {
    for (const auto& f : spec.features) {
        std::vector<double> v(g.space_nodes());
        for (std::size_t j = 0; j <= g.nx; ++j) v[j] = f.h(g.x(j));
        values_.push_back(std::move(v));
        unstopped_only_.push_back(f.unstopped_only);
    }
}

InteractionStats snapshot_at(const FeatureTable& table, const MeasureFlow& flow, std::size_t n) {
    const Grid& g = flow.grid;
    InteractionStats s;
    s.time = g.t(n);
    auto r1 = flow.m1.row(n);
    auto r0 = flow.m0.row(n);
    s.feature_averages.resize(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        double acc = 0.0;
        if (table.unstopped_only(i))
            for (std::size_t j = 0; j <= g.nx; ++j) acc += table(i, j) * r1[j];
        else
            for (std::size_t j = 0; j <= g.nx; ++j) acc += table(i, j) * (r1[j] + r0[j]);
        s.feature_averages[i] = acc * g.dx;
    }
    double m = 0.0;
    for (double v : r0) m += v;
    s.stopped_mass = std::clamp(m * g.dx, 0.0, 1.0);
    return s;
}

InteractionStats interaction_snapshot(const ProblemSpec& spec, const MeasureFlow& flow, double t) {
    auto n = flow.grid.time_index(t);
    if (!n) fail(ErrorCode::TimeNotOnGrid, "t=" + std::to_string(t) + " is not a node of the flow grid");
    return snapshot_at(FeatureTable(spec, flow.grid), flow, *n);
}

std::vector<InteractionStats> snapshot_all(const ProblemSpec& spec, const MeasureFlow& flow) {
    FeatureTable table(spec, flow.grid);
    std::vector<InteractionStats> out;
    out.reserve(flow.grid.time_nodes());
    for (std::size_t n = 0; n <= flow.grid.nt; ++n) out.push_back(snapshot_at(table, flow, n));
    return out;
}

}  // namespace mfstop
