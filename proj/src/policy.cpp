#include "mfstop/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "mfstop/csv.hpp"
#include "mfstop/errors.hpp"

namespace mfstop {

StoppingPolicy StoppingPolicy::pure(const Grid& grid, NodeMask mask, NodeField margin) {
    if (mask.rows() != grid.time_nodes() || mask.cols() != grid.space_nodes())
        fail(ErrorCode::InvalidPolicy, "stop mask shape does not match the grid");
    if (!margin.empty() && (margin.rows() != grid.time_nodes() || margin.cols() != grid.space_nodes()))
        fail(ErrorCode::InvalidPolicy, "margin shape does not match the grid");
    StoppingPolicy p;
    p.kind_ = Kind::pure;
    p.grid_ = grid;
    p.mask_ = std::move(mask);
    for (auto& v : p.mask_.row(grid.nt)) v = 1;
    p.margin_ = std::move(margin);
    return p;
}

StoppingPolicy StoppingPolicy::randomized(const Grid& grid, NodeField hazard, NodeField atoms, bool terminal_stop) {
    if (hazard.rows() != grid.time_nodes() || hazard.cols() != grid.space_nodes())
        fail(ErrorCode::InvalidPolicy, "hazard shape does not match the grid");
    for (double v : hazard.data())
        if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidPolicy, "hazard must be finite and >= 0");
    if (atoms.empty()) atoms = NodeField(grid, 0.0);
    if (atoms.rows() != grid.time_nodes() || atoms.cols() != grid.space_nodes())
        fail(ErrorCode::InvalidPolicy, "atom shape does not match the grid");
    for (double v : atoms.data())
        if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::InvalidPolicy, "atoms must lie in [0,1]");
    StoppingPolicy p;
    p.kind_ = Kind::randomized;
    p.grid_ = grid;
    p.hazard_ = std::move(hazard);
    p.atoms_ = std::move(atoms);
    p.terminal_stop_ = terminal_stop;
    return p;
}

StoppingPolicy StoppingPolicy::never_stop(const Grid& grid) { return pure(grid, NodeMask(grid, 0)); }

StoppingPolicy StoppingPolicy::stop_at_start(const Grid& grid) { return pure(grid, NodeMask(grid, 1)); }

StoppingPolicy StoppingPolicy::constant_hazard(const Grid& grid, double lambda) {
    return randomized(grid, NodeField(grid, lambda));
}

double StoppingPolicy::node_stop_probability(std::size_t n, std::size_t j) const {
    if (n == grid_.nt && terminal_stop_) return 1.0;
    if (kind_ == Kind::pure) return mask_(n, j) ? 1.0 : 0.0;
    double a = atoms_(n, j);
    if (n == 0) return a;
    if (a >= 1.0) return 1.0;
    return 1.0 - (1.0 - a) * std::exp(-hazard_(n, j) * grid_.dt);
}

static double interp_row(const NodeField& f, const Grid& g, std::size_t n, double x) {
    double r = (x - g.x_min) / g.dx;
    if (!(r > 0.0)) return f(n, 0);
    if (!(r < static_cast<double>(g.nx))) return f(n, g.nx);
    auto j = static_cast<std::size_t>(r);
    double w = r - static_cast<double>(j);
    return (1.0 - w) * f(n, j) + w * f(n, j + 1);
}

bool StoppingPolicy::contact(std::size_t n, double x) const {
    if (n == grid_.nt && terminal_stop_) return true;
    if (kind_ != Kind::pure) return false;
    if (!margin_.empty()) {
        // interpolate only across a region boundary; inside a region the mask decides
        double r = (x - grid_.x_min) / grid_.dx;
        if (r > 0.0 && r < static_cast<double>(grid_.nx)) {
            auto j = static_cast<std::size_t>(r);
            if (mask_(n, j) != mask_(n, j + 1)) return interp_row(margin_, grid_, n, x) <= 0.0;
        }
    }
    return mask_(n, grid_.nearest_x(x)) != 0;
}

double StoppingPolicy::hazard_at(std::size_t n, double x) const {
    return kind_ == Kind::randomized ? interp_row(hazard_, grid_, n, x) : 0.0;
}

double StoppingPolicy::atom_at(std::size_t n, double x) const {
    if (kind_ == Kind::randomized) return interp_row(atoms_, grid_, n, x);
    return contact(n, x) ? 1.0 : 0.0;
}

StoppingPolicy StoppingPolicy::as_randomized() const {
    if (kind_ == Kind::randomized) return *this;
    NodeField atoms(grid_, 0.0);
    for (std::size_t k = 0; k < atoms.data().size(); ++k) atoms.data()[k] = mask_.data()[k] ? 1.0 : 0.0;
    return randomized(grid_, NodeField(grid_, 0.0), std::move(atoms), true);
}

void write_policy_csv(const StoppingPolicy& p, std::ostream& out) {
    const Grid& g = p.grid();
    if (p.kind() == StoppingPolicy::Kind::pure) {
        CsvWriter w(out, {"t", "x", "stop"});
        for (std::size_t n = 0; n <= g.nt; ++n)
            for (std::size_t j = 0; j <= g.nx; ++j) {
                w.cell(g.t(n)).cell(g.x(j)).cell(static_cast<int>(p.stop_mask()(n, j)));
                w.end_row();
            }
        return;
    }
    CsvWriter w(out, {"t", "x", "theta", "atom"});
    for (std::size_t n = 0; n <= g.nt; ++n)
        for (std::size_t j = 0; j <= g.nx; ++j) {
            w.cell(g.t(n)).cell(g.x(j)).cell(p.hazard()(n, j)).cell(p.atoms()(n, j));
            w.end_row();
        }
}

StoppingPolicy read_hazard_csv(std::istream& in) {
    CsvTable t = read_numeric_csv(in);
    std::size_t ct = t.column("t"), cx = t.column("x"), ch = t.column("theta");
    std::size_t ca = t.header.size();
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == "atom") ca = i;
    std::vector<double> ts, xs;
    for (const auto& r : t.rows) {
        ts.push_back(r[ct]);
        xs.push_back(r[cx]);
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    if (ts.size() < 2 || xs.size() < 3) fail(ErrorCode::GridError, "hazard CSV does not span a grid");
    Grid g = build_grid(xs.front(), xs.back(), xs.size() - 1, ts.back(), ts.size() - 1);
    NodeField h(g, 0.0), a(g, 0.0);
    for (const auto& r : t.rows) {
        auto n = g.time_index(r[ct]);
        double jr = std::round((r[cx] - g.x_min) / g.dx);
        if (!n) fail(ErrorCode::GridError, "hazard CSV time off the lattice");
        auto j = static_cast<std::size_t>(jr);
        h(*n, j) = r[ch];
        if (ca < r.size()) a(*n, j) = r[ca];
    }
    return StoppingPolicy::randomized(g, std::move(h), std::move(a));
}

}  // namespace mfstop
