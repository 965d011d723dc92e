#pragma once

#include <iosfwd>

#include "mfstop/grid.hpp"

namespace mfstop {

// Pure policies stop on contact with a region; randomized policies stop with
// hazard theta plus per-node stop probabilities ("atoms").
//
// Time convention: the hazard stored at node n acts on (t_{n-1}, t_n] and is read at
// x_{t_n}; a survivor at node n >= 1 stops there with probability
//     1 - (1 - atom(n,x)) * exp(-theta(n,x) * dt),
// at node 0 with probability atom(0,x), and at T with probability one.
class StoppingPolicy {
public:
    enum class Kind { pure, randomized };

    StoppingPolicy() = default;

    // Row T is forced to "stop". margin (optional) is a signed field, stop iff <= 0,
    // used for sub-grid contact when states are off the lattice.
    static StoppingPolicy pure(const Grid& grid, NodeMask mask, NodeField margin = {});
    static StoppingPolicy randomized(const Grid& grid, NodeField hazard, NodeField atoms = {},
                                     bool terminal_stop = true);
    static StoppingPolicy never_stop(const Grid& grid);
    static StoppingPolicy stop_at_start(const Grid& grid);
    static StoppingPolicy constant_hazard(const Grid& grid, double lambda);

    Kind kind() const { return kind_; }
    const Grid& grid() const { return grid_; }
    bool terminal_stop() const { return terminal_stop_; }
    const NodeMask& stop_mask() const { return mask_; }
    const NodeField& margin() const { return margin_; }
    const NodeField& hazard() const { return hazard_; }
    const NodeField& atoms() const { return atoms_; }

    // Probability that a survivor at node (n, j) stops there.
    double node_stop_probability(std::size_t n, std::size_t j) const;
    // Pure: contact test at an off-grid state.
    bool contact(std::size_t n, double x) const;
    // Randomized: hazard / atom linearly interpolated in x.
    double hazard_at(std::size_t n, double x) const;
    double atom_at(std::size_t n, double x) const;

    // Equivalent randomized form (pure region -> atom 1).
    StoppingPolicy as_randomized() const;

private:
    Kind kind_ = Kind::pure;
    Grid grid_{};
    NodeMask mask_;
    NodeField margin_;
    NodeField hazard_;
    NodeField atoms_;
    bool terminal_stop_ = true;
};

// Pure: t,x,stop. Randomized: t,x,theta,atom.
void write_policy_csv(const StoppingPolicy& p, std::ostream& out);
StoppingPolicy read_hazard_csv(std::istream& in);

}  // namespace mfstop
