#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfstop/grid.hpp"
#include "mfstop/problem.hpp"

namespace mfstop {

enum class TaskKind { solve_stop, solve_mfe, uniqueness, potential, simulate_n, epsnash, chaos, diagnose };

const char* to_string(TaskKind k);
bool task_is_stochastic(TaskKind k);

// Which stopping policy a simulation task plays.
//   optimal: stop region of the no-population obstacle solve
//   mfe:     equilibrium policy from Picard iteration
//   never:   stop only at T
//   hazard:  constant hazard `hazard`
enum class PolicyChoice { optimal, mfe, never, hazard };

struct TaskConfig {
    TaskKind kind = TaskKind::solve_stop;
    // fixed point
    double damping = 1.0;
    std::size_t max_iter = 200;
    double fp_tol = 1e-9;
    std::string init = "never_stopped";
    std::vector<std::string> inits{"stopped_at_start", "never_stopped", "mixed"};
    std::size_t search_samples = 4000;
    std::size_t knots = 0;
    std::size_t restarts = 4;
    // simulation
    PolicyChoice policy = PolicyChoice::optimal;
    double hazard = 1.0;
    std::size_t players = 100;
    std::vector<std::size_t> Ns{8, 32, 128};
    std::size_t n_rep = 200;
    double dt_sim = 0.0;
    bool dump_trajectories = false;
    std::size_t max_dump_rows = 1000000;
    // diagnostics
    std::size_t feature = 0;
};

struct ExperimentConfig {
    std::string source;  // path of the config file
    ProblemSpec spec;
    Grid grid;
    std::optional<std::uint64_t> seed;
    std::string output_dir;
    unsigned workers = 1;
    TaskConfig task;
    // Canonical JSON of the numerical configuration (excludes workers and output_dir).
    std::string resolved;
};

// TOML, or JSON when the text starts with '{'. Throws ConfigError with
// "file:line:column: message" anchors (JSON: "file: key.path: message").
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source_name);

}  // namespace mfstop
