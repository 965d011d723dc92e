#pragma once

#include <iosfwd>
#include <optional>
#include <string>

namespace mfstop {

struct RunOverrides {
    std::optional<unsigned> workers;
    std::optional<std::string> output_dir;
};

// Exit codes: 0 success, 1 non-convergence or numerical failure (artifacts kept), 2 config error.
int run_experiment(const std::string& config_path, std::ostream& log, const RunOverrides& ov = {});
int validate_experiment(const std::string& config_path, std::ostream& log);
// Writes report.txt and report.csv into run_dir.
int report_run(const std::string& run_dir, std::ostream& log);

// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace mfstop
