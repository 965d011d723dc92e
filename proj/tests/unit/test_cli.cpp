#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mfstop/config.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/runner.hpp"

using namespace mfstop;
namespace fs = std::filesystem;

namespace {

const char* kProblem = R"cfg(
[problem]
horizon = 1.0
reward = "max(1 - x, 0)"

[problem.initial_law]
kind = "dirac"
x0 = 1.0

[grid]
x_min = -3.0
x_max = 5.0
nx = 60
nt = 40
)cfg";

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mfstop_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
    auto p = dir / "config.toml";
    std::ofstream(p) << "seed = 3\noutput_dir = \"" << (dir / "run").string() << "\"\n" << kProblem << body;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const fs::path& cfg, unsigned workers = 1, std::string out = {}) {
    std::ostringstream log;
    RunOverrides ov;
    ov.workers = workers;
    if (!out.empty()) ov.output_dir = out;
    return run_experiment(cfg.string(), log, ov);
}

std::size_t lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("config validation") {
    std::string base = std::string("seed = 1\n") + kProblem;
    CHECK(parse_config(base + "[task.solve-stop]\n", "a.toml").task.kind == TaskKind::solve_stop);
    CHECK_THROWS_AS(parse_config(base, "a.toml"), Error);
    CHECK_THROWS_AS(parse_config(base + "[task.solve-stop]\n[task.solve-mfe]\n", "a.toml"), Error);

    try {
        parse_config(std::string(kProblem) + "[task.chaos]\n", "b.toml");
        FAIL("seed should be required");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
    }
    try {
        parse_config(base + "[task.solve-stop]\nbogus = 1\n", "c.toml");
        FAIL("unknown key should be rejected");
    } catch (const Error& e) {
        std::string what = e.what();
        CHECK(what.find("c.toml:") != std::string::npos);
        CHECK(what.find("bogus") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(base + "[task.solve-stop]\n[problem.criterion]\nkind = \"nope\"\n", "d.toml"),
                    Error);

    auto j = parse_config(R"({"seed": 2, "problem": {"reward": "1", "initial_law": {"kind": "gaussian", "mean": 0, "sd": 1}},
                              "grid": {"x_min": -5, "x_max": 5, "nx": 50, "nt": 10}, "task": {"solve-stop": {}}})",
                          "e.json");
    CHECK(j.grid.nx == 50);
    CHECK(*j.seed == 2);
}

TEST_CASE("solve-stop run writes artifacts reproducibly") {
    auto dir = scratch("stop");
    auto cfg = write_config(dir, "[task.solve-stop]\n");
    REQUIRE(run(cfg) == 0);
    CHECK(fs::exists(dir / "run" / "value_field.csv"));
    CHECK(fs::exists(dir / "run" / "summary.json"));
    auto manifest = slurp(dir / "run" / "manifest.json");
    CHECK(manifest.find(sha256_file((dir / "run" / "value_field.csv").string())) != std::string::npos);

    REQUIRE(run(cfg, 4, (dir / "again").string()) == 0);
    for (auto name : {"value_field.csv", "policy.csv", "flow.csv", "summary.json", "manifest.json"})
        CHECK(slurp(dir / "run" / name) == slurp(dir / "again" / name));

    std::ostringstream log;
    CHECK(validate_experiment(cfg.string(), log) == 0);
}

TEST_CASE("config errors exit with 2") {
    auto dir = scratch("bad");
    auto cfg = write_config(dir, "[task.solve-stop]\n[task.diagnose]\n");
    CHECK(run(cfg) == 2);
    std::ofstream(dir / "broken.toml") << "seed = [\n";
    std::ostringstream log;
    CHECK(run_experiment((dir / "broken.toml").string(), log) == 2);
    CHECK(log.str().find("broken.toml") != std::string::npos);
}

TEST_CASE("reports") {
    std::ostringstream log;
    auto empty = scratch("empty");
    CHECK(report_run(empty.string(), log) == 2);

    auto mfe = scratch("mfe");
    auto cfg = write_config(mfe, "[problem.criterion]\nkind = \"anti_monotone_product\"\nF = \"1 / (1 + y)\"\n"
                                 "[task.solve-mfe]\n");
    REQUIRE(run(cfg) == 0);
    REQUIRE(report_run((mfe / "run").string(), log) == 0);
    CHECK(slurp(mfe / "run" / "report.csv").find("residual_history") != std::string::npos);

    auto ch = scratch("chaos");
    cfg = write_config(ch, "[task.chaos]\nNs = [8, 16, 32]\nn_rep = 4\n");
    REQUIRE(run(cfg, 2) == 0);
    REQUIRE(report_run((ch / "run").string(), log) == 0);
    CHECK(lines(slurp(ch / "run" / "report.csv")) == 1 + 3);
}
