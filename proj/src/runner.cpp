#include "mfstop/runner.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "mfstop/config.hpp"
#include "mfstop/csv.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/fixed_point.hpp"
#include "mfstop/fokker_planck.hpp"
#include "mfstop/nplayer.hpp"
#include "mfstop/obstacle.hpp"

#ifndef MFSTOP_VERSION
#define MFSTOP_VERSION "0.0.0"
#endif

namespace mfstop {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot read " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

namespace {

bool is_config_error(ErrorCode c) {
    switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::ExpressionError:
    case ErrorCode::GridError:
    case ErrorCode::LawError:
    case ErrorCode::CoefficientError:
    case ErrorCode::CriterionNotLinear:
    case ErrorCode::PotentialHypothesisViolated:
    case ErrorCode::InvalidPolicy:
    case ErrorCode::MissingManifest: return true;
    default: return false;
    }
}

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    void write(const std::string& name, const std::function<void(std::ostream&)>& fn) {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoError, "cannot write " + (dir_ / name).string());
        fn(out);
        if (!out) fail(ErrorCode::IoError, "write failed for " + (dir_ / name).string());
        files_.push_back(name);
    }
    void text(const std::string& name, const std::string& s) {
        write(name, [&](std::ostream& o) { o << s; });
    }

    const fs::path& dir() const { return dir_; }
    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

PicardOptions picard_options(const ExperimentConfig& cfg) {
    PicardOptions o;
    o.damping = cfg.task.damping;
    o.max_iter = cfg.task.max_iter;
    o.fp_tol = cfg.task.fp_tol;
    o.search_samples = cfg.task.search_samples;
    o.family.knots = cfg.task.knots;
    o.family.workers = cfg.workers;
    o.seed = cfg.seed.value_or(1);
    return o;
}

InitialFlow init_kind(const std::string& s) {
    if (s == "stopped_at_start") return InitialFlow::stopped_at_start;
    if (s == "mixed") return InitialFlow::mixed;
    return InitialFlow::never_stopped;
}

json equilibrium_json(const EquilibriumResult& r) {
    return {{"value", r.value},
            {"flow_value", r.flow_value},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"policy_search", r.policy_search},
            {"residual_history", r.residual_history}};
}

void write_equilibrium(Artifacts& out, const EquilibriumResult& r) {
    out.write("flow.csv", [&](std::ostream& o) { write_flow_csv(r.flow, o); });
    out.write("policy.csv", [&](std::ostream& o) { write_policy_csv(r.policy, o); });
    if (!r.policy_search) out.write("value_field.csv", [&](std::ostream& o) { write_value_field_csv(r.value_field, o); });
    out.write("iterations.csv", [&](std::ostream& o) {
        CsvWriter w(o, {"iteration", "residual"});
        for (std::size_t k = 0; k < r.residual_history.size(); ++k) {
            w.cell(k + 1).cell(r.residual_history[k]);
            w.end_row();
        }
    });
}

struct ResolvedPolicy {
    StoppingPolicy policy;
    std::optional<MeasureFlow> flow;  // equilibrium flow when policy = mfe
    bool converged = true;
    json info;
};

ResolvedPolicy resolve_policy(const ExperimentConfig& cfg, const ValidatedSpec& vs) {
    ResolvedPolicy rp;
    const Grid& g = vs.grid;
    switch (cfg.task.policy) {
    case PolicyChoice::optimal: {
        ValueField vf = solve_obstacle(vs, MeasureFlow(g));
        rp.policy = stop_region(vf);
        rp.info = {{"kind", "optimal"}, {"value", initial_value(vf, vs.law)}};
        break;
    }
    case PolicyChoice::mfe: {
        auto opt = picard_options(cfg);
        auto r = picard_iterate(vs.spec, g, initial_flow(vs.spec, g, InitialFlow::never_stopped, vs.law), opt);
        rp.policy = r.policy;
        rp.flow = r.flow;
        rp.converged = r.converged;
        rp.info = equilibrium_json(r);
        rp.info["kind"] = "mfe";
        break;
    }
    case PolicyChoice::never:
        rp.policy = StoppingPolicy::never_stop(g);
        rp.info = {{"kind", "never"}};
        break;
    case PolicyChoice::hazard:
        rp.policy = StoppingPolicy::constant_hazard(g, cfg.task.hazard);
        rp.info = {{"kind", "hazard"}, {"hazard", cfg.task.hazard}};
        break;
    }
    return rp;
}

// Returns true when the task's iterative solver converged.
bool run_task(const ExperimentConfig& cfg, const ValidatedSpec& vs, Artifacts& out, json& summary, std::ostream& log) {
    const ProblemSpec& spec = vs.spec;
    const Grid& g = vs.grid;
    const std::uint64_t seed = cfg.seed.value_or(0);
    bool converged = true;

    switch (cfg.task.kind) {
    case TaskKind::solve_stop: {
        MeasureFlow none(g);
        ValueField vf = solve_obstacle(vs, none);
        StoppingPolicy policy = stop_region(vf);
        MeasureFlow flow = evolve_density(vs, policy);
        auto res = residual_check(vf, spec, g, none);
        auto mass = mass_accounting(flow);
        out.write("value_field.csv", [&](std::ostream& o) { write_value_field_csv(vf, o); });
        out.write("policy.csv", [&](std::ostream& o) { write_policy_csv(policy, o); });
        out.write("flow.csv", [&](std::ostream& o) { write_flow_csv(flow, o); });
        summary["value"] = initial_value(vf, vs.law);
        summary["residual_max"] = res.max_abs;
        summary["mass_defect"] = mass.max_defect;
        summary["frozen_region_change"] = frozen_region_check(flow, policy);
        log << "value " << format_double(summary["value"]) << "\n";
        break;
    }
    case TaskKind::solve_mfe: {
        auto opt = picard_options(cfg);
        auto r = picard_iterate(spec, g, initial_flow(spec, g, init_kind(cfg.task.init), vs.law), opt);
        write_equilibrium(out, r);
        summary = equilibrium_json(r);
        BestResponse br = best_response(spec, g, r.flow, vs.law, opt);
        MeasureFlow again = evolve_density(spec, g, br.policy, vs.law, &r.flow);
        summary["reapplication_distance"] = flow_distance(r.flow, again);
        if (spec.criterion.linear_in_P()) {
            summary["best_response_gap"] = equilibrium_gap(spec, g, r);
            summary["scheme_error_bound"] = scheme_error_bound(g, r.value);
        }
        converged = r.converged;
        log << "picard " << (r.converged ? "converged" : "did not converge") << " after " << r.iterations
            << " iterations, value " << format_double(r.value) << "\n";
        break;
    }
    case TaskKind::uniqueness: {
        auto opt = picard_options(cfg);
        std::vector<MeasureFlow> inits;
        for (const auto& s : cfg.task.inits) inits.push_back(initial_flow(spec, g, init_kind(s), vs.law));
        auto rep = uniqueness_probe(spec, g, inits, opt, cfg.workers);
        out.write("values.csv", [&](std::ostream& o) {
            CsvWriter w(o, {"init", "value", "flow_value", "iterations", "converged"});
            for (std::size_t i = 0; i < rep.results.size(); ++i) {
                const auto& r = rep.results[i];
                w.cell(cfg.task.inits[i]).cell(r.value).cell(r.flow_value).cell(r.iterations).cell(r.converged ? 1 : 0);
                w.end_row();
                converged = converged && r.converged;
            }
        });
        out.write("distances.csv", [&](std::ostream& o) {
            CsvWriter w(o, {"i", "j", "flow_distance"});
            for (std::size_t i = 0; i < inits.size(); ++i)
                for (std::size_t j = 0; j < inits.size(); ++j) {
                    w.cell(i).cell(j).cell(rep.distances[i][j]);
                    w.end_row();
                }
        });
        summary["values"] = rep.values;
        summary["spread"] = rep.spread;
        summary["converged"] = converged;
        log << "value spread " << format_double(rep.spread) << "\n";
        break;
    }
    case TaskKind::potential: {
        auto opt = picard_options(cfg);
        auto res = potential_solve(spec, g, cfg.task.restarts, opt, cfg.workers);
        converged = res.equilibrium.converged;
        write_equilibrium(out, res.equilibrium);
        summary = equilibrium_json(res.equilibrium);
        summary["potential"] = res.potential;
        summary["gap"] = res.gap;
        summary["discretization_error"] = res.discretization_error;
        summary["evaluations"] = res.evaluations;
        summary["rule"] = {{"side", res.rule.side == ThresholdRule::Side::below ? "below" : "above"},
                           {"thresholds", res.rule.thresholds}};
        log << "potential " << format_double(res.potential) << ", gap " << format_double(res.gap) << "\n";
        break;
    }
    case TaskKind::simulate_n: {
        auto rp = resolve_policy(cfg, vs);
        converged = rp.converged;
        SimOptions so;
        so.dt_sim = cfg.task.dt_sim;
        so.workers = cfg.workers;
        auto batch = simulate_players(spec, cfg.task.players, rp.policy, seed, so);
        out.write("players.csv", [&](std::ostream& o) {
            CsvWriter w(o, {"player", "tau", "x_tau"});
            for (std::size_t k = 0; k < batch.N; ++k) {
                w.cell(k).cell(batch.stop_times[k]).cell(batch.stop_states[k]);
                w.end_row();
            }
        });
        out.write("stats.csv", [&](std::ostream& o) {
            std::vector<std::string> head{"t", "stopped_mass"};
            for (std::size_t i = 0; i < spec.features.size(); ++i) head.push_back("avg" + std::to_string(i));
            CsvWriter w(o, head);
            for (const auto& s : batch.stats) {
                w.cell(s.time).cell(s.stopped_mass);
                for (double a : s.feature_averages) w.cell(a);
                w.end_row();
            }
        });
        if (cfg.task.dump_trajectories)
            out.write("trajectories.csv",
                      [&](std::ostream& o) { write_trajectories_csv(batch, o, cfg.task.max_dump_rows); });
        double mt = 0.0, mx = 0.0;
        for (std::size_t k = 0; k < batch.N; ++k) {
            mt += batch.stop_times[k];
            mx += batch.stop_states[k];
        }
        summary["policy"] = rp.info;
        summary["N"] = batch.N;
        summary["dt_sim"] = batch.dt_sim;
        summary["mean_tau"] = mt / static_cast<double>(batch.N);
        summary["mean_x_tau"] = mx / static_cast<double>(batch.N);
        break;
    }
    case TaskKind::epsnash: {
        auto rp = resolve_policy(cfg, vs);
        converged = rp.converged;
        SimOptions so;
        so.dt_sim = cfg.task.dt_sim;
        so.workers = cfg.workers;
        std::vector<GapEstimate> rows;
        for (std::size_t N : cfg.task.Ns) {
            rows.push_back(eps_nash_gap(spec, N, rp.policy, seed, cfg.task.n_rep, so));
            log << "N " << N << " eps " << format_double(rows.back().gap) << " se " << format_double(rows.back().se)
                << "\n";
        }
        out.write("eps_table.csv", [&](std::ostream& o) { write_gap_csv(rows, o); });
        summary["policy"] = rp.info;
        summary["eps"] = json::array();
        for (const auto& r : rows) summary["eps"].push_back({{"N", r.N}, {"gap", r.gap}, {"se", r.se}});
        break;
    }
    case TaskKind::chaos: {
        auto rp = resolve_policy(cfg, vs);
        converged = rp.converged;
        SimOptions so;
        so.dt_sim = cfg.task.dt_sim;
        so.workers = cfg.workers;
        auto table = chaos_study(spec, rp.policy, cfg.task.Ns, cfg.task.n_rep, seed, so,
                                 rp.flow ? &*rp.flow : nullptr, spec.criterion.linear_in_P());
        out.write("convergence.csv", [&](std::ostream& o) { write_convergence_csv(table, o); });
        summary["policy"] = rp.info;
        summary["slope"] = table.slope;
        summary["rows"] = json::array();
        for (const auto& r : table.rows)
            summary["rows"].push_back({{"N", r.N}, {"w1", r.w1}, {"w1_se", r.w1_se}, {"eps", r.eps}, {"eps_se", r.eps_se}});
        log << "W1 slope " << format_double(table.slope) << "\n";
        break;
    }
    case TaskKind::diagnose: {
        auto rp = resolve_policy(cfg, vs);
        converged = rp.converged;
        MeasureFlow flow = evolve_density(vs, rp.policy, rp.flow ? &*rp.flow : nullptr);
        auto mass = mass_accounting(flow);
        std::optional<DiagnosticReport> sub;
        if (!spec.features.empty()) sub = submartingale_check(spec, g, cfg.task.feature, rp.policy);
        out.write("diagnostics.csv", [&](std::ostream& o) {
            std::vector<std::string> head{"t", "unstopped", "stopped", "total", "inflow"};
            if (sub) head.push_back("feature_mean");
            CsvWriter w(o, head);
            for (std::size_t n = 0; n <= g.nt; ++n) {
                w.cell(g.t(n)).cell(mass.unstopped[n]).cell(mass.stopped[n]).cell(mass.total[n]).cell(mass.inflow[n]);
                if (sub) w.cell(sub->series[n]);
                w.end_row();
            }
        });
        summary["policy"] = rp.info;
        summary["mass_defect"] = mass.max_defect;
        summary["min_inflow"] = mass.min_inflow;
        if (rp.policy.kind() == StoppingPolicy::Kind::pure)
            summary["frozen_region_change"] = frozen_region_check(flow, rp.policy);
        if (spec.criterion.linear_in_P()) {
            const MeasureFlow& frozen = rp.flow ? *rp.flow : flow;
            ValueField vf = solve_obstacle(vs, frozen);
            summary["residual_max"] = residual_check(vf, spec, g, frozen).max_abs;
        }
        if (sub) {
            summary["submartingale_violation"] = sub->max_violation;
            summary["submartingale_passed"] = sub->passed;
        }
        break;
    }
    }
    return converged;
}

std::string summary_text(const json& summary) {
    std::ostringstream s;
    for (auto it = summary.begin(); it != summary.end(); ++it) {
        if (it->is_array() || it->is_object()) continue;
        s << it.key() << ": ";
        if (it->is_number_float()) s << format_double(it->get<double>());
        else s << it->dump();
        s << "\n";
    }
    return s.str();
}

void write_manifest(Artifacts& out, const ExperimentConfig& cfg) {
    json files = json::array();
    for (const auto& f : out.files()) {
        auto p = out.dir() / f;
        files.push_back({{"path", f}, {"sha256", sha256_file(p.string())}, {"bytes", fs::file_size(p)}});
    }
    json m;
    m["tool"] = "mfstop";
    m["version"] = MFSTOP_VERSION;
    m["task"] = to_string(cfg.task.kind);
    m["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
    m["config"] = json::parse(cfg.resolved);
    m["files"] = std::move(files);
    std::ofstream o(out.dir() / "manifest.json", std::ios::binary | std::ios::trunc);
    o << m.dump(2) << "\n";
}

int report_error(const Error& e, std::ostream& log) {
    if (auto* v = dynamic_cast<const ValidationError*>(&e)) {
        log << "error: validation failed\n";
        for (const auto& x : v->violations()) log << "  " << to_string(x.code) << ": " << x.message << "\n";
        return 2;
    }
    log << "error: " << e.what() << "\n";
    return is_config_error(e.code()) ? 2 : 1;
}

}  // namespace

int validate_experiment(const std::string& config_path, std::ostream& log) {
    try {
        auto cfg = load_config(config_path);
        auto vs = validate_spec(cfg.spec, cfg.grid);
        for (const auto& w : vs.warnings) log << "warning: " << w << "\n";
        log << "ok: task " << to_string(cfg.task.kind) << "\n";
        return 0;
    } catch (const Error& e) {
        return report_error(e, log);
    }
}

int run_experiment(const std::string& config_path, std::ostream& log, const RunOverrides& ov) {
    ExperimentConfig cfg;
    ValidatedSpec vs;
    try {
        cfg = load_config(config_path);
        if (ov.workers) cfg.workers = *ov.workers;
        if (ov.output_dir) cfg.output_dir = *ov.output_dir;
        vs = validate_spec(cfg.spec, cfg.grid);
    } catch (const Error& e) {
        return report_error(e, log);
    }
    for (const auto& w : vs.warnings) log << "warning: " << w << "\n";

    json summary;
    int code = 0;
    try {
        Artifacts out(cfg.output_dir);
        try {
            if (!run_task(cfg, vs, out, summary, log)) code = 1;
        } catch (const Error& e) {
            code = report_error(e, log);
            summary["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
        }
        summary["task"] = to_string(cfg.task.kind);
        summary["status"] = code == 0 ? "ok" : (code == 1 ? "not_converged_or_failed" : "config_error");
        if (!vs.warnings.empty()) summary["warnings"] = vs.warnings;
        out.text("summary.json", summary.dump(2) + "\n");
        out.text("summary.txt", summary_text(summary));
        write_manifest(out, cfg);
        log << "wrote " << out.files().size() + 1 << " files to " << cfg.output_dir << "\n";
    } catch (const Error& e) {
        return report_error(e, log);
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << "\n";
        return 1;
    }
    return code;
}

int report_run(const std::string& run_dir, std::ostream& log) {
    try {
        fs::path dir(run_dir);
        std::ifstream mf(dir / "manifest.json");
        if (!mf) fail(ErrorCode::MissingManifest, run_dir + " has no manifest.json");
        json m = json::parse(mf);
        std::string task = m.value("task", "");
        json summary;
        if (std::ifstream sf(dir / "summary.json"); sf) summary = json::parse(sf);

        std::ostringstream txt;
        txt << "task: " << task << "\n";
        txt << "seed: " << m["seed"].dump() << "\n";
        txt << summary_text(summary);

        std::string table;
        auto copy_table = [&](const char* name) {
            std::ifstream in(dir / name, std::ios::binary);
            if (!in) fail(ErrorCode::IoError, std::string("run directory lacks ") + name);
            std::ostringstream ss;
            ss << in.rdbuf();
            table = ss.str();
        };
        if (task == "solve-mfe" || task == "potential") {
            std::ostringstream ss;
            CsvWriter w(ss, {"iteration", "residual_history"});
            const auto& h = summary["residual_history"];
            for (std::size_t k = 0; k < h.size(); ++k) {
                w.cell(k + 1).cell(h[k].get<double>());
                w.end_row();
            }
            table = ss.str();
        } else if (task == "chaos") {
            copy_table("convergence.csv");
        } else if (task == "epsnash") {
            copy_table("eps_table.csv");
        } else if (task == "uniqueness") {
            copy_table("values.csv");
        } else {
            std::ostringstream ss;
            CsvWriter w(ss, {"key", "value"});
            for (auto it = summary.begin(); it != summary.end(); ++it)
                if (it->is_number()) {
                    w.cell(it.key()).cell(it->get<double>());
                    w.end_row();
                }
            table = ss.str();
        }
        txt << "\n" << table;
        std::ofstream(dir / "report.txt", std::ios::binary) << txt.str();
        std::ofstream(dir / "report.csv", std::ios::binary) << table;
        log << txt.str();
        return 0;
    } catch (const Error& e) {
        return report_error(e, log);
    } catch (const json::exception& e) {
        log << "error: malformed run directory: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace mfstop
