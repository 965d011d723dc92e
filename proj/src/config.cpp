#include "mfstop/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

#include "mfstop/csv.hpp"
#include "mfstop/errors.hpp"
#include "mfstop/expression.hpp"

namespace mfstop {

const char* to_string(TaskKind k) {
    switch (k) {
    case TaskKind::solve_stop: return "solve-stop";
    case TaskKind::solve_mfe: return "solve-mfe";
    case TaskKind::uniqueness: return "uniqueness";
    case TaskKind::potential: return "potential";
    case TaskKind::simulate_n: return "simulate-n";
    case TaskKind::epsnash: return "epsnash";
    case TaskKind::chaos: return "chaos";
    case TaskKind::diagnose: return "diagnose";
    }
    return "?";
}

bool task_is_stochastic(TaskKind k) {
    return k == TaskKind::simulate_n || k == TaskKind::epsnash || k == TaskKind::chaos;
}

namespace {

using json = nlohmann::json;

// Reads a parsed document and anchors every complaint at the offending node.
class Reader {
public:
    explicit Reader(std::string file) : file_(std::move(file)) {}

    [[noreturn]] void error(const toml::node* n, const std::string& path, const std::string& msg) const {
        std::string where = file_;
        if (n && n->source().begin.line > 0)
            where += ":" + std::to_string(n->source().begin.line) + ":" + std::to_string(n->source().begin.column);
        fail(ErrorCode::ConfigError, where + ": " + (path.empty() ? "" : path + ": ") + msg);
    }

    void check_keys(const toml::table& t, const std::string& path, std::initializer_list<std::string_view> allowed) const {
        for (auto&& [k, v] : t) {
            if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end())
                error(&v, join(path, k.str()), "unknown key");
        }
    }

    static std::string join(const std::string& path, std::string_view key) {
        return path.empty() ? std::string(key) : path + "." + std::string(key);
    }

    const toml::table& table(const toml::table& t, std::string_view key, const std::string& path) const {
        const toml::node* n = t.get(key);
        if (!n) error(&t, path, "missing table [" + join(path, key) + "]");
        if (!n->is_table()) error(n, join(path, key), "expected a table");
        return *n->as_table();
    }

    double number(const toml::table& t, std::string_view key, const std::string& path,
                  std::optional<double> fallback = {}) const {
        const toml::node* n = t.get(key);
        if (!n) {
            if (fallback) return *fallback;
            error(&t, path, "missing key '" + std::string(key) + "'");
        }
        if (auto v = n->value<double>()) return *v;
        error(n, join(path, key), "expected a number");
    }

    std::size_t count(const toml::table& t, std::string_view key, const std::string& path,
                      std::optional<std::size_t> fallback = {}) const {
        const toml::node* n = t.get(key);
        if (!n) {
            if (fallback) return *fallback;
            error(&t, path, "missing key '" + std::string(key) + "'");
        }
        auto v = n->value<std::int64_t>();
        if (!v || *v < 0) error(n, join(path, key), "expected a non-negative integer");
        return static_cast<std::size_t>(*v);
    }

    bool flag(const toml::table& t, std::string_view key, const std::string& path, bool fallback) const {
        const toml::node* n = t.get(key);
        if (!n) return fallback;
        if (auto v = n->value<bool>()) return *v;
        error(n, join(path, key), "expected true or false");
    }

    std::string text(const toml::table& t, std::string_view key, const std::string& path,
                     std::optional<std::string> fallback = {}) const {
        const toml::node* n = t.get(key);
        if (!n) {
            if (fallback) return *fallback;
            error(&t, path, "missing key '" + std::string(key) + "'");
        }
        if (auto v = n->value<std::string>()) return *v;
        error(n, join(path, key), "expected a string");
    }

    // Expressions may be given as strings or bare numbers.
    std::optional<Expression> expression(const toml::table& t, std::string_view key, const std::string& path,
                                         std::string_view scalar = {}, bool required = true) const {
        const toml::node* n = t.get(key);
        if (!n) {
            if (required) error(&t, path, "missing key '" + std::string(key) + "'");
            return std::nullopt;
        }
        std::string src;
        if (auto s = n->value<std::string>())
            src = *s;
        else if (auto d = n->value<double>())
            src = format_double(*d);
        else
            error(n, join(path, key), "expected an expression string or a number");
        try {
            return Expression::parse(src, scalar);
        } catch (const Error& e) {
            error(n, join(path, key), e.what());
        }
    }

    std::vector<std::size_t> counts(const toml::table& t, std::string_view key, const std::string& path,
                                    std::vector<std::size_t> fallback) const {
        const toml::node* n = t.get(key);
        if (!n) return fallback;
        const toml::array* a = n->as_array();
        if (!a || a->empty()) error(n, join(path, key), "expected a non-empty array of integers");
        std::vector<std::size_t> out;
        for (auto&& e : *a) {
            auto v = e.value<std::int64_t>();
            if (!v || *v < 1) error(&e, join(path, key), "expected positive integers");
            out.push_back(static_cast<std::size_t>(*v));
        }
        return out;
    }

    std::vector<std::string> strings(const toml::table& t, std::string_view key, const std::string& path,
                                     std::vector<std::string> fallback) const {
        const toml::node* n = t.get(key);
        if (!n) return fallback;
        const toml::array* a = n->as_array();
        if (!a || a->empty()) error(n, join(path, key), "expected a non-empty array of strings");
        std::vector<std::string> out;
        for (auto&& e : *a) {
            auto v = e.value<std::string>();
            if (!v) error(&e, join(path, key), "expected strings");
            out.push_back(*v);
        }
        return out;
    }

private:
    std::string file_;
};

toml::table json_to_toml(const json& j);

void append_json(toml::array& arr, const json& v) {
    if (v.is_object()) arr.push_back(json_to_toml(v));
    else if (v.is_array()) {
        toml::array sub;
        for (const auto& e : v) append_json(sub, e);
        arr.push_back(std::move(sub));
    } else if (v.is_boolean()) arr.push_back(v.get<bool>());
    else if (v.is_number_integer()) arr.push_back(v.get<std::int64_t>());
    else if (v.is_number()) arr.push_back(v.get<double>());
    else if (v.is_string()) arr.push_back(v.get<std::string>());
}

toml::table json_to_toml(const json& j) {
    toml::table t;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const json& v = it.value();
        if (v.is_object()) t.insert(it.key(), json_to_toml(v));
        else if (v.is_array()) {
            toml::array a;
            for (const auto& e : v) append_json(a, e);
            t.insert(it.key(), std::move(a));
        } else if (v.is_boolean()) t.insert(it.key(), v.get<bool>());
        else if (v.is_number_integer()) t.insert(it.key(), v.get<std::int64_t>());
        else if (v.is_number()) t.insert(it.key(), v.get<double>());
        else if (v.is_string()) t.insert(it.key(), v.get<std::string>());
        else fail(ErrorCode::ConfigError, "null value for key '" + it.key() + "'");
    }
    return t;
}

InitialLaw read_law(const Reader& r, const toml::table& t, const std::string& path, const Grid& grid, json& out) {
    std::string kind = r.text(t, "kind", path);
    out["kind"] = kind;
    if (kind == "dirac") {
        r.check_keys(t, path, {"kind", "x0"});
        double x0 = r.number(t, "x0", path);
        out["x0"] = x0;
        return InitialLaw::dirac(x0);
    }
    if (kind == "gaussian") {
        r.check_keys(t, path, {"kind", "mean", "sd"});
        double m = r.number(t, "mean", path), sd = r.number(t, "sd", path);
        if (!(sd > 0.0)) r.error(t.get("sd"), Reader::join(path, "sd"), "must be positive");
        out["mean"] = m;
        out["sd"] = sd;
        return InitialLaw::gaussian(m, sd);
    }
    if (kind == "density") {
        r.check_keys(t, path, {"kind", "f", "normalize"});
        auto e = *r.expression(t, "f", path);
        if (e.reads_measure() || e.reads_t()) r.error(t.get("f"), Reader::join(path, "f"), "density may only read x");
        bool norm = r.flag(t, "normalize", path, true);
        out["f"] = e.source();
        out["normalize"] = norm;
        return InitialLaw::density([e](double x) { return e.eval(ExprEnv{0.0, x}); }, norm, e.source());
    }
    if (kind == "nodal") {
        r.check_keys(t, path, {"kind", "values"});
        const toml::node* n = t.get("values");
        const toml::array* a = n ? n->as_array() : nullptr;
        if (!a) r.error(n ? n : &t, Reader::join(path, "values"), "expected an array of node densities");
        std::vector<double> v;
        for (auto&& e : *a) {
            auto d = e.value<double>();
            if (!d) r.error(&e, Reader::join(path, "values"), "expected numbers");
            v.push_back(*d);
        }
        if (v.size() != grid.space_nodes())
            r.error(n, Reader::join(path, "values"),
                    std::to_string(v.size()) + " values for " + std::to_string(grid.space_nodes()) + " space nodes");
        out["values"] = v;
        return InitialLaw::nodal(grid, std::move(v));
    }
    r.error(t.get("kind"), Reader::join(path, "kind"), "unknown law '" + kind + "' (dirac, gaussian, density, nodal)");
}

CriterionSpec read_criterion(const Reader& r, const toml::table& t, const std::string& path, json& out) {
    CriterionSpec c;
    std::string kind = r.text(t, "kind", path, std::string("linear"));
    try {
        c.kind = criterion_kind_from_string(kind);
    } catch (const Error& e) {
        r.error(t.get("kind"), Reader::join(path, "kind"), e.what());
    }
    out["kind"] = kind;
    switch (c.kind) {
    case CriterionKind::linear: r.check_keys(t, path, {"kind"}); break;
    case CriterionKind::concave_of_expectation:
    case CriterionKind::distortion:
        r.check_keys(t, path, {"kind", "phi"});
        c.phi = ScalarFunction::from_expression(*r.expression(t, "phi", path, "p"));
        out["phi"] = c.phi.label;
        break;
    case CriterionKind::anti_monotone_product:
        r.check_keys(t, path, {"kind", "F"});
        c.F = ScalarFunction::from_expression(*r.expression(t, "F", path, "y"));
        out["F"] = c.F.label;
        break;
    case CriterionKind::potential:
        r.check_keys(t, path, {"kind", "G"});
        c.G = ScalarFunction::from_expression(*r.expression(t, "G", path, "y"));
        out["G"] = c.G.label;
        break;
    }
    return c;
}

TaskConfig read_task(const Reader& r, const toml::table& root, json& out) {
    const toml::node* tn = root.get("task");
    if (!tn) r.error(&root, "", "missing [task.<name>] block");
    if (!tn->is_table()) r.error(tn, "task", "expected a table");
    const toml::table& tasks = *tn->as_table();
    if (tasks.size() != 1) {
        std::string names;
        for (auto&& [k, v] : tasks) names += (names.empty() ? "" : ", ") + std::string(k.str());
        r.error(tn, "task", "exactly one task block is required, found " + std::to_string(tasks.size()) +
                                (names.empty() ? "" : " (" + names + ")"));
    }
    auto first = tasks.begin();
    const toml::key& name = first->first;
    const toml::node& node = first->second;
    std::string path = "task." + std::string(name.str());
    if (!node.is_table()) r.error(&node, path, "expected a table");
    const toml::table& t = *node.as_table();

    TaskConfig c;
    bool found = false;
    for (auto k : {TaskKind::solve_stop, TaskKind::solve_mfe, TaskKind::uniqueness, TaskKind::potential,
                   TaskKind::simulate_n, TaskKind::epsnash, TaskKind::chaos, TaskKind::diagnose})
        if (name.str() == to_string(k)) {
            c.kind = k;
            found = true;
        }
    if (!found)
        r.error(&node, path,
                "unknown task (solve-stop, solve-mfe, uniqueness, potential, simulate-n, epsnash, chaos, diagnose)");

    auto read_fp = [&] {
        c.damping = r.number(t, "damping", path, c.damping);
        if (!(c.damping > 0.0 && c.damping <= 1.0)) r.error(t.get("damping"), path + ".damping", "must lie in (0, 1]");
        c.max_iter = r.count(t, "max_iter", path, c.max_iter);
        c.fp_tol = r.number(t, "fp_tol", path, c.fp_tol);
        c.search_samples = r.count(t, "search_samples", path, c.search_samples);
        c.knots = r.count(t, "knots", path, c.knots);
        out["damping"] = c.damping;
        out["max_iter"] = c.max_iter;
        out["fp_tol"] = c.fp_tol;
        out["search_samples"] = c.search_samples;
        out["knots"] = c.knots;
    };
    auto check_init = [&](const std::string& s) {
        if (s != "stopped_at_start" && s != "never_stopped" && s != "mixed")
            r.error(&t, path, "unknown initial flow '" + s + "' (stopped_at_start, never_stopped, mixed)");
    };
    auto read_policy = [&] {
        std::string p = r.text(t, "policy", path, std::string("optimal"));
        if (p == "optimal") c.policy = PolicyChoice::optimal;
        else if (p == "mfe") c.policy = PolicyChoice::mfe;
        else if (p == "never") c.policy = PolicyChoice::never;
        else if (p == "hazard") c.policy = PolicyChoice::hazard;
        else r.error(t.get("policy"), path + ".policy", "unknown policy '" + p + "' (optimal, mfe, never, hazard)");
        c.hazard = r.number(t, "hazard", path, c.hazard);
        if (c.hazard < 0.0) r.error(t.get("hazard"), path + ".hazard", "must be non-negative");
        c.dt_sim = r.number(t, "dt_sim", path, 0.0);
        if (c.dt_sim < 0.0) r.error(t.get("dt_sim"), path + ".dt_sim", "must be non-negative");
        out["policy"] = p;
        if (c.policy == PolicyChoice::hazard) out["hazard"] = c.hazard;
        out["dt_sim"] = c.dt_sim;
        if (c.policy == PolicyChoice::mfe) read_fp();
    };

    switch (c.kind) {
    case TaskKind::solve_stop: r.check_keys(t, path, {}); break;
    case TaskKind::solve_mfe:
        r.check_keys(t, path, {"damping", "max_iter", "fp_tol", "search_samples", "knots", "init"});
        read_fp();
        c.init = r.text(t, "init", path, c.init);
        check_init(c.init);
        out["init"] = c.init;
        break;
    case TaskKind::uniqueness:
        r.check_keys(t, path, {"damping", "max_iter", "fp_tol", "search_samples", "knots", "inits"});
        read_fp();
        c.inits = r.strings(t, "inits", path, c.inits);
        for (const auto& s : c.inits) check_init(s);
        out["inits"] = c.inits;
        break;
    case TaskKind::potential:
        r.check_keys(t, path, {"damping", "max_iter", "fp_tol", "search_samples", "knots", "restarts"});
        read_fp();
        c.restarts = r.count(t, "restarts", path, c.restarts);
        out["restarts"] = c.restarts;
        break;
    case TaskKind::simulate_n:
        r.check_keys(t, path, {"N", "policy", "hazard", "dt_sim", "dump_trajectories", "max_dump_rows", "damping",
                               "max_iter", "fp_tol", "search_samples", "knots"});
        c.players = r.count(t, "N", path, c.players);
        if (c.players < 1) r.error(t.get("N"), path + ".N", "must be at least 1");
        c.dump_trajectories = r.flag(t, "dump_trajectories", path, false);
        c.max_dump_rows = r.count(t, "max_dump_rows", path, c.max_dump_rows);
        out["N"] = c.players;
        out["dump_trajectories"] = c.dump_trajectories;
        out["max_dump_rows"] = c.max_dump_rows;
        read_policy();
        break;
    case TaskKind::epsnash:
    case TaskKind::chaos:
        r.check_keys(t, path, {"Ns", "n_rep", "policy", "hazard", "dt_sim", "damping", "max_iter", "fp_tol",
                               "search_samples", "knots"});
        c.Ns = r.counts(t, "Ns", path, c.Ns);
        c.n_rep = r.count(t, "n_rep", path, c.n_rep);
        if (c.n_rep < 2) r.error(t.get("n_rep"), path + ".n_rep", "must be at least 2");
        out["Ns"] = c.Ns;
        out["n_rep"] = c.n_rep;
        read_policy();
        break;
    case TaskKind::diagnose:
        r.check_keys(t, path, {"feature", "policy", "hazard", "dt_sim", "damping", "max_iter", "fp_tol",
                               "search_samples", "knots"});
        c.feature = r.count(t, "feature", path, 0);
        out["feature"] = c.feature;
        read_policy();
        break;
    }
    out["kind"] = to_string(c.kind);
    return c;
}

ExperimentConfig read_document(const toml::table& root, const std::string& file) {
    Reader r(file);
    r.check_keys(root, "", {"seed", "output_dir", "workers", "problem", "grid", "task"});
    ExperimentConfig cfg;
    cfg.source = file;
    json resolved;

    if (const toml::node* s = root.get("seed")) {
        auto v = s->value<std::int64_t>();
        if (!v || *v < 0) r.error(s, "seed", "expected a non-negative integer");
        cfg.seed = static_cast<std::uint64_t>(*v);
        resolved["seed"] = *cfg.seed;
    }
    cfg.output_dir = r.text(root, "output_dir", "", std::string("out"));
    std::size_t workers = r.count(root, "workers", "", 1);
    if (workers < 1 || workers > 256) r.error(root.get("workers"), "workers", "must lie in [1, 256]");
    cfg.workers = static_cast<unsigned>(workers);

    const toml::table& prob = r.table(root, "problem", "");
    r.check_keys(prob, "problem", {"horizon", "drift", "diffusion", "reward", "features", "initial_law", "criterion"});
    const toml::table& gt = r.table(root, "grid", "");
    r.check_keys(gt, "grid", {"x_min", "x_max", "nx", "nt"});

    ProblemSpec& spec = cfg.spec;
    spec.horizon = r.number(prob, "horizon", "problem", 1.0);
    try {
        cfg.grid = build_grid(r.number(gt, "x_min", "grid"), r.number(gt, "x_max", "grid"), r.count(gt, "nx", "grid"),
                              spec.horizon, r.count(gt, "nt", "grid"));
    } catch (const Error& e) {
        r.error(&gt, "grid", e.what());
    }
    resolved["grid"] = {{"x_min", cfg.grid.x_min}, {"x_max", cfg.grid.x_max}, {"nx", cfg.grid.nx}, {"nt", cfg.grid.nt}};

    json& pj = resolved["problem"];
    pj["horizon"] = spec.horizon;
    spec.drift = Coefficient::from_expression(r.expression(prob, "drift", "problem", {}, false).value_or(
        Expression::constant(0.0)));
    spec.diffusion = Coefficient::from_expression(r.expression(prob, "diffusion", "problem", {}, false).value_or(
        Expression::constant(1.0)));
    spec.reward = Coefficient::from_expression(*r.expression(prob, "reward", "problem"));
    pj["drift"] = spec.drift.label;
    pj["diffusion"] = spec.diffusion.label;
    pj["reward"] = spec.reward.label;

    pj["features"] = json::array();
    if (const toml::node* fn = prob.get("features")) {
        const toml::array* a = fn->as_array();
        if (!a) r.error(fn, "problem.features", "expected an array of tables {h = \"...\", unstopped_only = false}");
        for (std::size_t i = 0; i < a->size(); ++i) {
            const toml::node& e = *a->get(i);
            std::string path = "problem.features[" + std::to_string(i) + "]";
            const toml::table* ft = e.as_table();
            if (!ft) r.error(&e, path, "expected a table");
            r.check_keys(*ft, path, {"h", "unstopped_only"});
            auto h = *r.expression(*ft, "h", path);
            if (h.reads_measure() || h.reads_t()) r.error(ft->get("h"), path + ".h", "features may only read x");
            bool only = r.flag(*ft, "unstopped_only", path, false);
            spec.features.push_back(Feature::from_expression(h, only));
            pj["features"].push_back({{"h", h.source()}, {"unstopped_only", only}});
        }
    }
    spec.initial_law = read_law(r, r.table(prob, "initial_law", "problem"), "problem.initial_law", cfg.grid,
                                pj["initial_law"]);
    if (prob.get("criterion"))
        spec.criterion = read_criterion(r, r.table(prob, "criterion", "problem"), "problem.criterion", pj["criterion"]);
    else
        pj["criterion"] = {{"kind", "linear"}};

    cfg.task = read_task(r, root, resolved["task"]);
    if (task_is_stochastic(cfg.task.kind) && !cfg.seed)
        r.error(&root, "seed", std::string("task ") + to_string(cfg.task.kind) + " is stochastic and needs a seed");
    cfg.resolved = resolved.dump(2) + "\n";
    return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source_name) {
    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            fail(ErrorCode::ConfigError, source_name + ": byte " + std::to_string(e.byte) + ": " + e.what());
        }
        if (!j.is_object()) fail(ErrorCode::ConfigError, source_name + ": top level must be an object");
        return read_document(json_to_toml(j), source_name);
    }
    toml::table root;
    try {
        root = toml::parse(text, source_name);
    } catch (const toml::parse_error& e) {
        const auto& b = e.source().begin;
        fail(ErrorCode::ConfigError, source_name + ":" + std::to_string(b.line) + ":" + std::to_string(b.column) + ": " +
                                         std::string(e.description()));
    }
    return read_document(root, source_name);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::ConfigError, path + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

}  // namespace mfstop
