#include "mfstop/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "mfstop/errors.hpp"

namespace mfstop {

Coefficient Coefficient::constant(double c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", c);
    return {[c](double, double, const InteractionStats&) { return c; }, false, buf};
}

Coefficient Coefficient::from_expression(const Expression& e) {
    return {[e](double t, double x, const InteractionStats& s) {
                ExprEnv env{t, x, s.feature_averages, s.stopped_mass, 0.0};
                return e.eval(env);
            },
            e.reads_measure(), e.source()};
}

Coefficient Coefficient::of(Fn fn, bool measure_dependent, std::string label) {
    return {std::move(fn), measure_dependent, std::move(label)};
}

Feature Feature::from_expression(const Expression& e, bool unstopped_only) {
    if (e.reads_measure() || e.reads_t())
        fail(ErrorCode::ExpressionError, "feature '" + e.source() + "' may only read x");
    return {[e](double x) { return e.eval(ExprEnv{0.0, x}); }, unstopped_only, e.source()};
}

double ScalarFunction::derivative(double y) const {
    if (slope) return slope(y);
    double h = 1e-6 * (1.0 + std::abs(y));
    return (value(y + h) - value(y - h)) / (2.0 * h);
}

ScalarFunction ScalarFunction::from_expression(const Expression& e) {
    ScalarFunction f;
    f.value = [e](double y) {
        ExprEnv env;
        env.scalar = y;
        return e.eval(env);
    };
    f.slope = [e](double y) {
        ExprEnv env;
        env.scalar = y;
        return e.derivative(env);
    };
    f.label = e.source();
    return f;
}

ScalarFunction ScalarFunction::of(std::function<double(double)> v, std::function<double(double)> d,
                                  std::string label) {
    return {std::move(v), std::move(d), std::move(label)};
}

const char* to_string(CriterionKind k) {
    switch (k) {
    case CriterionKind::linear: return "linear";
    case CriterionKind::concave_of_expectation: return "concave_of_expectation";
    case CriterionKind::distortion: return "distortion";
    case CriterionKind::anti_monotone_product: return "anti_monotone_product";
    case CriterionKind::potential: return "potential";
    }
    return "?";
}

CriterionKind criterion_kind_from_string(const std::string& s) {
    for (auto k : {CriterionKind::linear, CriterionKind::concave_of_expectation, CriterionKind::distortion,
                   CriterionKind::anti_monotone_product, CriterionKind::potential})
        if (s == to_string(k)) return k;
    fail(ErrorCode::ConfigError, "unknown criterion kind '" + s + "'");
}

// ---- initial laws -----------------------------------------------------------

InitialLaw InitialLaw::dirac(double x0) {
    InitialLaw l;
    l.kind_ = Kind::dirac;
    l.a_ = x0;
    l.label_ = "dirac";
    return l;
}

InitialLaw InitialLaw::gaussian(double mean, double sd) {
    if (!(sd > 0.0)) fail(ErrorCode::LawError, "gaussian initial law needs sd > 0");
    InitialLaw l;
    l.kind_ = Kind::gaussian;
    l.a_ = mean;
    l.b_ = sd;
    l.label_ = "gaussian";
    return l;
}

InitialLaw InitialLaw::density(std::function<double(double)> f, bool normalize, std::string label) {
    InitialLaw l;
    l.kind_ = Kind::density;
    l.f_ = std::move(f);
    l.normalize_ = normalize;
    l.label_ = label.empty() ? "density" : std::move(label);
    return l;
}

InitialLaw InitialLaw::nodal(const Grid& grid, std::vector<double> values) {
    if (values.size() != grid.space_nodes())
        fail(ErrorCode::LawError, "nodal law has " + std::to_string(values.size()) + " values, grid has " +
                                      std::to_string(grid.space_nodes()) + " nodes");
    InitialLaw l;
    l.kind_ = Kind::nodal;
    l.grid_ = grid;
    l.values_ = std::move(values);
    l.label_ = "nodal";
    return l;
}

static double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::vector<double> InitialLaw::discretize(const Grid& g) const {
    std::vector<double> m(g.space_nodes(), 0.0);
    switch (kind_) {
    case Kind::dirac: {
        if (a_ < g.x_min || a_ > g.x_max)
            fail(ErrorCode::LawError, "dirac location " + std::to_string(a_) + " outside the grid");
        double r = (a_ - g.x_min) / g.dx;
        auto j = static_cast<std::size_t>(std::floor(r));
        if (j >= g.nx) {
            m[g.nx] = 1.0 / g.dx;
            break;
        }
        double w = r - static_cast<double>(j);
        if (w < 1e-12) w = 0.0;
        if (w > 1.0 - 1e-12) { ++j; w = 0.0; }
        m[j] = (1.0 - w) / g.dx;
        if (w > 0.0) m[j + 1] = w / g.dx;
        break;
    }
    case Kind::gaussian: {
        // cell masses from CDF differences; the end cells carry the tails
        double prev = 0.0;
        for (std::size_t j = 0; j <= g.nx; ++j) {
            double right = j == g.nx ? 1.0 : normal_cdf((g.x(j) + 0.5 * g.dx - a_) / b_);
            m[j] = (right - prev) / g.dx;
            prev = right;
        }
        break;
    }
    case Kind::density: {
        double total = 0.0;
        for (std::size_t j = 0; j <= g.nx; ++j) {
            m[j] = f_(g.x(j));
            total += m[j];
        }
        total *= g.dx;
        if (normalize_) {
            if (!(total > 0.0)) fail(ErrorCode::LawError, "initial density has no mass on the grid");
            for (auto& v : m) v /= total;
        }
        break;
    }
    case Kind::nodal:
        if (!(grid_ == g)) fail(ErrorCode::GridMismatch, "nodal initial law declared on a different grid");
        m = values_;
        break;
    }
    return m;
}

LawSampler::LawSampler(const InitialLaw& law, const Grid& grid)
    : kind_(law.kind()), a_(law.location()), b_(law.scale()), grid_(grid) {
    if (kind_ == InitialLaw::Kind::density || kind_ == InitialLaw::Kind::nodal) {
        auto m = law.discretize(grid);
        cdf_.resize(m.size());
        double acc = 0.0;
        for (std::size_t j = 0; j < m.size(); ++j) {
            acc += std::max(m[j], 0.0);
            cdf_[j] = acc;
        }
        for (auto& c : cdf_) c /= acc;
    }
}

double LawSampler::operator()(double u1, double u2) const {
    switch (kind_) {
    case InitialLaw::Kind::dirac:
        return a_;
    case InitialLaw::Kind::gaussian: {
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
        return std::clamp(a_ + b_ * z, grid_.x_min, grid_.x_max);
    }
    default: {
        auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u1);
        auto j = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), cdf_.size() - 1));
        return std::clamp(grid_.x(j) + (u2 - 0.5) * grid_.dx, grid_.x_min, grid_.x_max);
    }
    }
}

// ---- validation -----------------------------------------------------------------

InteractionStats empty_stats(const ProblemSpec& spec, double t) {
    InteractionStats s;
    s.feature_averages.assign(spec.features.size(), 0.0);
    s.time = t;
    return s;
}

namespace {

std::vector<InteractionStats> probe_stats(const ProblemSpec& spec, const Grid& g) {
    std::vector<InteractionStats> out;
    const double xs[] = {g.x_min, 0.5 * (g.x_min + g.x_max), g.x_max};
    const double sm[] = {0.0, 0.5, 1.0};
    for (int k = 0; k < 3; ++k) {
        InteractionStats s;
        for (const auto& f : spec.features) s.feature_averages.push_back(f.h(xs[k]));
        s.stopped_mass = sm[k];
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

ValidatedSpec validate_spec(const ProblemSpec& spec, const Grid& g) {
    std::vector<Violation> bad;
    std::vector<std::string> warnings;

    if (!(g.x_min < g.x_max) || g.nx < 2 || g.nt < 1 || !(g.horizon > 0.0) ||
        g.dx != (g.x_max - g.x_min) / static_cast<double>(g.nx) ||
        g.dt != g.horizon / static_cast<double>(g.nt))
        bad.push_back({ErrorCode::GridError, "degenerate or inconsistent grid"});
    if (!bad.empty()) throw ValidationError(std::move(bad));
    if (std::abs(spec.horizon - g.horizon) > 1e-12 * spec.horizon)
        bad.push_back({ErrorCode::GridError, "grid horizon " + std::to_string(g.horizon) +
                                                 " differs from problem horizon " + std::to_string(spec.horizon)});
    if (!spec.drift.fn || !spec.diffusion.fn || !spec.reward.fn)
        bad.push_back({ErrorCode::CoefficientError, "drift, diffusion and reward must be defined"});
    if (!bad.empty()) throw ValidationError(std::move(bad));

    const auto& cr = spec.criterion;
    auto need = [&](const ScalarFunction& f, const char* name) {
        if (!f.defined())
            bad.push_back({ErrorCode::ConfigError, std::string("criterion ") + to_string(cr.kind) + " needs " + name});
    };
    if (cr.kind == CriterionKind::concave_of_expectation || cr.kind == CriterionKind::distortion) need(cr.phi, "phi");
    if (cr.kind == CriterionKind::anti_monotone_product) need(cr.F, "F");
    if (cr.kind == CriterionKind::potential) need(cr.G, "G");
    if (cr.kind == CriterionKind::distortion && cr.phi.defined()) {
        if (std::abs(cr.phi(0.0)) > 1e-12 || std::abs(cr.phi(1.0) - 1.0) > 1e-12)
            bad.push_back({ErrorCode::ConfigError, "distortion phi must satisfy phi(0)=0, phi(1)=1"});
        double prev = cr.phi(0.0);
        for (int k = 1; k <= 100; ++k) {
            double v = cr.phi(k / 100.0);
            if (v < prev - 1e-12) {
                bad.push_back({ErrorCode::ConfigError, "distortion phi is not non-decreasing on [0,1]"});
                break;
            }
            prev = v;
        }
    }

    // Coefficient probes: sign of diffusion on the whole lattice (time subsampled).
    auto stats = probe_stats(spec, g);
    const std::size_t t_stride = std::max<std::size_t>(1, g.nt / 20);
    double sigma_max = 0.0;
    bool sign_reported = false, finite_reported = false;
    std::vector<std::size_t> probe_times;
    for (std::size_t n = 0; n < g.nt; n += t_stride) probe_times.push_back(n);
    probe_times.push_back(g.nt);
    for (std::size_t n : probe_times) {
        for (auto& s : stats) {
            s.time = g.t(n);
            for (std::size_t j = 0; j <= g.nx; ++j) {
                double sg = spec.diffusion(g.t(n), g.x(j), s);
                double b = spec.drift(g.t(n), g.x(j), s);
                double r = spec.reward(g.t(n), g.x(j), s);
                if (!(std::isfinite(sg) && std::isfinite(b) && std::isfinite(r)) && !finite_reported) {
                    bad.push_back({ErrorCode::CoefficientError,
                                   "non-finite coefficient at t=" + std::to_string(g.t(n)) + ", x=" + std::to_string(g.x(j))});
                    finite_reported = true;
                }
                if (sg < 0.0 && !sign_reported) {
                    bad.push_back({ErrorCode::CoefficientError,
                                   "negative diffusion " + std::to_string(sg) + " at t=" + std::to_string(g.t(n)) +
                                       ", x=" + std::to_string(g.x(j))});
                    sign_reported = true;
                }
                sigma_max = std::max(sigma_max, std::abs(sg));
            }
        }
    }

    // Finite-difference Lipschitz estimate over random probe pairs.
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> ux(g.x_min, g.x_max), ut(0.0, g.horizon), ud(0.0, 1.0);
    const double lip_cap = 1e6;
    for (const char* name : {"drift", "diffusion"}) {
        const Coefficient& c = name[1] == 'r' ? spec.drift : spec.diffusion;
        double worst = 0.0;
        for (int k = 0; k < 256; ++k) {
            double t = ut(rng), x1 = ux(rng);
            double x2 = std::clamp(x1 + g.dx * (ud(rng) - 0.5), g.x_min, g.x_max);
            if (x1 == x2) continue;
            const auto& s = stats[static_cast<std::size_t>(k) % stats.size()];
            double l = std::abs(c(t, x1, s) - c(t, x2, s)) / std::abs(x1 - x2);
            if (!std::isfinite(l)) l = std::numeric_limits<double>::infinity();
            worst = std::max(worst, l);
        }
        if (worst > lip_cap)
            bad.push_back({ErrorCode::CoefficientError, std::string(name) + " Lipschitz estimate " +
                                                            std::to_string(worst) + " exceeds " + std::to_string(lip_cap)});
    }

    std::vector<double> law;
    try {
        law = spec.initial_law.discretize(g);
        double mass = 0.0;
        double lo = 0.0;
        for (double v : law) {
            mass += v;
            lo = std::min(lo, v);
        }
        mass *= g.dx;
        if (lo < 0.0) bad.push_back({ErrorCode::LawError, "initial law has negative density"});
        if (std::abs(mass - 1.0) > 1e-12)
            bad.push_back({ErrorCode::LawError, "initial law mass " + std::to_string(mass) + " != 1"});
        double band = 4.0 * sigma_max * std::sqrt(g.horizon);
        double near = 0.0;
        for (std::size_t j = 0; j <= g.nx; ++j)
            if (g.x(j) < g.x_min + band || g.x(j) > g.x_max - band) near += law[j] * g.dx;
        if (near > 1e-6)
            warnings.push_back("initial mass " + std::to_string(near) + " lies within 4*sigma*sqrt(T) of the domain boundary");
    } catch (const Error& e) {
        bad.push_back({e.code(), e.what()});
    }

    if (!bad.empty()) throw ValidationError(std::move(bad));
    return ValidatedSpec{spec, g, std::move(law), std::move(warnings)};
}

}  // namespace mfstop
