// Command-line front end: JSON config in, CSV or JSON out.
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <unistd.h>

#include <unsupported/Eigen/Polynomials>

#include "CLI11.hpp"
#include "json.hpp"
#include "sdshrink/federated.hpp"
#include "sdshrink/montecarlo.hpp"

using json = nlohmann::json;
using namespace sdshrink;

namespace {

// ---------------------------------------------------------------- config access

// A JSON object whose keys must all be read; leftovers are reported as unknown.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }
    ~Obj() noexcept(false) {
        if (std::uncaught_exceptions() == 0) finish();
    }
    Obj(const Obj&) = delete;
    Obj& operator=(const Obj&) = delete;

    bool has(const std::string& k) const { return j_.contains(k); }
    const json& raw(const std::string& k) {
        seen_.insert(k);
        if (!j_.contains(k)) throw ConfigError(where(k) + " is required");
        return j_.at(k);
    }
    std::string where(const std::string& k) const { return path_ + "." + k; }

    double num(const std::string& k) {
        const auto& v = raw(k);
        if (!v.is_number()) throw ConfigError(where(k) + " must be a number");
        return v.get<double>();
    }
    double num(const std::string& k, double def) { return has(k) ? num(k) : (seen_.insert(k), def); }
    long long integer(const std::string& k) {
        const auto& v = raw(k);
        if (!v.is_number_integer() && !(v.is_number() && std::floor(v.get<double>()) == v.get<double>()))
            throw ConfigError(where(k) + " must be an integer");
        return v.is_number_integer() ? v.get<long long>() : static_cast<long long>(v.get<double>());
    }
    long long integer(const std::string& k, long long def) { return has(k) ? integer(k) : (seen_.insert(k), def); }
    std::uint64_t u64(const std::string& k) {
        const auto& v = raw(k);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
        throw ConfigError(where(k) + " must be a nonnegative integer");
    }
    std::string str(const std::string& k) {
        const auto& v = raw(k);
        if (!v.is_string()) throw ConfigError(where(k) + " must be a string");
        return v.get<std::string>();
    }
    std::string str(const std::string& k, const std::string& def) { return has(k) ? str(k) : (seen_.insert(k), def); }
    std::vector<double> nums(const std::string& k) {
        const auto& v = raw(k);
        if (!v.is_array()) throw ConfigError(where(k) + " must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(where(k) + " must be an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    void finish() {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string lower(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

SpikedModel parse_model(const json& j) {
    Obj o(j, "model");
    SpikedModel m;
    m.sigma0_sq = o.num("sigma0_sq", 1.0);
    m.c = o.num("c");
    m.r = o.num("r");
    m.sigma_eps_sq = o.num("sigma_eps_sq");
    if (o.has("spikes")) {
        const auto& arr = o.raw("spikes");
        if (!arr.is_array()) throw ConfigError("model.spikes must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Obj s(arr[i], "model.spikes[" + std::to_string(i) + "]");
            m.spikes.push_back({s.num("delta"), s.num("alpha")});
        }
    }
    m.validate();
    return m;
}

// A number, an array of numbers, or {from, to, count, scale: linear|log}.
std::vector<double> parse_values(const json& v, const std::string& path) {
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) {
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(path + " must hold numbers");
            out.push_back(e.get<double>());
        }
        if (out.empty()) throw ConfigError(path + " is empty");
        return out;
    }
    Obj o(v, path);
    const double from = o.num("from"), to = o.num("to");
    const long long count = o.integer("count");
    const std::string scale = o.str("scale", "linear");
    if (count < 1 || count > 1000000) throw ConfigError(path + ".count must lie in [1, 1e6]");
    if (scale != "linear" && scale != "log") throw ConfigError(path + ".scale must be linear or log");
    if (scale == "log" && !(from > 0.0 && to > 0.0)) throw ConfigError(path + ": a log grid needs positive ends");
    std::vector<double> out;
    for (long long i = 0; i < count; ++i) {
        const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
        out.push_back(scale == "log" ? std::exp(std::log(from) + t * (std::log(to) - std::log(from)))
                                     : from + t * (to - from));
    }
    out.back() = to;
    out.front() = from;
    return out;
}

SdOrdering parse_ordering(const std::string& s) {
    if (s == "min_coefficient") return SdOrdering::MinCoefficient;
    if (s == "max_residual") return SdOrdering::MaxResidual;
    throw ConfigError("ordering must be min_coefficient or max_residual");
}

// ---------------------------------------------------------------- output

using Cell = std::variant<double, long long, std::string>;

struct Table {
    std::string title;
    std::vector<std::string> cols;
    std::vector<std::vector<Cell>> rows;
    void add(std::vector<Cell> row) {
        if (row.size() != cols.size()) throw std::logic_error("row width does not match the header");
        rows.push_back(std::move(row));
    }
};

struct Output {
    std::vector<Table> tables;  // tabular commands
    std::optional<json> doc;    // structured commands
};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

std::string cell_text(const Cell& c) {
    if (auto d = std::get_if<double>(&c)) return fmt17(*d);
    if (auto i = std::get_if<long long>(&c)) return std::to_string(*i);
    return csv_field(std::get<std::string>(c));
}

json cell_json(const Cell& c) {
    if (auto d = std::get_if<double>(&c)) return std::isfinite(*d) ? json(*d) : json(nullptr);
    if (auto i = std::get_if<long long>(&c)) return *i;
    return std::get<std::string>(c);
}

// dotted-path key,value rows for a structured result
void flatten(const json& j, const std::string& prefix, Table& t) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), t);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", t);
    } else if (j.is_number_float()) {
        t.add({prefix, fmt17(j.get<double>())});
    } else if (j.is_number()) {
        t.add({prefix, j.dump()});
    } else if (j.is_string()) {
        t.add({prefix, j.get<std::string>()});
    } else {
        t.add({prefix, j.dump()});
    }
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string render(const Output& out, const std::string& format, const std::string& command, const std::string& hash) {
    std::ostringstream os;
    if (format == "json") {
        json j;
        j["command"] = command;
        j["config_hash"] = hash;
        if (out.doc) {
            j["result"] = *out.doc;
        } else {
            for (const auto& t : out.tables) {
                json rows = json::array();
                for (const auto& r : t.rows) {
                    json row;
                    for (std::size_t k = 0; k < t.cols.size(); ++k) row[t.cols[k]] = cell_json(r[k]);
                    rows.push_back(std::move(row));
                }
                j["result"][t.title] = std::move(rows);
            }
        }
        os << j.dump(2) << "\n";
        return os.str();
    }
    std::vector<Table> tables = out.tables;
    if (out.doc) {
        Table t{"result", {"key", "value"}, {}};
        flatten(*out.doc, "", t);
        tables.push_back(std::move(t));
    }
    os << "# sdshrink " << command << " config_fnv1a64=" << hash << " nodes=" << default_nodes() << "\n";
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const auto& t = tables[i];
        if (tables.size() > 1) os << (i ? "\n" : "") << "# table: " << t.title << "\n";
        for (std::size_t k = 0; k < t.cols.size(); ++k) os << (k ? "," : "") << csv_field(t.cols[k]);
        os << "\n";
        for (const auto& r : t.rows) {
            for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << cell_text(r[k]);
            os << "\n";
        }
    }
    return os.str();
}

void write_atomic(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot open " + tmp.string() + " for writing");
        f << text;
        f.flush();
        if (!f) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw ConfigError("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw ConfigError("cannot move output into place at " + path);
    }
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json poly_json(const Poly& p) { return std::vector<double>(p.data().begin(), p.data().end()); }
json sd_json(const SDParams& p) { return {{"lambdas", p.lambdas}, {"xis", p.xis}}; }

json breakdown_json(const RiskBreakdown& r) {
    return {{"bias_bulk", r.bias_bulk}, {"bias_spikes", r.bias_spikes}, {"variance", r.variance}, {"total", r.total}};
}

json rule_json(const RationalRule& r) {
    return {{"P", poly_json(r.P)}, {"Q", poly_json(r.Q)}, {"P_roots", r.roots}, {"scale", r.scale}};
}

// ---------------------------------------------------------------- rule specs

struct NamedRule {
    std::string name;
    std::string param;  // swept field, if any
    double value = 0.0;
    ShrinkageFn fn;
};

std::string default_name(const std::string& type, const std::string& param, double value) {
    if (param.empty()) return type;
    std::ostringstream os;
    os.precision(6);
    os << type << "(" << param << "=" << value << ")";
    return os.str();
}

// Expands one rule spec. At most one numeric field may be a grid.
std::vector<NamedRule> parse_rule(const json& j, const std::string& path, const ModelGrid& g) {
    Obj o(j, path);
    const auto& m = g.model();
    const std::string type = o.str("type");
    const std::string given = o.str("name", "");
    std::string gparam;
    std::vector<double> gvals{0.0};
    auto field = [&](const std::string& k) -> std::vector<double> {
        const auto v = parse_values(o.raw(k), o.where(k));
        if (v.size() > 1) {
            if (!gparam.empty()) throw ConfigError(path + ": only one field may be a grid");
            gparam = k;
            gvals = v;
        }
        return v;
    };
    std::vector<NamedRule> out;
    auto emit = [&](auto make) {
        for (double v : gvals) {
            NamedRule r{given, gparam, gparam.empty() ? 0.0 : v, make(v)};
            if (r.name.empty()) r.name = default_name(type, gparam, v);
            else if (!gparam.empty()) r.name = default_name(given, gparam, v);
            out.push_back(std::move(r));
        }
    };
    if (type == "ridge") {
        const auto l = field("lambda");
        emit([&](double v) { return ridge(gparam.empty() ? l[0] : v); });
    } else if (type == "gd") {
        const auto eta = field("eta");
        const auto steps = field("steps");
        emit([&](double v) {
            const double e = gparam == "eta" ? v : eta[0];
            const double t = gparam == "steps" ? v : steps[0];
            if (t != std::floor(t)) throw ConfigError(o.where("steps") + " must be an integer");
            return gd_poly(e, static_cast<int>(t));
        });
    } else if (type == "pcr") {
        const auto tau = field("tau");
        const double w = o.num("ramp_width", -1.0);
        emit([&](double v) { return pcr_surrogate(m, gparam.empty() ? tau[0] : v, w); });
    } else if (type == "pcr_outliers") {
        emit([&](double) { return pcr_outlier_limit(m); });
    } else if (type == "min_norm") {
        const double frac = o.num("eta_fraction", 0.5);
        emit([&](double) { return min_norm_surrogate(m, frac); });
    } else if (type == "sd") {
        SDParams p{o.nums("lambdas"), o.nums("xis")};
        emit([&](double) { return sd_chain_fn(p); });
    } else if (type == "rational") {
        Poly num(o.nums("numerator")), den(o.nums("denominator"));
        emit([&](double) { return rational(num, den); });
    } else if (type == "optimal") {
        emit([&](double) {
            return m.s() == 0 ? isotropic_optimal(m) : optimal_pred_rule(g).rule.to_shrinkage();
        });
    } else if (type == "optimal_est") {
        emit([&](double) { return optimal_est_rule(g).to_shrinkage(); });
    } else if (type == "tuned_ridge") {
        const std::string target = o.str("target", "prediction");
        if (target != "prediction" && target != "estimation")
            throw ConfigError(o.where("target") + " must be prediction or estimation");
        emit([&](double) {
            return ridge(tuned_ridge_lambda(g, target == "prediction" ? RiskKind::Prediction : RiskKind::Estimation));
        });
    } else {
        throw ConfigError(o.where("type") + ": unknown rule type '" + type + "'");
    }
    for (auto& r : out) check_admissible(m, r.fn);
    return out;
}

std::vector<NamedRule> parse_rules(const json& arr, const std::string& path, const ModelGrid& g) {
    if (!arr.is_array() || arr.empty()) throw ConfigError(path + " must be a nonempty array of rules");
    std::vector<NamedRule> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        auto v = parse_rule(arr[i], path + "[" + std::to_string(i) + "]", g);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

// ---------------------------------------------------------------- simulation specs

struct SimSpec {
    int n = 0, p = 0, replicates = 20;
    std::uint64_t seed = 0;
    EntryDist dist = EntryDist::Gaussian;
    double t_df = 10.0;
    json estimators;
    std::string path;
};

SimSpec parse_sim(const json& j, const std::string& path, std::optional<std::uint64_t> seed_override) {
    Obj o(j, path);
    SimSpec s;
    s.path = path;
    s.n = static_cast<int>(o.integer("n"));
    s.p = static_cast<int>(o.integer("p"));
    s.replicates = static_cast<int>(o.integer("replicates", 20));
    if (o.has("seed")) s.seed = o.u64("seed");
    if (seed_override) s.seed = *seed_override;
    const std::string d = lower(o.str("entries", "gaussian"));
    if (d == "gaussian") s.dist = EntryDist::Gaussian;
    else if (d == "rademacher") s.dist = EntryDist::Rademacher;
    else if (d == "student_t") s.dist = EntryDist::StudentT;
    else throw ConfigError(o.where("entries") + " must be gaussian, rademacher or student_t");
    s.t_df = o.num("t_df", 10.0);
    s.estimators = o.raw("estimators");
    if (!s.estimators.is_array() || s.estimators.empty())
        throw ConfigError(o.where("estimators") + " must be a nonempty array");
    if (s.n < 2 || s.p < 2 || s.n > 200000 || s.p > 200000) throw ConfigError(path + ": n and p must lie in [2, 2e5]");
    if (s.replicates < 2) throw ConfigError(o.where("replicates") + " must be at least 2");
    return s;
}

SimConfig make_sim_config(const SimSpec& s, const SpikedModel& m) {
    SimConfig cfg;
    cfg.model = m;
    cfg.n = s.n;
    cfg.p = s.p;
    cfg.seed = s.seed;
    cfg.entry_dist = s.dist;
    cfg.t_df = s.t_df;
    cfg.n_replicates = s.replicates;
    cfg.validate();
    if (cfg.aspect_mismatch())
        throw ConfigError(s.path + ": p/n = " + fmt17(static_cast<double>(s.p) / s.n) + " does not match model.c = " +
                          fmt17(m.c) + " (tolerance 0.01)");
    return cfg;
}

// Estimators evaluated on the sample spectrum, each with its limiting risk.
std::vector<SpectralEstimator> parse_estimators(const SimSpec& s, const ModelGrid& g) {
    const auto& m = g.model();
    const int rank = std::min(s.n, s.p);
    std::size_t n_out = 0;
    for (const auto& sp : m.spikes) n_out += outlier_atom_mass(m, sp.delta) > 0.0;
    std::vector<SpectralEstimator> out;
    for (std::size_t i = 0; i < s.estimators.size(); ++i) {
        const std::string path = s.path + ".estimators[" + std::to_string(i) + "]";
        const auto& e = s.estimators[i];
        if (!e.is_object() || !e.contains("type")) throw ConfigError(path + " must be an object with a type");
        const std::string type = e.at("type").is_string() ? e.at("type").get<std::string>() : "";
        if (type == "pcr_components") {
            Obj o(e, path);
            o.str("type");
            const long long mcomp = o.integer("m");
            std::string name = o.str("name", "pcr(m=" + std::to_string(mcomp) + ")");
            if (mcomp < 1 || mcomp > rank) throw ConfigError(o.where("m") + " must lie in [1, min(n, p)]");
            ShrinkageFn lim;
            if (mcomp == rank) {
                lim = min_norm_surrogate(m);
            } else if (static_cast<std::size_t>(mcomp) == n_out || (n_out == 0 && mcomp <= 1)) {
                lim = pcr_outlier_limit(m);
            } else if (static_cast<std::size_t>(mcomp) < n_out) {
                throw ConfigError(o.where("m") + " keeps fewer components than there are outliers; no limit is available");
            } else {
                lim = pcr_surrogate(m, static_cast<double>(mcomp) / s.p);
            }
            out.push_back(pcr_estimator(name, static_cast<int>(mcomp), limiting_pred_risk(g, lim).total));
        } else if (type == "optimal_sd") {
            Obj o(e, path);
            o.str("type");
            const std::string name = o.str("name", "optimal_sd");
            const auto order = parse_ordering(o.str("ordering", "min_coefficient"));
            if (m.s() == 0) throw ConfigError(path + ": optimal_sd needs at least one spike; use optimal");
            const auto opt = optimal_pred_rule(g);
            out.push_back(sd_estimator(name, synthesize_sd_params(opt.rule, order),
                                       limiting_pred_risk(g, opt.rule.to_shrinkage()).total));
        } else if (type == "sd") {
            Obj o(e, path);
            o.str("type");
            const std::string name = o.str("name", "sd");
            const SDParams p{o.nums("lambdas"), o.nums("xis")};
            const auto f = sd_chain_fn(p);
            check_admissible(m, f);
            out.push_back(sd_estimator(name, p, limiting_pred_risk(g, f).total));
        } else if (type == "min_norm") {
            Obj o(e, path);
            o.str("type");
            const std::string name = o.str("name", "min_norm");
            out.push_back(pcr_estimator(name, rank, limiting_pred_risk(g, min_norm_surrogate(m)).total));
        } else if (type == "ridge" || type == "tuned_ridge" || type == "gd" || type == "optimal") {
            for (auto& r : parse_rule(e, path, g))
                out.push_back(shrinkage_estimator(r.name, r.fn, limiting_pred_risk(g, r.fn).total));
        } else {
            throw ConfigError(path + ".type: '" + type +
                              "' cannot be simulated (use ridge, tuned_ridge, gd, optimal, optimal_sd, sd, "
                              "pcr_components or min_norm)");
        }
    }
    return out;
}

// ---------------------------------------------------------------- commands

struct Context {
    json config;
    SpikedModel model;
    std::optional<std::uint64_t> seed;
};

const json& block(const Context& ctx, const std::string& name, bool required) {
    static const json empty = json::object();
    if (ctx.config.contains(name)) return ctx.config.at(name);
    if (required) throw ConfigError("config needs a '" + name + "' block");
    return empty;
}

Output cmd_measure(const Context& ctx) {
    Obj o(block(ctx, "measure", false), "measure");
    const long long points = o.integer("points", 200);
    if (points < 1 || points > 1000000) throw ConfigError("measure.points must lie in [1, 1e6]");
    o.finish();
    const auto& m = ctx.model;
    auto [a, b] = mp_support(m);
    std::vector<SpectralMeasure> measures{mp_measure(m)};
    Table grid{"density", {"x", "f_mp"}, {}};
    for (std::size_t j = 0; j < m.s(); ++j) {
        measures.push_back(spiked_measure(m, m.spikes[j].delta));
        grid.cols.push_back("f_delta_" + std::to_string(j + 1));
    }
    for (long long k = 0; k < points; ++k) {
        const double x = a + (b - a) * (static_cast<double>(k) + 0.5) / static_cast<double>(points);
        std::vector<Cell> row{x};
        for (const auto& F : measures) row.emplace_back(F.bulk_density(x));
        grid.add(std::move(row));
    }
    Table atoms{"atoms", {"measure", "location", "mass"}, {}};
    for (std::size_t i = 0; i < measures.size(); ++i)
        for (const auto& at : measures[i].atoms())
            atoms.add({i == 0 ? std::string("mp") : "delta_" + std::to_string(i), at.location, at.mass});
    return {{grid, atoms}, std::nullopt};
}

Output cmd_risk(const Context& ctx) {
    Obj o(block(ctx, "risk", true), "risk");
    const ModelGrid g(ctx.model);
    const auto rules = parse_rules(o.raw("rules"), "risk.rules", g);
    o.finish();
    const auto& m = ctx.model;
    Table t{"risk", {"rule", "parameter", "value", "pred_bias_bulk"}, {}};
    for (std::size_t j = 0; j < m.s(); ++j) t.cols.push_back("pred_bias_spike_" + std::to_string(j + 1));
    for (const char* c : {"pred_variance", "pred_total", "est_bias_bulk", "est_variance", "est_total"}) t.cols.push_back(c);
    std::vector<ShrinkageFn> fns;
    for (const auto& r : rules) fns.push_back(r.fn);
    // rules with kinks need their own split grid; the plain ones share one sweep
    std::vector<RiskBreakdown> pr(rules.size()), er(rules.size());
    std::vector<ShrinkageFn> smooth;
    std::vector<std::size_t> smooth_idx;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        if (rules[i].fn.breakpoints().empty()) {
            smooth.push_back(rules[i].fn);
            smooth_idx.push_back(i);
        } else {
            pr[i] = limiting_pred_risk(m, rules[i].fn);
            er[i] = limiting_est_risk(m, rules[i].fn);
        }
    }
    const auto ps = pred_risk_sweep(g, smooth), es = est_risk_sweep(g, smooth);
    for (std::size_t k = 0; k < smooth_idx.size(); ++k) {
        pr[smooth_idx[k]] = ps[k];
        er[smooth_idx[k]] = es[k];
    }
    for (std::size_t i = 0; i < rules.size(); ++i) {
        std::vector<Cell> row{rules[i].name, rules[i].param, rules[i].param.empty() ? Cell(std::string()) : Cell(rules[i].value),
                              pr[i].bias_bulk};
        for (double v : pr[i].bias_spikes) row.emplace_back(v);
        row.emplace_back(pr[i].variance);
        row.emplace_back(pr[i].total);
        row.emplace_back(er[i].bias_bulk);
        row.emplace_back(er[i].variance);
        row.emplace_back(er[i].total);
        t.add(std::move(row));
    }
    return {{t}, std::nullopt};
}

json optimal_doc(const ModelGrid& g, SdOrdering order) {
    const auto& m = g.model();
    json j;
    j["s"] = m.s();
    if (m.s() == 0) {
        const auto f = isotropic_optimal(m);
        j["ridge_lambda"] = std::get<Ridge>(f.rule).lambda;
        j["risks"] = {{"prediction", breakdown_json(limiting_pred_risk(g, f))},
                      {"estimation", breakdown_json(limiting_est_risk(g, f))}};
        return j;
    }
    const auto opt = optimal_pred_rule(g);
    const auto sd = synthesize_sd_params(opt.rule, order);
    const auto est = optimal_est_rule(g);
    const auto sd_est = synthesize_sd_params(est, order);
    j["b"] = vec_json(opt.coef.b);
    j["A"] = vec_json(opt.coef.A);
    j["rule"] = rule_json(opt.rule);
    j["sd_params"] = sd_json(sd);
    j["outliers"] = g.outliers();
    j["risks"] = {{"prediction", breakdown_json(limiting_pred_risk(g, opt.rule.to_shrinkage()))},
                  {"estimation_of_pred_rule", breakdown_json(limiting_est_risk(g, opt.rule.to_shrinkage()))}};
    j["estimation_rule"] = rule_json(est);
    j["estimation_rule"]["sd_params"] = sd_json(sd_est);
    j["estimation_rule"]["risk"] = breakdown_json(limiting_est_risk(g, est.to_shrinkage()));
    j["self_check"] = {{"round_trip_error", round_trip_error(g, opt.rule, sd)},
                       {"fixed_point_residual", fixed_point_residual(g, opt.rule.to_shrinkage())},
                       {"estimation_round_trip_error", round_trip_error(g, est, sd_est)},
                       {"coprime", coprimality_check(opt.rule)},
                       {"estimation_coprime", coprimality_check(est)}};
    return j;
}

Output cmd_optimal(const Context& ctx) {
    Obj o(block(ctx, "optimal", false), "optimal");
    const auto order = parse_ordering(o.str("ordering", "min_coefficient"));
    o.finish();
    return {{}, optimal_doc(ModelGrid(ctx.model), order)};
}

Output cmd_sd_params(const Context& ctx) {
    Obj o(block(ctx, "sd_params", false), "sd_params");
    const std::string target = o.str("target", "prediction");
    const auto order = parse_ordering(o.str("ordering", "min_coefficient"));
    const ModelGrid g(ctx.model);
    RationalRule rule;
    if (target == "prediction") {
        rule = optimal_pred_rule(g).rule;
    } else if (target == "estimation") {
        rule = optimal_est_rule(g);
    } else if (target == "rational") {
        rule.Q = Poly(o.nums("numerator"));
        rule.P = Poly(o.nums("denominator"));
        const std::size_t deg = rule.P.degree();
        const double lead = rule.P[deg];
        if (deg < 1 || lead == 0.0) throw ConfigError("sd_params.denominator needs degree >= 1");
        rule.P = rule.P * (1.0 / lead);
        rule.Q = rule.Q * (1.0 / lead);
        rule.scale = lead;
        Eigen::VectorXd coeffs(static_cast<Eigen::Index>(deg + 1));
        for (std::size_t k = 0; k <= deg; ++k) coeffs[static_cast<Eigen::Index>(k)] = rule.P[k];
        Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);
        for (Eigen::Index i = 0; i < solver.roots().size(); ++i) {
            const auto z = solver.roots()[i];
            if (std::abs(z.imag()) > 1e-9 * std::max(1.0, std::abs(z)))
                throw ConfigError("sd_params.denominator must have real roots only");
            rule.roots.push_back(z.real());
        }
        std::sort(rule.roots.begin(), rule.roots.end());
    } else {
        throw ConfigError("sd_params.target must be prediction, estimation or rational");
    }
    o.finish();
    const auto p = synthesize_sd_params(rule, order);
    json j;
    j["target"] = target;
    j["sd_params"] = sd_json(p);
    j["steps"] = p.steps();
    j["round_trip_error"] = round_trip_error(g, rule, p);
    j["coprime"] = coprimality_check(rule);
    return {{}, j};
}

json federated_doc(const ModelGrid& g, int K, SdOrdering order) {
    const auto& m = g.model();
    const auto fo = federated_optimum(g, K, order);
    const auto f = fo.local_rule.to_shrinkage();
    const auto rules = std::vector<ShrinkageFn>(static_cast<std::size_t>(K), f);
    const auto rhos = std::vector<double>(static_cast<std::size_t>(K), fo.rho_star);
    json j;
    j["K"] = K;
    j["b"] = vec_json(fo.b);
    j["rho_star"] = fo.rho_star;
    j["rule"] = rule_json(fo.fK);
    j["local_rule"] = rule_json(fo.local_rule);
    j["sd_params"] = sd_json(fo.sd_params);
    j["risks"] = {{"federated", federated_risk(g, rules, rhos)}};
    if (m.s() > 0) j["risks"]["single_client_optimum"] = limiting_pred_risk(g, optimal_pred_rule(g).rule.to_shrinkage()).total;
    j["self_check"] = {{"round_trip_error", round_trip_error(g, fo.local_rule, fo.sd_params)},
                       {"coprime", coprimality_check(fo.local_rule)}};
    return j;
}

Output cmd_federated(const Context& ctx) {
    Obj o(block(ctx, "federated", true), "federated");
    const auto Ks = parse_values(o.raw("K"), "federated.K");
    const auto order = parse_ordering(o.str("ordering", "min_coefficient"));
    o.finish();
    if (ctx.model.s() == 0) throw ConfigError("federated optimum needs at least one spike");
    const ModelGrid g(ctx.model);
    json arr = json::array();
    for (double k : Ks) {
        if (k < 1 || k != std::floor(k) || k > 1e6) throw ConfigError("federated.K must hold integers >= 1");
        arr.push_back(federated_doc(g, static_cast<int>(k), order));
    }
    return {{}, Ks.size() == 1 ? arr[0] : arr};
}

void simulate_row(const SimConfig& cfg, const std::vector<SpectralEstimator>& est, Table& t,
                  const std::vector<Cell>& prefix, bool wide) {
    const auto reps = converge_harness(cfg, est);
    if (wide) {
        std::vector<Cell> row = prefix;
        for (const auto& r : reps) {
            row.emplace_back(r.limit);
            row.emplace_back(r.mean);
            row.emplace_back(r.std_error);
        }
        t.add(std::move(row));
        return;
    }
    for (const auto& r : reps) {
        std::vector<Cell> row = prefix;
        for (Cell c : std::vector<Cell>{r.name, r.limit, r.mean, r.std_error, r.rel_gap, static_cast<long long>(r.samples.size())})
            row.push_back(std::move(c));
        t.add(std::move(row));
    }
}

Output cmd_simulate(const Context& ctx) {
    const auto spec = parse_sim(block(ctx, "simulate", true), "simulate", ctx.seed);
    const auto cfg = make_sim_config(spec, ctx.model);
    const ModelGrid g(ctx.model);
    const auto est = parse_estimators(spec, g);
    Table t{"simulate", {"estimator", "limit", "mean", "std_error", "rel_gap", "replicates"}, {}};
    simulate_row(cfg, est, t, {}, false);
    return {{t}, std::nullopt};
}

SpikedModel sweep_model(const SpikedModel& base, const std::string& param, std::size_t spike, double v) {
    SpikedModel m = base;
    if (param == "delta" || param == "alpha") {
        if (spike >= m.s()) throw ConfigError("sweep.spike is out of range");
        (param == "delta" ? m.spikes[spike].delta : m.spikes[spike].alpha) = v;
    } else if (param == "sigma_eps_sq") {
        m.sigma_eps_sq = v;
    } else if (param == "c") {
        m.c = v;
    } else if (param == "r") {
        m.r = v;
    } else if (param == "sigma0_sq") {
        m.sigma0_sq = v;
    } else {
        throw ConfigError("sweep.parameter must be delta, alpha, sigma_eps_sq, c, r or sigma0_sq");
    }
    m.validate();
    return m;
}

Output cmd_sweep(const Context& ctx) {
    Obj o(block(ctx, "sweep", true), "sweep");
    const std::string param = o.str("parameter");
    const auto spike = static_cast<std::size_t>(o.integer("spike", 0));
    const auto values = parse_values(o.raw("values"), "sweep.values");
    const std::string mode = o.str("mode", "risk");
    const auto order = parse_ordering(o.str("ordering", "min_coefficient"));
    const auto& base = ctx.model;
    Table t{"sweep", {param}, {}};

    if (mode == "sd_params") {
        o.finish();
        const std::size_t s = base.s();
        if (s == 0) throw ConfigError("sweep mode sd_params needs at least one spike");
        for (std::size_t j = 0; j < s; ++j) t.cols.push_back("x_star_" + std::to_string(j + 1));
        for (std::size_t j = 0; j <= s; ++j) t.cols.push_back("lambda_" + std::to_string(j));
        for (std::size_t j = 1; j <= s; ++j) t.cols.push_back("xi_" + std::to_string(j));
        for (const char* c : {"b0", "pred_total", "round_trip_error"}) t.cols.push_back(c);
        std::vector<std::vector<Cell>> rows(values.size());
        for_each_index(static_cast<int>(values.size()), Exec::Parallel, [&](int i) {
            const ModelGrid g(sweep_model(base, param, spike, values[static_cast<std::size_t>(i)]));
            const auto opt = optimal_pred_rule(g);
            const auto p = synthesize_sd_params(opt.rule, order);
            std::vector<Cell> row{values[static_cast<std::size_t>(i)]};
            for (double x : g.outliers()) row.emplace_back(x);
            for (double l : p.lambdas) row.emplace_back(l);
            for (double xi : p.xis) row.emplace_back(xi);
            row.emplace_back(opt.coef.b[0]);
            row.emplace_back(limiting_pred_risk(g, opt.rule.to_shrinkage()).total);
            row.emplace_back(round_trip_error(g, opt.rule, p));
            rows[static_cast<std::size_t>(i)] = std::move(row);
        });
        for (auto& r : rows) t.add(std::move(r));
    } else if (mode == "risk") {
        const json rules_spec = o.raw("rules");
        o.finish();
        std::vector<std::vector<Cell>> rows(values.size());
        std::vector<std::vector<std::string>> names(values.size());
        for_each_index(static_cast<int>(values.size()), Exec::Parallel, [&](int i) {
            const auto m = sweep_model(base, param, spike, values[static_cast<std::size_t>(i)]);
            const ModelGrid g(m);
            const auto rules = parse_rules(rules_spec, "sweep.rules", g);
            std::vector<Cell> row{values[static_cast<std::size_t>(i)]};
            for (const auto& r : rules) {
                names[static_cast<std::size_t>(i)].push_back(r.name);
                row.emplace_back(limiting_pred_risk(m, r.fn).total);
                row.emplace_back(limiting_est_risk(m, r.fn).total);
            }
            rows[static_cast<std::size_t>(i)] = std::move(row);
        });
        for (const auto& n : names)
            if (n.size() != names[0].size()) throw ConfigError("sweep.rules must expand to the same count at every value");
        // rule names can depend on the swept model (tuned lambdas are not in the name), so take the first row's
        for (const auto& n : names[0]) {
            t.cols.push_back(n + "_pred");
            t.cols.push_back(n + "_est");
        }
        for (auto& r : rows) t.add(std::move(r));
    } else if (mode == "simulate") {
        const auto spec = parse_sim(o.raw("simulate"), "sweep.simulate", ctx.seed);
        o.finish();
        if (param == "c") throw ConfigError("sweep.parameter c cannot be simulated at fixed n and p");
        bool first = true;
        for (double v : values) {
            const auto m = sweep_model(base, param, spike, v);
            const ModelGrid g(m);
            const auto est = parse_estimators(spec, g);
            if (first) {
                for (const auto& e : est)
                    for (const char* suf : {"_limit", "_mean", "_se"}) t.cols.push_back(e.name + suf);
                first = false;
            }
            simulate_row(make_sim_config(spec, m), est, t, {v}, true);
        }
    } else {
        throw ConfigError("sweep.mode must be risk, sd_params or simulate");
    }
    return {{t}, std::nullopt};
}

// ---------------------------------------------------------------- main

int run(int argc, char** argv) {
    CLI::App app{"Limiting risks, optimal spectral shrinkage and self-distillation parameters under spiked covariance"};
    app.require_subcommand(1);
    std::string config_path, out_path, format;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    struct Cmd {
        const char* name;
        const char* help;
        Output (*fn)(const Context&);
        const char* default_format;
    };
    const std::vector<Cmd> cmds{
        {"measure", "tabulate the MP and one-spike densities and their atoms", cmd_measure, "csv"},
        {"risk", "limiting prediction and estimation risks of shrinkage rules", cmd_risk, "csv"},
        {"optimal", "optimal prediction and estimation rules with SD parameters", cmd_optimal, "json"},
        {"sd-params", "SD parameters realizing a rational rule", cmd_sd_params, "json"},
        {"federated", "K-client optimum, aggregation weight and local SD parameters", cmd_federated, "json"},
        {"simulate", "Monte Carlo risks against their limits", cmd_simulate, "csv"},
        {"sweep", "limits, SD parameters or simulations over a model parameter", cmd_sweep, "csv"},
    };
    std::map<std::string, const Cmd*> by_name;
    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_path, "output file (default stdout)");
        sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--threads", threads, "worker threads (default: OpenMP default)")->check(CLI::NonNegativeNumber);
        sub->add_option("--seed", seed, "override the simulation seed");
        by_name[c.name] = &c;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    const Cmd& cmd = *by_name.at(app.get_subcommands().front()->get_name());
    if (format.empty()) format = cmd.default_format;
    set_threads(threads);

    Context ctx;
    std::ifstream in(config_path);
    try {
        ctx.config = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!ctx.config.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known{"model", "measure", "risk", "optimal", "sd_params", "federated", "simulate", "sweep"};
    for (auto it = ctx.config.begin(); it != ctx.config.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown key " + it.key());
    if (!ctx.config.contains("model")) throw ConfigError("config needs a 'model' block");
    ctx.model = parse_model(ctx.config.at("model"));
    ctx.seed = seed;

    json resolved = ctx.config;
    resolved["_command"] = cmd.name;
    resolved["_nodes"] = default_nodes();
    if (seed) resolved["_seed_override"] = *seed;
    const std::string hash = hex64(fnv1a64(resolved.dump()));

    const Output out = cmd.fn(ctx);
    const std::string text = render(out, format, cmd.name, hash);
    if (out_path.empty()) std::cout << text << std::flush;
    else write_atomic(out_path, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const AssumptionError& e) {
        std::cerr << "assumption violated: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
