#include "sdshrink/shrinkage.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <unsupported/Eigen/Polynomials>

namespace sdshrink {

namespace {

double inv_or_zero(double d, double tol) { return (std::abs(d) <= tol) ? 0.0 : 1.0 / d; }

// C1 cubic smoothstep on [0, 1]
double smoothstep(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * (3.0 - 2.0 * u);
}

double gd_value(double eta, int T, double x) {
    const double ex = eta * x;
    if (std::abs(ex) < 1e-300) return eta * T;
    if (ex < 1.0) return -std::expm1(T * std::log1p(-ex)) / x;
    return (1.0 - std::pow(1.0 - ex, T)) / x;
}

struct Evaluator {
    double x;
    double tol;
    double operator()(const Ridge& r) const { return inv_or_zero(x + r.lambda, tol); }
    double operator()(const Rational& q) const {
        const double d = q.den(x);
        return (std::abs(d) <= tol || d == 0.0) ? 0.0 : q.num(x) / d;
    }
    double operator()(const SDChain& c) const {
        const auto& lam = c.params.lambdas;
        const auto& xi = c.params.xis;
        const std::size_t k = c.params.steps();
        double prod = 1.0, acc = 0.0;
        for (std::size_t j = k + 1; j-- > 0;) {
            const double inv = inv_or_zero(x + lam[j], tol);
            const double xij = (j == 0) ? 0.0 : xi[j - 1];
            acc += (1.0 - xij) * prod * inv;
            prod *= xij * x * inv;
        }
        return acc;
    }
    double operator()(const GDPoly& g) const { return gd_value(g.eta, g.steps, x); }
    double operator()(const PCRSurrogate& p) const {
        if (x <= 0.0) return 0.0;
        return smoothstep((x - (p.threshold - 0.5 * p.ramp_width)) / p.ramp_width) / x;
    }
    double operator()(const MinNormSurrogate& p) const {
        if (x <= 0.0) return 0.0;
        return smoothstep((x - p.cut) / p.ramp_width) / x;
    }
    double operator()(const Tabulated& t) const {
        if (t.x.empty()) return 0.0;
        if (x <= t.x.front()) return t.y.front();
        if (x >= t.x.back()) return t.y.back();
        auto it = std::upper_bound(t.x.begin(), t.x.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - t.x.begin());
        const double u = (x - t.x[i - 1]) / (t.x[i] - t.x[i - 1]);
        return (1.0 - u) * t.y[i - 1] + u * t.y[i];
    }
};

}  // namespace

double ShrinkageFn::operator()(double x) const { return eval_shrinkage(*this, x); }

double eval_shrinkage(const ShrinkageFn& f, double x, double pole_tol) {
    return std::visit(Evaluator{x, pole_tol}, f.rule);
}

std::vector<double> ShrinkageFn::breakpoints() const {
    if (auto p = std::get_if<PCRSurrogate>(&rule))
        return {p->threshold - 0.5 * p->ramp_width, p->threshold + 0.5 * p->ramp_width};
    if (auto p = std::get_if<MinNormSurrogate>(&rule)) return {p->cut, p->cut + p->ramp_width};
    if (auto p = std::get_if<Tabulated>(&rule)) return p->x;
    return {};
}

std::string ShrinkageFn::name() const {
    std::ostringstream os;
    os.precision(6);
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Ridge>) os << "ridge(" << v.lambda << ")";
            else if constexpr (std::is_same_v<T, Rational>) os << "rational(deg " << v.num.degree() << "/" << v.den.degree() << ")";
            else if constexpr (std::is_same_v<T, SDChain>) os << "sd(" << v.params.steps() << " steps)";
            else if constexpr (std::is_same_v<T, GDPoly>) os << "gd(" << v.eta << "," << v.steps << ")";
            else if constexpr (std::is_same_v<T, PCRSurrogate>) os << "pcr(" << v.threshold << ")";
            else if constexpr (std::is_same_v<T, MinNormSurrogate>) os << "min_norm";
            else os << "tabulated(" << v.x.size() << ")";
        },
        rule);
    return os.str();
}

ShrinkageFn ridge(double lambda) { return {Ridge{lambda}}; }
ShrinkageFn rational(Poly num, Poly den) { return {Rational{std::move(num), std::move(den)}}; }
ShrinkageFn gd_poly(double eta, int steps) {
    if (!(eta > 0.0) || steps < 1) throw ConfigError("gradient descent needs eta > 0 and steps >= 1");
    return {GDPoly{eta, steps}};
}
ShrinkageFn sd_chain_fn(const SDParams& p) {
    if (p.lambdas.empty() || p.xis.size() + 1 != p.lambdas.size())
        throw ConfigError("SD parameters need k+1 lambdas and k weights");
    return {SDChain{p}};
}
ShrinkageFn tabulated(std::vector<double> x, std::vector<double> y) {
    if (x.size() != y.size()) throw ConfigError("tabulated rule needs matching x and y");
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return x[i] < x[j]; });
    Tabulated t;
    for (auto i : idx) {
        t.x.push_back(x[i]);
        t.y.push_back(y[i]);
    }
    return {t};
}

double sd_recursion(const SDParams& p, double x, double pole_tol) {
    double f = inv_or_zero(x + p.lambdas[0], pole_tol);
    for (std::size_t t = 1; t < p.lambdas.size(); ++t) {
        const double xi = p.xis[t - 1];
        f = ((1.0 - xi) + xi * x * f) * inv_or_zero(x + p.lambdas[t], pole_tol);
    }
    return f;
}

namespace {

bool on_support(const SpikedModel& m, double x) {
    auto [a, b] = mp_support(m);
    if (x >= a && x <= b) return true;
    if (m.c > 1.0 && x == 0.0) return true;
    for (const auto& sp : m.spikes)
        if (outlier_atom_mass(m, sp.delta) > 0.0 &&
            std::abs(x - outlier_location(m, sp.delta)) <= 1e-12 * std::abs(x))
            return true;
    return false;
}

}  // namespace

void check_admissible(const SpikedModel& m, const ShrinkageFn& f) {
    auto bad = [&](const std::string& what) { throw ConfigError(f.name() + ": " + what); };
    if (auto r = std::get_if<Ridge>(&f.rule)) {
        if (on_support(m, -r->lambda)) bad("-lambda lies on the limiting support");
    } else if (auto c = std::get_if<SDChain>(&f.rule)) {
        for (double l : c->params.lambdas)
            if (on_support(m, -l)) bad("some -lambda_t lies on the limiting support");
    } else if (auto q = std::get_if<Rational>(&f.rule)) {
        if (q->den.size() == 0) bad("empty denominator");
        const auto& d = q->den.data();
        std::size_t deg = d.size() - 1;
        while (deg > 0 && d[deg] == 0.0) --deg;
        if (deg == 0) {
            if (d[0] == 0.0) bad("zero denominator");
            return;
        }
        Eigen::VectorXd coeffs(static_cast<Eigen::Index>(deg + 1));
        for (std::size_t i = 0; i <= deg; ++i) coeffs[static_cast<Eigen::Index>(i)] = d[i];
        Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);
        for (Eigen::Index i = 0; i < solver.roots().size(); ++i) {
            const auto z = solver.roots()[i];
            if (std::abs(z.imag()) <= 1e-10 * std::max(1.0, std::abs(z)) && on_support(m, z.real()))
                bad("denominator vanishes on the limiting support");
        }
        auto [a, b] = mp_support(m);
        if (q->den(a) * q->den(b) <= 0.0) bad("denominator changes sign across the bulk");
    }
}

RiskBreakdown limiting_pred_risk(const ModelGrid& g0, const ShrinkageFn& f) {
    const auto& m = g0.model();
    check_admissible(m, f);
    std::vector<double> inside;
    for (double x : f.breakpoints())
        if (x > g0.a() && x < g0.b()) inside.push_back(x);
    const ModelGrid refined = inside.empty() ? g0 : g0.with_breakpoints(inside);
    const ModelGrid& g = refined;

    const auto& x = g.x();
    Eigen::VectorXd xf(x.size()), xff(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (x[k] == 0.0) {
            xf[k] = 0.0;
            xff[k] = 0.0;
            continue;
        }
        const double fv = f(x[k]);
        xf[k] = x[k] * fv;
        xff[k] = x[k] * fv * fv;
    }
    const Eigen::ArrayXd one_minus = 1.0 - xf.array();
    RiskBreakdown out;
    const double s2 = m.sigma0_sq;
    out.bias_bulk = s2 * m.r * m.r * (g.w_alpha().array() * one_minus.square()).sum();
    for (std::size_t j = 0; j < m.s(); ++j) {
        const double mj = (g.w_spike(j).array() * one_minus).sum();
        out.bias_spikes.push_back(m.spikes[j].delta * m.spikes[j].alpha * m.spikes[j].alpha * mj * mj);
    }
    out.variance = m.c * s2 * m.sigma_eps_sq * (g.w_mp().array() * xff.array()).sum();
    out.total = out.bias_bulk + out.variance;
    for (double v : out.bias_spikes) out.total += v;
    if (!std::isfinite(out.total)) throw NumericalError("prediction risk integral is not finite");
    return out;
}

RiskBreakdown limiting_est_risk(const ModelGrid& g0, const ShrinkageFn& f) {
    const auto& m = g0.model();
    check_admissible(m, f);
    std::vector<double> inside;
    for (double x : f.breakpoints())
        if (x > g0.a() && x < g0.b()) inside.push_back(x);
    ModelGrid refined = inside.empty() ? g0 : g0.with_breakpoints(inside);
    const ModelGrid& g = refined;

    const auto& x = g.x();
    Eigen::ArrayXd om(x.size()), xff(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (x[k] == 0.0) {
            om[k] = 1.0;
            xff[k] = 0.0;
            continue;
        }
        const double fv = f(x[k]);
        om[k] = 1.0 - x[k] * fv;
        xff[k] = x[k] * fv * fv;
    }
    RiskBreakdown out;
    out.bias_bulk = m.r * m.r * (g.w_alpha().array() * om.square()).sum();
    out.bias_spikes.assign(m.s(), 0.0);
    out.variance = m.c * m.sigma_eps_sq * (g.w_mp().array() * xff).sum();
    out.total = out.bias_bulk + out.variance;
    if (!std::isfinite(out.total)) throw NumericalError("estimation risk integral is not finite");
    return out;
}

RiskBreakdown limiting_pred_risk(const SpikedModel& m, const ShrinkageFn& f) {
    return limiting_pred_risk(ModelGrid(m), f);
}

RiskBreakdown limiting_est_risk(const SpikedModel& m, const ShrinkageFn& f) {
    return limiting_est_risk(ModelGrid(m), f);
}

double tuned_ridge_lambda(const ModelGrid& g, RiskKind kind, double lo, double hi) {
    auto risk = [&](double log_l) {
        const auto f = ridge(std::exp(log_l));
        return kind == RiskKind::Prediction ? limiting_pred_risk(g, f).total : limiting_est_risk(g, f).total;
    };
    const int n = 200;
    const double l0 = std::log(lo), l1 = std::log(hi), step = (l1 - l0) / (n - 1);
    int best = 0;
    double best_val = risk(l0);
    for (int i = 1; i < n; ++i) {
        const double v = risk(l0 + i * step);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    const double a = l0 + std::max(0, best - 1) * step, b = l0 + std::min(n - 1, best + 1) * step;
    auto [x, fx] = boost::math::tools::brent_find_minima(risk, a, b, 40);
    return std::exp(fx <= best_val ? x : l0 + best * step);
}

double default_ramp_width(const SpikedModel& m) {
    auto [a, b] = mp_support(m);
    return 1e-3 * (b - a);
}

ShrinkageFn min_norm_surrogate(const SpikedModel& m, double eta_fraction) {
    if (m.c == 1.0) throw ConfigError("min-norm limiting risk is infinite at c = 1");
    if (!(eta_fraction > 0.0 && eta_fraction < 1.0)) throw ConfigError("eta fraction must lie in (0, 1)");
    auto [a, b] = mp_support(m);
    const double eta = eta_fraction * a;  // a = sigma0^2 (sqrt(c) - 1)^2
    return {MinNormSurrogate{0.5 * eta, 0.5 * eta}};
}

ShrinkageFn pcr_surrogate(const SpikedModel& m, double tau, double ramp_width) {
    const double top = std::min(1.0, 1.0 / m.c);
    if (!(tau > 0.0 && tau < top)) throw ConfigError("PCR fraction tau must lie in (0, min(1, 1/c))");
    if (ramp_width <= 0.0) ramp_width = default_ramp_width(m);
    return {PCRSurrogate{mp_quantile_inverse(m, tau), ramp_width}};
}

ShrinkageFn pcr_outlier_limit(const SpikedModel& m) {
    auto [a, b] = mp_support(m);
    double lowest = 2.0 * b + 1.0;
    for (const auto& sp : m.spikes)
        if (outlier_atom_mass(m, sp.delta) > 0.0) lowest = std::min(lowest, outlier_location(m, sp.delta));
    const double gap = lowest - b;
    const double w = std::min(default_ramp_width(m), 0.25 * gap);
    return {PCRSurrogate{b + 0.5 * gap, w}};
}

NamedSurrogates named_surrogates(const SpikedModel& m) {
    return {min_norm_surrogate(m), [m](double tau) { return pcr_surrogate(m, tau); }};
}

}  // namespace sdshrink
