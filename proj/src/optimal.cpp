#include "sdshrink/optimal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include <boost/math/tools/roots.hpp>
#include <unsupported/Eigen/Polynomials>

namespace sdshrink {

namespace {

double coeff(const Poly& p, std::size_t k) { return k < p.size() ? p[k] : 0.0; }

double lead(const Poly& p) {
    for (std::size_t k = p.size(); k-- > 0;)
        if (p[k] != 0.0) return p[k];
    return 0.0;
}

std::size_t degree_of(const Poly& p) {
    for (std::size_t k = p.size(); k-- > 0;)
        if (p[k] != 0.0) return k;
    return 0;
}

std::complex<double> horner(const Poly& p, std::complex<double> z) {
    std::complex<double> acc = 0.0;
    for (std::size_t k = p.size(); k-- > 0;) acc = acc * z + p[k];
    return acc;
}

double derivative_at(const Poly& p, double x) {
    double acc = 0.0;
    for (std::size_t k = p.size(); k-- > 1;) acc = acc * x + static_cast<double>(k) * p[k];
    return acc;
}

void require_noise(const SpikedModel& m) {
    if (!(m.sigma_eps_sq > 0.0)) throw ConfigError("optimal rules need sigma_eps_sq > 0");
}

double find_root(const Poly& P, double lo, double hi) {
    auto f = [&](double x) { return P(x); };
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0) throw NumericalError("denominator root bracket has no sign change");
    std::uintmax_t iters = 200;
    auto tol = boost::math::tools::eps_tolerance<double>(52);
    auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    double x = 0.5 * (a + b);
    // one Newton step, kept only if it helps
    const double d = derivative_at(P, x);
    if (d != 0.0) {
        const double y = x - P(x) / d;
        if (y > lo && y < hi && std::abs(P(y)) < std::abs(P(x))) x = y;
    }
    return x;
}

// t_k for the nested representation f = sum_k t_k x^{d-k} / prod_{m>=k} (x - gamma_m)
std::vector<double> nested_weights(const Poly& Q, const std::vector<double>& gam) {
    const std::size_t d = gam.size() - 1;
    std::vector<double> t(d + 1);
    for (std::size_t k = 0; k <= d; ++k) {
        const double gk = gam[k];
        double r = Q(gk), prod = 1.0;
        for (std::size_t i = 0; i < k; ++i) {
            r -= t[i] * std::pow(gk, static_cast<double>(d - i)) * prod;
            prod *= gk - gam[i];
        }
        t[k] = r / (std::pow(gk, static_cast<double>(d - k)) * prod);
    }
    return t;
}

bool admissible(const std::vector<double>& t) {
    double scale = 1.0, s = 0.0;
    for (double v : t) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        s += t[i];
        if (std::abs(s) <= 1e-12 * scale || !std::isfinite(s)) return false;
    }
    return true;
}

double max_abs(const std::vector<double>& t) {
    double m = 0.0;
    for (double v : t) m = std::max(m, std::abs(v));
    return m;
}

std::vector<double> order_min_coefficient(const Poly& Q, std::vector<double> roots) {
    std::sort(roots.begin(), roots.end());
    std::vector<double> best;
    double best_val = std::numeric_limits<double>::infinity();
    do {
        auto t = nested_weights(Q, roots);
        if (!admissible(t)) continue;
        const double v = max_abs(t);
        if (v < best_val) {
            best_val = v;
            best = roots;
        }
    } while (std::next_permutation(roots.begin(), roots.end()));
    if (best.empty()) throw NumericalError("no root ordering gives nonzero partial sums");
    return best;
}

std::vector<double> order_max_residual(const Poly& Q, const std::vector<double>& roots) {
    const std::size_t d = roots.size() - 1;
    std::vector<double> chosen, t;
    std::vector<bool> used(roots.size(), false);
    double partial = 0.0;
    for (std::size_t k = 0; k <= d; ++k) {
        std::size_t pick = roots.size();
        double best_r = -1.0, best_t = 0.0;
        for (std::size_t c = 0; c < roots.size(); ++c) {
            if (used[c]) continue;
            const double gk = roots[c];
            double r = Q(gk), prod = 1.0;
            for (std::size_t i = 0; i < k; ++i) {
                r -= t[i] * std::pow(gk, static_cast<double>(d - i)) * prod;
                prod *= gk - chosen[i];
            }
            const double tk = r / (std::pow(gk, static_cast<double>(d - k)) * prod);
            const bool ok = (k == d) || std::abs(partial + tk) > 1e-12 * std::max(1.0, std::abs(tk));
            if (ok && std::abs(r) > best_r) {
                best_r = std::abs(r);
                pick = c;
                best_t = tk;
            }
        }
        if (pick == roots.size()) throw NumericalError("no admissible next root for the SD chain");
        used[pick] = true;
        chosen.push_back(roots[pick]);
        t.push_back(best_t);
        partial += best_t;
    }
    return chosen;
}

}  // namespace

std::vector<double> denominator_roots(const ModelGrid& g, const Poly& P) {
    std::vector<double> xs = g.outliers();
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
        if (xs[i + 1] - xs[i] <= 1e-9 * xs[i + 1])
            throw NumericalError("two outlier locations coincide; the root structure is degenerate");
    std::vector<double> roots;
    // negative root
    double lo = -1.0;
    for (int it = 0; it < 200 && P(lo) * P(0.0) > 0.0; ++it) lo *= 2.0;
    roots.push_back(find_root(P, lo, 0.0));
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) roots.push_back(find_root(P, xs[i], xs[i + 1]));
    if (!xs.empty()) {
        const double base = xs.back();
        double hi = 2.0 * base;
        for (int it = 0; it < 200 && P(hi) * P(base) > 0.0; ++it) hi *= 2.0;
        roots.push_back(find_root(P, base, hi));
    }
    if (roots.size() != degree_of(P)) throw NumericalError("denominator root count does not match its degree");
    std::sort(roots.begin(), roots.end());
    return roots;
}

RationalRule assemble_rule(const ModelGrid& g, const Eigen::VectorXd& b) {
    const auto& m = g.model();
    const auto& rn = g.rn();
    const double s2 = m.sigma0_sq;
    Poly Q0 = rn.nu * b[0];
    for (std::size_t j = 0; j < m.s(); ++j) Q0 += rn.nu_minus[j] * b[static_cast<Eigen::Index>(j + 1)];
    Poly P0 = rn.D * Poly{{0.0, s2 * m.r * m.r}} + rn.nu * (m.c * s2 * m.sigma_eps_sq);
    RationalRule rule;
    rule.scale = lead(P0);
    if (rule.scale == 0.0) throw NumericalError("denominator polynomial vanishes");
    rule.P = P0 * (1.0 / rule.scale);
    rule.Q = Q0 * (1.0 / rule.scale);
    rule.roots = denominator_roots(g, rule.P);
    return rule;
}

Eigen::VectorXd solve_coefficients(const GramSystem& gs, const Eigen::VectorXd& d) {
    const Eigen::Index n = gs.gamma.size();
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) + d.asDiagonal() * gs.H;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    Eigen::VectorXd b = lu.solve(gs.gamma);
    if (!b.allFinite()) throw NumericalError("coefficient system (I + DH) b = gamma is singular");
    return b;
}

PredOptimum optimal_pred_rule(const ModelGrid& g) {
    const auto& m = g.model();
    require_noise(m);
    const auto gs = gram_system(g);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(gs.gamma.size());
    for (std::size_t j = 0; j < m.s(); ++j)
        d[static_cast<Eigen::Index>(j + 1)] = m.spikes[j].delta * m.spikes[j].alpha * m.spikes[j].alpha;
    PredOptimum out;
    out.coef.b = solve_coefficients(gs, d);
    const Eigen::VectorXd Hb = gs.H * out.coef.b;
    out.coef.A = Hb.tail(static_cast<Eigen::Index>(m.s()));
    out.rule = assemble_rule(g, out.coef.b);
    return out;
}

PredOptimum optimal_pred_rule(const SpikedModel& m) { return optimal_pred_rule(ModelGrid(m)); }

RationalRule optimal_est_rule(const ModelGrid& g) {
    const auto& m = g.model();
    require_noise(m);
    const auto& rn = g.rn();
    const double s2 = m.sigma0_sq, r2 = m.r * m.r;
    Poly P0 = rn.D * Poly{{0.0, s2 * r2}} + rn.nu * (m.c * s2 * m.sigma_eps_sq);
    RationalRule rule;
    rule.scale = lead(P0);
    rule.P = P0 * (1.0 / rule.scale);
    rule.Q = rn.D * (s2 * r2 / rule.scale);
    rule.roots = denominator_roots(g, rule.P);
    return rule;
}

RationalRule optimal_est_rule(const SpikedModel& m) { return optimal_est_rule(ModelGrid(m)); }

ShrinkageFn isotropic_optimal(const SpikedModel& m) {
    if (m.s() != 0) throw ConfigError("isotropic optimum needs a model without spikes");
    return ridge(m.c * m.sigma_eps_sq / (m.r * m.r));
}

double fixed_point_residual(const ModelGrid& g, const ShrinkageFn& f) {
    const auto& m = g.model();
    const std::size_t s = m.s();
    const Eigen::VectorXd fx = g.tabulate([&](double x) { return f(x); });
    Eigen::VectorXd Af = fx;
    for (std::size_t j = 0; j < s; ++j) {
        const Eigen::VectorXd hj = g.h().col(static_cast<Eigen::Index>(j + 1));
        const double dj = m.spikes[j].delta * m.spikes[j].alpha * m.spikes[j].alpha;
        Af += dj * inner_w(g, fx, hj) * hj;
    }
    double worst = 0.0;
    const double s2r2 = m.sigma0_sq * m.r * m.r;
    for (Eigen::Index k = 0; k < fx.size(); ++k) {
        double num = s2r2;
        for (std::size_t j = 0; j < s; ++j)
            num += m.spikes[j].delta * m.spikes[j].alpha * m.spikes[j].alpha * g.mu()(k, static_cast<Eigen::Index>(j + 1));
        worst = std::max(worst, std::abs(Af[k] - num / g.w()[k]));
    }
    return worst;
}

SDParams synthesize_sd_params(const RationalRule& rule, SdOrdering order) {
    const std::size_t d = rule.roots.size() - 1;
    if (rule.roots.empty()) throw ConfigError("SD synthesis needs at least one denominator root");
    if (degree_of(rule.Q) > d) throw ConfigError("numerator degree exceeds the SD chain length");
    if (std::abs(coeff(rule.Q, d) - 1.0) > 1e-8)
        throw ConfigError("an SD chain needs the x^s coefficient of Q to equal that of P");
    for (double g : rule.roots)
        if (g == 0.0) throw ConfigError("a zero denominator root cannot be an SD stage");

    std::vector<double> gam;
    if (order == SdOrdering::MinCoefficient && rule.roots.size() <= 8) gam = order_min_coefficient(rule.Q, rule.roots);
    else gam = order_max_residual(rule.Q, rule.roots);

    const auto t = nested_weights(rule.Q, gam);
    std::vector<double> S(d + 1);
    std::partial_sum(t.begin(), t.end(), S.begin());
    if (std::abs(S[d] - 1.0) > 1e-8) throw NumericalError("SD weights do not sum to one");
    SDParams p;
    for (double g : gam) p.lambdas.push_back(-g);
    for (std::size_t i = 1; i <= d; ++i) p.xis.push_back(S[i - 1] / S[i]);
    return p;
}

double round_trip_error(const ModelGrid& g, const RationalRule& rule, const SDParams& params) {
    const ShrinkageFn sd = sd_chain_fn(params);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < g.x().size(); ++k) {
        const double x = g.x()[k];
        worst = std::max(worst, std::abs(sd(x) - rule(x)));
    }
    return worst;
}

bool coprimality_check(const RationalRule& rule) {
    const std::size_t dp = degree_of(rule.P);
    if (dp == 0) return true;
    Eigen::VectorXd coeffs(static_cast<Eigen::Index>(dp + 1));
    for (std::size_t i = 0; i <= dp; ++i) coeffs[static_cast<Eigen::Index>(i)] = rule.P[i];
    Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);
    for (Eigen::Index i = 0; i < solver.roots().size(); ++i) {
        const auto z = solver.roots()[i];
        double scale = 0.0;
        for (std::size_t k = 0; k < rule.Q.size(); ++k) scale += std::abs(rule.Q[k]) * std::pow(std::abs(z), k);
        if (scale == 0.0) return false;
        if (std::abs(horner(rule.Q, z)) / scale < 1e-8) return false;
    }
    return true;
}

}  // namespace sdshrink
