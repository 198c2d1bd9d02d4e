#include "sdshrink/federated.hpp"

#include <cmath>

namespace sdshrink {

Eigen::VectorXd federated_coefficients(const ModelGrid& g, int K) {
    if (K < 1) throw ConfigError("number of clients K must be >= 1");
    const auto& m = g.model();
    if (!(m.sigma_eps_sq > 0.0)) throw ConfigError("optimal rules need sigma_eps_sq > 0");
    const auto gs = gram_system(g);
    const double s2 = m.sigma0_sq;
    Eigen::VectorXd d(gs.gamma.size());
    d[0] = s2 * m.r * m.r * g.omega().omega0 * (K - 1);
    for (std::size_t j = 0; j < m.s(); ++j) {
        const auto& sp = m.spikes[j];
        d[static_cast<Eigen::Index>(j + 1)] = ((K - 1) * s2 + K * sp.delta) * sp.alpha * sp.alpha;
    }
    return solve_coefficients(gs, d);
}

FederatedOptimum federated_optimum(const ModelGrid& g, int K, SdOrdering order) {
    const auto& m = g.model();
    FederatedOptimum out;
    out.K = K;
    out.b = federated_coefficients(g, K);
    const auto gs = gram_system(g);
    if (std::abs(out.b[0]) < 1e-10 * gs.gamma.norm())
        throw AssumptionError("b0^(K) is zero for this model and K; the aggregation weight is undefined "
                              "(requires b0^(K) != 0)");
    out.fK = assemble_rule(g, out.b);
    out.rho_star = out.b[0] / (m.sigma0_sq * m.r * m.r * g.omega().omega0);
    out.local_rule = out.fK;
    out.local_rule.Q = out.fK.Q * (1.0 / out.rho_star);
    out.local_rule.scale = out.fK.scale * out.rho_star;
    out.sd_params = synthesize_sd_params(out.local_rule, order);
    return out;
}

FederatedOptimum federated_optimum(const SpikedModel& m, int K, SdOrdering order) {
    return federated_optimum(ModelGrid(m), K, order);
}

double b0_noise_limit(const SpikedModel& m) {
    return m.sigma0_sq * m.r * m.r * mixture_weights(m).omega0;
}

double b0_at_noise(const SpikedModel& m, int K, double sigma_eps_sq) {
    return federated_coefficients(ModelGrid(m.with_noise(sigma_eps_sq)), K)[0];
}

namespace {

struct Moments {
    double mp = 0.0;
    std::vector<double> spike;
};

Moments integrate_rule(const ModelGrid& g, const ShrinkageFn& f) {
    check_admissible(g.model(), f);
    const Eigen::VectorXd fx = g.tabulate([&](double x) { return f(x); });
    Moments out;
    out.mp = g.w_mp().dot(fx);
    for (std::size_t j = 0; j < g.s(); ++j) out.spike.push_back(g.w_spike(j).dot(fx));
    return out;
}

}  // namespace

double product_form_limit(const SpikedModel& m, const ShrinkageFn& phi, const ShrinkageFn& psi, double c_l,
                          double c_k) {
    const ModelGrid gl(m.with_c(c_l)), gk(m.with_c(c_k));
    const auto a = integrate_rule(gl, phi);
    const auto b = integrate_rule(gk, psi);
    const auto om = mixture_weights(m);
    double out = om.omega0 * a.mp * b.mp;
    for (std::size_t j = 0; j < m.s(); ++j) out += om.omegas[j] * a.spike[j] * b.spike[j];
    return out;
}

double federated_risk(const ModelGrid& g, const std::vector<ShrinkageFn>& rules, const std::vector<double>& rhos) {
    if (rules.empty() || rules.size() != rhos.size())
        throw ConfigError("federated_risk needs one weight per client rule");
    const auto& m = g.model();
    const std::size_t K = rules.size(), s = m.s();
    const double s2r2 = m.sigma0_sq * m.r * m.r;
    const auto& x = g.x();

    // G_l = x rho_l f_l - 1/K
    std::vector<Eigen::ArrayXd> G(K);
    double total = 0.0;
    Eigen::MatrixXd mom(K, s + 1);  // column 0: int G dF_MP, column j: int G dF_delta_j
    for (std::size_t l = 0; l < K; ++l) {
        check_admissible(m, rules[l]);
        Eigen::ArrayXd xq(x.size()), xqq(x.size());
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            if (x[k] == 0.0) {
                xq[k] = xqq[k] = 0.0;
                continue;
            }
            const double q = rhos[l] * rules[l](x[k]);
            xq[k] = x[k] * q;
            xqq[k] = x[k] * q * q;
        }
        G[l] = xq - 1.0 / static_cast<double>(K);
        total += s2r2 * (g.w_alpha().array() * G[l].square()).sum();
        total += m.c * m.sigma0_sq * m.sigma_eps_sq * (g.w_mp().array() * xqq).sum();
        mom(static_cast<Eigen::Index>(l), 0) = (g.w_mp().array() * G[l]).sum();
        for (std::size_t j = 0; j < s; ++j)
            mom(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j + 1)) = (g.w_spike(j).array() * G[l]).sum();
    }
    const auto& om = g.omega();
    for (std::size_t l = 0; l < K; ++l)
        for (std::size_t k = 0; k < K; ++k) {
            if (l == k) continue;
            const auto L = static_cast<Eigen::Index>(l), Kk = static_cast<Eigen::Index>(k);
            double cross = om.omega0 * mom(L, 0) * mom(Kk, 0);
            for (std::size_t j = 0; j < s; ++j) {
                const auto J = static_cast<Eigen::Index>(j + 1);
                cross += om.omegas[j] * mom(L, J) * mom(Kk, J);
            }
            total += s2r2 * cross;
        }
    for (std::size_t j = 0; j < s; ++j) {
        const double sum = mom.col(static_cast<Eigen::Index>(j + 1)).sum();
        total += m.spikes[j].delta * m.spikes[j].alpha * m.spikes[j].alpha * sum * sum;
    }
    if (!std::isfinite(total)) throw NumericalError("federated risk is not finite");
    return total;
}

double federated_risk(const SpikedModel& m, const std::vector<ShrinkageFn>& rules, const std::vector<double>& rhos) {
    return federated_risk(ModelGrid(m), rules, rhos);
}

}  // namespace sdshrink
