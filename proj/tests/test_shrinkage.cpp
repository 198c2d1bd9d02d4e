#include <cmath>
#include <random>

#include "doctest.h"
#include "sdshrink/optimal.hpp"
#include "test_util.hpp"

using namespace sdshrink;

namespace {

// the recursion written out directly, as an oracle for both evaluators
double recursion_oracle(const SDParams& p, double x) {
    double f = 1.0 / (x + p.lambdas[0]);
    for (std::size_t t = 1; t < p.lambdas.size(); ++t)
        f = ((1.0 - p.xis[t - 1]) + p.xis[t - 1] * x * f) / (x + p.lambdas[t]);
    return f;
}

ShrinkageFn zero_rule() { return tabulated({0.0, 1e6}, {0.0, 0.0}); }

}  // namespace

TEST_CASE("evaluation of simple rules") {
    CHECK(ridge(0.5)(1.5) == doctest::Approx(0.5));
    CHECK(eval_shrinkage(ridge(-2.0), 2.0) == 0.0);
    for (double x : {0.0, 0.3, 1.0, 7.0}) {
        double sum = 0.0;
        for (int k = 0; k < 25; ++k) sum += 0.05 * std::pow(1.0 - 0.05 * x, k);
        CHECK(gd_poly(0.05, 25)(x) == doctest::Approx(sum).epsilon(1e-12));
    }
    CHECK(gd_poly(0.1, 1)(3.0) == doctest::Approx(0.1));
    CHECK_THROWS_AS(gd_poly(0.0, 3), ConfigError);

    const auto t = tabulated({2.0, 0.0, 1.0}, {4.0, 0.0, 1.0});
    CHECK(t(0.5) == doctest::Approx(0.5));
    CHECK(t(1.5) == doctest::Approx(2.5));
}

TEST_CASE("self-distillation chains") {
    SDParams zero{{0.7}, {}};
    for (double x : {0.1, 1.0, 5.0}) CHECK(sd_chain_fn(zero)(x) == doctest::Approx(ridge(0.7)(x)).epsilon(1e-15));

    SDParams k1{{0.4, 1.3}, {0.0}};
    SDParams k1b{{0.4, 1.3}, {1.0}};
    for (double x : {0.1, 1.0, 5.0}) {
        CHECK(sd_chain_fn(k1)(x) == doctest::Approx(1.0 / (x + 1.3)).epsilon(1e-14));
        CHECK(sd_chain_fn(k1b)(x) == doctest::Approx(x / ((x + 1.3) * (x + 0.4))).epsilon(1e-14));
    }

    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        SDParams p;
        const int k = 1 + trial % 3;
        for (int i = 0; i <= k; ++i) p.lambdas.push_back(testutil::uniform(rng, 0.1, 3.0) * (i % 2 ? -1.0 : 1.0) - (i % 2 ? 20.0 : 0.0));
        for (int i = 0; i < k; ++i) p.xis.push_back(testutil::uniform(rng, -2.0, 2.0));
        const auto f = sd_chain_fn(p);
        for (int i = 0; i < 50; ++i) {
            const double x = 0.05 + 10.0 * i / 50.0;
            const double ref = recursion_oracle(p, x);
            CHECK(std::abs(f(x) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
            CHECK(std::abs(sd_recursion(p, x) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
        }
    }
    CHECK_THROWS_AS(sd_chain_fn(SDParams{{1.0, 2.0}, {}}), ConfigError);
}

TEST_CASE("admissibility") {
    const auto m = testutil::one_spike_reference();
    CHECK_NOTHROW(check_admissible(m, ridge(0.3)));
    CHECK_THROWS_AS(check_admissible(m, ridge(-1.0)), ConfigError);       // pole in the bulk
    CHECK_THROWS_AS(check_admissible(m, ridge(0.0)), ConfigError);        // pole at the zero atom
    const double xs = outlier_location(m, 7.0);
    CHECK_THROWS_AS(check_admissible(m, ridge(-xs)), ConfigError);        // pole at the outlier
    CHECK_NOTHROW(check_admissible(m, ridge(-(xs + 1.0))));
    CHECK_THROWS_AS(check_admissible(m, rational(Poly{{1.0}}, Poly{{-2.0, 1.0}})), ConfigError);
}

TEST_CASE("risk of the zero rule") {
    for (const auto& m : {testutil::two_spike_reference(), testutil::one_spike_reference(), testutil::one_spike_reference(0.5)}) {
        const auto pr = limiting_pred_risk(m, zero_rule());
        double expect = m.sigma0_sq * m.r * m.r;
        for (const auto& sp : m.spikes) expect += sp.delta * sp.alpha * sp.alpha;
        CHECK(pr.total == doctest::Approx(expect).epsilon(1e-10));
        CHECK(pr.variance == 0.0);
        CHECK(limiting_est_risk(m, zero_rule()).total == doctest::Approx(m.r * m.r).epsilon(1e-10));
    }
}

TEST_CASE("risk decomposition adds up") {
    const ModelGrid g(testutil::two_spike_reference());
    for (const auto& f : {ridge(0.5), gd_poly(0.1, 30), optimal_pred_rule(g).rule.to_shrinkage()}) {
        const auto r = limiting_pred_risk(g, f);
        double sum = r.bias_bulk + r.variance;
        for (double v : r.bias_spikes) sum += v;
        CHECK(r.total == sum);
        const auto e = limiting_est_risk(g, f);
        CHECK(e.total == e.bias_bulk + e.variance);
    }
}

TEST_CASE("isotropic risk against the scalar quadratic") {
    SpikedModel m;
    m.c = 0.8;
    m.r = 1.7;
    m.sigma_eps_sq = 2.0;
    const auto q = make_quadrature(m);
    const auto F = mp_measure(m);
    for (double l : {0.1, 1.0, 3.0}) {
        const auto f = ridge(l);
        const double quad = m.r * m.r + F.integrate([&](double x) {
            return x * ((m.r * m.r * x + m.c * m.sigma_eps_sq) * f(x) * f(x) - 2 * m.r * m.r * f(x));
        }, q);
        CHECK(limiting_pred_risk(m, f).total == doctest::Approx(quad).epsilon(1e-12));
    }
}

TEST_CASE("isotropic ridge optimum") {
    SpikedModel m;
    m.c = 2.0;
    m.r = 2.0;
    m.sigma_eps_sq = 1.0;
    CHECK(std::get<Ridge>(isotropic_optimal(m).rule).lambda == doctest::Approx(0.5));
    const ModelGrid g(m);
    const double best = limiting_pred_risk(g, ridge(0.5)).total;
    CHECK(best <= limiting_pred_risk(g, ridge(0.55)).total);
    CHECK(best <= limiting_pred_risk(g, ridge(0.45)).total);
    CHECK(tuned_ridge_lambda(g) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(tuned_ridge_lambda(g, RiskKind::Estimation) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK_THROWS_AS(isotropic_optimal(testutil::one_spike_reference()), ConfigError);
}

TEST_CASE("scale covariance") {
    // risk(kappa sigma0^2, kappa delta, sigma_eps^2; ridge l) = kappa risk(sigma0^2, delta, sigma_eps^2/kappa; ridge l/kappa)
    const auto base = testutil::two_spike_reference();
    for (double kappa : {0.3, 2.5}) {
        auto scaled = base;
        scaled.sigma0_sq *= kappa;
        for (auto& sp : scaled.spikes) sp.delta *= kappa;
        const auto ref = base.with_noise(base.sigma_eps_sq / kappa);
        for (double l : {0.2, 1.5}) {
            CHECK(limiting_pred_risk(scaled, ridge(l)).total ==
                  doctest::Approx(kappa * limiting_pred_risk(ref, ridge(l / kappa)).total).epsilon(1e-8));
            CHECK(limiting_est_risk(scaled, ridge(l)).total ==
                  doctest::Approx(limiting_est_risk(ref, ridge(l / kappa)).total).epsilon(1e-8));
        }
    }
}

TEST_CASE("surrogates") {
    const auto m = testutil::one_spike_reference();
    CHECK_THROWS_AS(min_norm_surrogate(m.with_c(1.0)), ConfigError);
    CHECK_THROWS_AS(pcr_surrogate(m, 0.5), ConfigError);
    CHECK_THROWS_AS(pcr_surrogate(m, 0.0), ConfigError);

    const ModelGrid g(m);
    const double opt = limiting_pred_risk(g, optimal_pred_rule(g).rule.to_shrinkage()).total;
    CHECK(limiting_pred_risk(m, min_norm_surrogate(m)).total > opt);

    const auto named = named_surrogates(m);
    const double r3 = limiting_pred_risk(m, pcr_surrogate(m, 0.2, 1e-3)).total;
    const double r4 = limiting_pred_risk(m, pcr_surrogate(m, 0.2, 1e-4)).total;
    CHECK(std::abs(r3 - r4) < 1e-4);
    CHECK(limiting_pred_risk(m, named.pcr(0.2)).total == doctest::Approx(r4).epsilon(1e-3));

    // tiny tau keeps only the outlier
    const double tiny = limiting_pred_risk(m, pcr_surrogate(m, 1e-7)).total;
    CHECK(tiny == doctest::Approx(limiting_pred_risk(m, pcr_outlier_limit(m)).total).epsilon(1e-3));

    // min-norm: 1/x on the whole bulk, so changing eta inside the gap leaves the risk alone
    const auto m3 = m.with_c(3.0);
    CHECK(limiting_pred_risk(m3, min_norm_surrogate(m3, 0.3)).total ==
          doctest::Approx(limiting_pred_risk(m3, min_norm_surrogate(m3, 0.7)).total).epsilon(1e-12));
}
