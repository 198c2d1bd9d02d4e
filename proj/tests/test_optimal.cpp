#include <cmath>
#include <random>

#include "doctest.h"
#include "sdshrink/optimal.hpp"
#include "test_util.hpp"

using namespace sdshrink;

namespace {

std::size_t degree(const Poly& p) {
    std::size_t d = p.size() - 1;
    while (d > 0 && p[d] == 0.0) --d;
    return d;
}

}  // namespace

TEST_CASE("two-spike reference rule") {
    const auto m = testutil::two_spike_reference();
    const ModelGrid g(m);
    const auto opt = optimal_pred_rule(g);
    CHECK(opt.coef.b[0] == doctest::Approx(9.75).epsilon(1e-12));
    CHECK(degree(opt.rule.P) == 3);
    CHECK(degree(opt.rule.Q) == 2);
    CHECK(opt.rule.P[3] == 1.0);
    CHECK(opt.rule.Q[2] == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(opt.rule.roots.size() == 3);
    CHECK(opt.rule.roots[0] == doctest::Approx(-0.68264).epsilon(1e-4));
    CHECK(opt.rule.roots[1] == doctest::Approx(7.7988).epsilon(1e-4));
    CHECK(opt.rule.roots[2] == doctest::Approx(13.871).epsilon(1e-4));
    // Vieta: P(0) = -prod roots > 0
    CHECK(opt.rule.P[0] > 0.0);
    for (double r : opt.rule.roots) CHECK(std::abs(opt.rule.P(r)) < 1e-10);
    CHECK(fixed_point_residual(g, opt.rule.to_shrinkage()) < 1e-10);
}

TEST_CASE("weak spike approaches the isotropic ridge") {
    auto m = testutil::one_spike_reference();
    SpikedModel iso = m;
    iso.spikes.clear();
    const auto ridge_opt = isotropic_optimal(iso);
    double prev = 1e300;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        m.spikes = {{delta, 1.7}};
        const auto rule = optimal_pred_rule(m).rule;
        auto [a, b] = mp_support(m);
        double sup = 0.0;
        for (int k = 0; k <= 200; ++k) {
            const double x = a + (b - a) * k / 200.0;
            sup = std::max(sup, std::abs(rule(x) - ridge_opt(x)));
        }
        CHECK(sup < prev);
        prev = sup;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("estimation rule") {
    SpikedModel iso;
    iso.c = 1.3;
    iso.r = 2.0;
    iso.sigma_eps_sq = 3.0;
    const auto e = optimal_est_rule(iso);
    for (double x : {0.2, 1.0, 4.0}) CHECK(e(x) == doctest::Approx(1.0 / (x + 1.3 * 3.0 / 4.0)).epsilon(1e-12));

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = testutil::random_model(rng, 1 + trial % 3);
        const ModelGrid g(m);
        const auto est = optimal_est_rule(g);
        CHECK(coprimality_check(est));
        const double best = limiting_est_risk(g, est.to_shrinkage()).total;
        for (int i = 0; i < 200; ++i)
            CHECK(best <= limiting_est_risk(g, ridge(std::exp(std::log(1e-3) + i * std::log(1e6) / 199.0))).total);
        // same denominator as the prediction rule
        const auto pred = optimal_pred_rule(g).rule;
        for (std::size_t k = 0; k < pred.P.size(); ++k)
            CHECK(est.P[k] == doctest::Approx(pred.P[k]).epsilon(1e-12));
    }
}

TEST_CASE("coprimality") {
    RationalRule shared;
    shared.Q = Poly{{2.0, 1.0}};
    shared.P = Poly{{4.0, 4.0, 1.0}};
    shared.roots = {-2.0, -2.0};
    CHECK_FALSE(coprimality_check(shared));

    auto m = testutil::one_spike_reference();
    m.spikes = {{2 * m.c + 1.0, 1.7}};
    CHECK(coprimality_check(optimal_pred_rule(m.with_noise(400.0)).rule));
}

TEST_CASE("root structure and degeneracy") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = testutil::random_model(rng, 1 + trial % 3);
        const ModelGrid g(m);
        const auto rule = optimal_pred_rule(g).rule;
        auto xs = g.outliers();
        std::sort(xs.begin(), xs.end());
        CHECK(rule.roots[0] < 0.0);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            CHECK(rule.roots[i + 1] > xs[i]);
            if (i + 1 < xs.size()) CHECK(rule.roots[i + 1] < xs[i + 1]);
        }
    }
    SpikedModel bad;
    bad.c = 3.0;
    bad.r = 3.0;
    bad.spikes = {{1.0, 1.0}, {3.0, 1.0}};  // both outliers at 8
    CHECK_THROWS_AS(optimal_pred_rule(bad), ConfigError);
    CHECK_THROWS_AS(optimal_pred_rule(testutil::one_spike_reference().with_noise(0.0)), ConfigError);
}

TEST_CASE("SD synthesis") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 15; ++trial) {
        const auto m = testutil::random_model(rng, 1 + trial % 3);
        const ModelGrid g(m);
        const auto rule = optimal_pred_rule(g).rule;
        for (auto order : {SdOrdering::MinCoefficient, SdOrdering::MaxResidual}) {
            const auto p = synthesize_sd_params(rule, order);
            CHECK(p.steps() == m.s());
            INFO("model ", describe(m));
            // the greedy order can divide by small weights and loses a digit or two
            CHECK(round_trip_error(g, rule, p) < (order == SdOrdering::MinCoefficient ? 1e-9 : 1e-7));
            CHECK(std::count_if(p.lambdas.begin(), p.lambdas.end(), [](double l) { return l < 0.0; }) ==
                  static_cast<long>(m.s()));
            const double r1 = limiting_pred_risk(g, rule.to_shrinkage()).total;
            const double r2 = limiting_pred_risk(g, sd_chain_fn(p)).total;
            CHECK(std::abs(r1 - r2) < 1e-9 * r1);
        }
    }
    // a one-step chain with known parameters comes back out
    SDParams truth{{0.8, -9.0}, {0.35}};
    RationalRule rule;
    const double l0 = truth.lambdas[0], l1 = truth.lambdas[1], xi = truth.xis[0];
    rule.P = Poly{{l0 * l1, l0 + l1, 1.0}};
    rule.Q = Poly{{(1 - xi) * l0, 1.0}};
    rule.roots = {-l0, -l1};
    std::sort(rule.roots.begin(), rule.roots.end());
    const auto back = synthesize_sd_params(rule);
    const auto f = sd_chain_fn(back);
    for (double x : {0.1, 1.0, 3.0}) CHECK(f(x) == doctest::Approx(rule(x)).epsilon(1e-12));
}

TEST_CASE("parameter study at small delta") {
    const auto p = synthesize_sd_params(optimal_pred_rule(testutil::parameter_study(0.01)).rule);
    CHECK(std::abs(p.xis[0]) < 0.05);
    CHECK(p.lambdas[0] < 0.0);
}

TEST_CASE("optimality against a random battery") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 6; ++trial) {
        const auto m = testutil::random_model(rng, 1 + trial % 2);
        const ModelGrid g(m);
        const auto rule = optimal_pred_rule(g).rule;
        const double best = limiting_pred_risk(g, rule.to_shrinkage()).total;
        for (int k = 0; k < 40; ++k) {
            ShrinkageFn f;
            if (k % 3 == 0) {
                f = ridge(testutil::log_uniform(rng, 1e-3, 1e2));
            } else if (k % 3 == 1) {
                // perturbed optimum: same poles, jittered numerator
                Poly Q = rule.Q;
                for (std::size_t i = 0; i < Q.size(); ++i) Q[i] *= 1.0 + 0.05 * testutil::uniform(rng, -1, 1);
                f = rational(Q, rule.P);
            } else {
                SDParams p{{testutil::log_uniform(rng, 0.01, 5.0), -(g.b() + testutil::log_uniform(rng, 20.0, 200.0))},
                           {testutil::uniform(rng, -1.0, 1.0)}};
                f = sd_chain_fn(p);
            }
            try {
                check_admissible(m, f);
            } catch (const ConfigError&) {
                continue;
            }
            CHECK(limiting_pred_risk(g, f).total >= best);
        }
    }
}
