#include <cmath>
#include <random>

#include "doctest.h"
#include "sdshrink/federated.hpp"
#include "test_util.hpp"

using namespace sdshrink;

TEST_CASE("one client reduces to the single-client optimum") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 8; ++trial) {
        const auto m = testutil::random_model(rng, 1 + trial % 3);
        const ModelGrid g(m);
        const auto single = optimal_pred_rule(g);
        const auto fed = federated_optimum(g, 1);
        CHECK((fed.b - single.coef.b).cwiseAbs().maxCoeff() == 0.0);
        CHECK(fed.rho_star == doctest::Approx(1.0).epsilon(1e-14));
        const double rs = limiting_pred_risk(g, single.rule.to_shrinkage()).total;
        CHECK(federated_risk(g, {fed.local_rule.to_shrinkage()}, {1.0}) == doctest::Approx(rs).epsilon(1e-12));
    }
    CHECK(federated_optimum(testutil::two_spike_reference(), 1).b[0] == doctest::Approx(9.75).epsilon(1e-12));
    CHECK_THROWS_AS(federated_coefficients(ModelGrid(testutil::two_spike_reference()), 0), ConfigError);
}

TEST_CASE("isotropic closed form") {
    SpikedModel m;
    m.c = 1.4;
    m.r = 2.2;
    m.sigma_eps_sq = 1.5;
    const ModelGrid g(m);
    const double h00 = gram_system(g).H(0, 0), s2r2 = m.r * m.r;
    for (int K : {1, 3, 17}) {
        const auto fo = federated_optimum(g, K);
        CHECK(fo.b[0] == doctest::Approx(s2r2 / (1.0 + s2r2 * (K - 1) * h00)).epsilon(1e-12));
    }
}

TEST_CASE("aggregation weight and local rule") {
    const auto m = testutil::two_spike_reference();
    const ModelGrid g(m);
    for (int K : {2, 5}) {
        const auto fo = federated_optimum(g, K);
        CHECK(fo.rho_star == doctest::Approx(fo.b[0] / (25.0 * 0.39)).epsilon(1e-14));
        CHECK(fo.rho_star > 0.0);
        CHECK(fo.rho_star < 1.0);
        for (double x : {0.5, 2.0, 9.0}) CHECK(fo.rho_star * fo.local_rule(x) == doctest::Approx(fo.fK(x)).epsilon(1e-12));
        CHECK(round_trip_error(g, fo.local_rule, fo.sd_params) < 1e-9);
    }
}

TEST_CASE("federated optimum minimizes the aggregated risk") {
    const auto m = testutil::two_spike_reference();
    const ModelGrid g(m);
    const double single = limiting_pred_risk(g, optimal_pred_rule(g).rule.to_shrinkage()).total;
    double prev = single;
    for (int K : {2, 5}) {
        const auto fo = federated_optimum(g, K);
        const auto f = fo.local_rule.to_shrinkage();
        const std::vector<ShrinkageFn> rules(static_cast<std::size_t>(K), f);
        const double best = federated_risk(g, rules, std::vector<double>(static_cast<std::size_t>(K), fo.rho_star));
        CHECK(best < prev);
        prev = best;
        for (double eps : {-0.01, 0.01})
            CHECK(federated_risk(g, rules, std::vector<double>(static_cast<std::size_t>(K), fo.rho_star * (1 + eps))) > best);
        Poly Q = fo.local_rule.Q;
        Q[0] *= 1.02;
        const std::vector<ShrinkageFn> jittered(static_cast<std::size_t>(K), rational(Q, fo.local_rule.P));
        CHECK(federated_risk(g, jittered, std::vector<double>(static_cast<std::size_t>(K), fo.rho_star)) > best);
    }
    CHECK_THROWS_AS(federated_risk(g, {ridge(1.0)}, {0.5, 0.5}), ConfigError);
}

TEST_CASE("large-noise limit of b0") {
    const auto m = testutil::two_spike_reference();
    CHECK(b0_noise_limit(m) == doctest::Approx(9.75));
    for (int K : {2, 10}) CHECK(b0_at_noise(m, K, 1e6) == doctest::Approx(9.75).epsilon(1e-3));
}

TEST_CASE("product form") {
    const auto m = testutil::one_spike_reference(1.5);
    const auto one = tabulated({0.0, 1e6}, {1.0, 1.0});
    CHECK(product_form_limit(m, one, one, 1.5, 0.7) == doctest::Approx(1.0).epsilon(1e-10));

    const double ab = product_form_limit(m, ridge(0.5), ridge(2.0), 1.5, 0.7);
    CHECK(ab == doctest::Approx(product_form_limit(m, ridge(2.0), ridge(0.5), 0.7, 1.5)).epsilon(1e-14));

    SpikedModel iso;
    iso.c = 2.0;
    const auto q = [](const SpikedModel& mm) { return make_quadrature(mm); };
    const auto ml = iso.with_c(2.0), mk = iso.with_c(0.5);
    const double il = mp_measure(ml).integrate([](double x) { return 1.0 / (x + 0.5); }, q(ml));
    const double ik = mp_measure(mk).integrate([](double x) { return 1.0 / (x + 2.0); }, q(mk));
    CHECK(product_form_limit(iso, ridge(0.5), ridge(2.0), 2.0, 0.5) == doctest::Approx(il * ik).epsilon(1e-12));
}
