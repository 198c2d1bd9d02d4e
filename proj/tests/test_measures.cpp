#include <cmath>
#include <random>

#include "doctest.h"
#include "sdshrink/measures.hpp"
#include "test_util.hpp"

using namespace sdshrink;

TEST_CASE("mixture weights") {
    const auto w = mixture_weights(testutil::two_spike_reference());
    CHECK(w.omega0 == doctest::Approx(0.39));
    CHECK(w.omegas[0] == doctest::Approx(0.36));
    CHECK(w.omegas[1] == doctest::Approx(0.25));

    SpikedModel m;
    m.r = 1.0;
    m.spikes = {{2.0, 0.6}};
    const auto w1 = mixture_weights(m);
    CHECK(w1.omega0 == doctest::Approx(0.64));
    CHECK(w1.omegas[0] == doctest::Approx(0.36));
    CHECK(mixture_weights(SpikedModel{}).omega0 == 1.0);
}

TEST_CASE("Radon-Nikodym derivatives") {
    const auto m = testutil::two_spike_reference();
    const ModelGrid g(m);
    const auto w = g.omega();
    const auto& xs = g.outliers();
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(mu_j(m, 0, xs[j]) == doctest::Approx(0.0));
        CHECK(mu_j(m, j + 1, xs[j]) == doctest::Approx(1.0 / w.omegas[j]));
        CHECK(mu_j(m, 2 - j, xs[j]) == doctest::Approx(0.0));
        CHECK(weight_w(m, xs[j]) == doctest::Approx(m.sigma0_sq * m.r * m.r * xs[j]));
    }
    // partition of unity on the bulk grid and at the atoms
    for (Eigen::Index k = 0; k < g.x().size(); ++k) {
        const double sum = w.omega0 * g.mu()(k, 0) + w.omegas[0] * g.mu()(k, 1) + w.omegas[1] * g.mu()(k, 2);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(mu_j(m, 0, 100.0), std::domain_error);
    CHECK_THROWS_AS(mu_j(m, 3, 1.0), std::out_of_range);

    SpikedModel iso;
    iso.c = 0.5;
    CHECK(mu_j(iso, 0, 1.0) == 1.0);
}

TEST_CASE("w, g and h") {
    SpikedModel iso;
    iso.c = 2.0;
    iso.r = 1.5;
    iso.sigma_eps_sq = 3.0;
    for (double x : {0.5, 1.0, 4.0}) {
        CHECK(weight_w(iso, x) == doctest::Approx(1.5 * 1.5 * x + 2.0 * 3.0));
        CHECK(basis_h(iso, 0, x) == doctest::Approx(1.0 / weight_w(iso, x)));
        CHECK(target_g(iso, x) == doctest::Approx(1.5 * 1.5 / weight_w(iso, x)));
    }

    const auto m = testutil::two_spike_reference();
    const auto om = mixture_weights(m);
    auto [a, b] = mp_support(m);
    for (int k = 0; k < 100; ++k) {
        const double x = a + (b - a) * (k + 0.5) / 100.0;
        double rhs = m.sigma0_sq * m.r * m.r * om.omega0 * basis_h(m, 0, x);
        for (std::size_t j = 0; j < m.s(); ++j)
            rhs += (m.spikes[j].delta + m.sigma0_sq) * m.spikes[j].alpha * m.spikes[j].alpha * basis_h(m, j + 1, x);
        CHECK(target_g(m, x) == doctest::Approx(rhs).epsilon(1e-12));
        CHECK(weight_w(m, x) > 0.0);
    }
}

TEST_CASE("weighted inner product") {
    const auto m = testutil::two_spike_reference();
    const ModelGrid g(m);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    Eigen::VectorXd u(g.x().size()), v(g.x().size());
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        u[k] = nd(rng);
        v[k] = nd(rng);
    }
    CHECK(inner_w(g, u, v) == inner_w(g, v, u));
    CHECK(inner_w(g, Eigen::VectorXd::Zero(u.size()), v) == 0.0);

    // <h_j, phi>_w = int x phi dF_delta_j
    const auto q = g.quadrature();
    const auto phi = [](double x) { return std::cos(x); };
    for (std::size_t j = 0; j < m.s(); ++j) {
        const double lhs = inner_w(g, [&](double x) { return basis_h(m, j + 1, x); }, phi);
        const double rhs = spiked_measure(m, m.spikes[j].delta)
                               .integrate([&](double x) { return x * phi(x); }, q);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("Gram system") {
    const auto m = testutil::two_spike_reference();
    const auto gs = gram_system(ModelGrid(m));
    CHECK((gs.H - gs.H.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(gs.gamma[0] == doctest::Approx(25 * 0.39));
    CHECK(gs.gamma[1] == doctest::Approx(3.0 * 9.0));
    CHECK(gs.gamma[2] == doctest::Approx(4.0 * 6.25));

    SpikedModel iso;
    iso.c = 0.7;
    const auto g0 = gram_system(ModelGrid(iso));
    CHECK(g0.H.rows() == 1);
    CHECK(g0.H(0, 0) > 0.0);

    // the outlier part of H_jj is F_delta_j({x*_j}) / (sigma0^2 alpha_j^2)
    const ModelGrid g(m);
    const auto n = g.n_bulk();
    for (std::size_t j = 0; j < m.s(); ++j) {
        const auto atom = std::find(g.x().data() + n, g.x().data() + g.x().size(), g.outliers()[j]) - g.x().data();
        REQUIRE(atom < g.x().size());
        const double xs = g.outliers()[j];
        const double hj = g.h()(atom, static_cast<Eigen::Index>(j + 1));
        const double contrib = g.w_alpha()[atom] * xs * g.w()[atom] * hj * hj;
        const double alpha = m.spikes[j].alpha;
        CHECK(contrib == doctest::Approx(g.w_spike(j)[atom] / (m.sigma0_sq * alpha * alpha)).epsilon(1e-10));
    }
}

TEST_CASE("mixture measure") {
    SpikedModel iso;
    iso.c = 1.7;
    const auto q = make_quadrature(iso);
    const auto F = mixture_measure(iso);
    const auto G = mp_measure(iso);
    CHECK(F.integrate([](double x) { return x * x; }, q) == doctest::Approx(G.integrate([](double x) { return x * x; }, q)));

    const auto m = testutil::two_spike_reference();
    const auto Fa = mixture_measure(m);
    CHECK(Fa.total_mass(make_quadrature(m)) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(Fa.integrate([](double x) { return x; }, make_quadrature(m)) ==
          doctest::Approx(1.0 + 0.36 * 2.0 + 0.25 * 3.0).epsilon(1e-10));
}
