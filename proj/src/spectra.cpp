#include "sdshrink/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

namespace sdshrink {

namespace {

constexpr double kPi = std::numbers::pi;

void require_off_axis(cplx z) {
    if (z.imag() == 0.0 && z.real() >= 0.0)
        throw std::domain_error("Stieltjes transform needs z off [0, inf)");
}

}  // namespace

std::pair<double, double> mp_support(const SpikedModel& m) {
    const double sc = std::sqrt(m.c);
    return {m.sigma0_sq * (1.0 - sc) * (1.0 - sc), m.sigma0_sq * (1.0 + sc) * (1.0 + sc)};
}

double bbp_threshold(const SpikedModel& m) { return m.sigma0_sq * std::sqrt(m.c); }

double mp_density(const SpikedModel& m, double x) {
    auto [a, b] = mp_support(m);
    if (x <= a || x >= b) return 0.0;
    return std::sqrt((b - x) * (x - a)) / (2.0 * kPi * m.sigma0_sq * m.c * x);
}

cplx mp_stieltjes(const SpikedModel& m, cplx z) {
    require_off_axis(z);
    auto [a, b] = mp_support(m);
    const double s2 = m.sigma0_sq;
    // product of principal roots: cut on [a, b] and ~ z at infinity
    cplx root = std::sqrt(z - a) * std::sqrt(z - b);
    auto eval = [&](cplx rt) { return (s2 * (1.0 - m.c) - z + rt) / (2.0 * m.c * z * s2); };
    cplx v = eval(root);
    const bool bad = (z.imag() > 0.0 && v.imag() <= 0.0) || (z.imag() < 0.0 && v.imag() >= 0.0) ||
                     (z.imag() == 0.0 && v.real() <= 0.0);
    if (bad) v = eval(-root);
    return v;
}

cplx companion_stieltjes(const SpikedModel& m, cplx z) {
    return -(1.0 - m.c) / z + m.c * mp_stieltjes(m, z);
}

cplx spiked_stieltjes(const SpikedModel& m, double delta, cplx z) {
    if (delta < 0.0) throw std::domain_error("delta must be nonnegative");
    const cplx mz = mp_stieltjes(m, z);
    return m.sigma0_sq * mz / (m.sigma0_sq + delta + delta * z * mz);
}

cplx companion_stieltjes_boundary(const SpikedModel& m, double x) {
    auto [a, b] = mp_support(m);
    if (!(x > a && x < b)) throw std::domain_error("boundary value needs x inside the bulk");
    const double s2 = m.sigma0_sq;
    const cplx root(0.0, std::sqrt((x - a) * (b - x)));
    const cplx mx = (s2 * (1.0 - m.c) - x + root) / (2.0 * m.c * x * s2);
    return -(1.0 - m.c) / x + m.c * mx;
}

double outlier_location(const SpikedModel& m, double delta) {
    if (!(delta > 0.0)) throw std::domain_error("outlier location needs delta > 0");
    const double s2 = m.sigma0_sq;
    return (delta + s2) * (delta + m.c * s2) / delta;
}

double rn_nu(const SpikedModel& m, double delta, double x) {
    if (delta == 0.0) return 1.0;
    const double s2 = m.sigma0_sq;
    return delta * (outlier_location(m, delta) - x) / (m.c * s2 * (delta + s2));
}

double zero_atom_mass(const SpikedModel& m, double delta) {
    if (m.c <= 1.0) return 0.0;
    const double s2 = m.sigma0_sq;
    return s2 * (m.c - 1.0) / (m.c * s2 + delta);
}

double outlier_atom_mass(const SpikedModel& m, double delta) {
    const double s2 = m.sigma0_sq;
    if (!(delta > s2 * std::sqrt(m.c))) return 0.0;
    return (delta * delta - m.c * s2 * s2) / (delta * (delta + m.c * s2));
}

int default_nodes() {
    if (const char* env = std::getenv("SPECTRAL_DISTILL_NODES")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 16 && v <= 1 << 22) return static_cast<int>(v);
        throw ConfigError("SPECTRAL_DISTILL_NODES must be an integer >= 16");
    }
    return 2048;
}

namespace {

QuadratureRule chebyshev_rule(double a, double b, int n_nodes) {
    const double mid = 0.5 * (a + b), h = 0.5 * (b - a);
    QuadratureRule q;
    q.n_nodes = n_nodes;
    q.a = a;
    q.b = b;
    q.nodes.resize(n_nodes);
    q.weights.resize(n_nodes);
    const double step = kPi / (n_nodes + 1);
    for (int k = 1; k <= n_nodes; ++k) {
        const double th = k * step;
        q.nodes[k - 1] = mid + h * std::cos(th);
        q.weights[k - 1] = h * step * std::sin(th);
    }
    return q;
}

// Extra panel edges in theta, geometric toward an end whose integrands have a
// singularity within ~30/n of the segment: 1/x at x = 0 for c near 1, and
// 1/(x* - x) for spikes near the BBP threshold.
std::vector<double> grading_cuts(const SpikedModel& m, int n_nodes, double a, double b) {
    const double h = 0.5 * (b - a);
    std::vector<double> cuts;
    auto grade = [&](double dist, bool at_pi) {
        if (!(dist > 0.0) || dist * (n_nodes + 1) >= 30.0) return;
        for (double t = 0.25 * dist; t < kPi / 8; t *= 2.0) cuts.push_back(at_pi ? kPi - t : t);
    };
    grade(std::acosh(1.0 + a / h), true);
    double near = std::numeric_limits<double>::infinity();
    for (const auto& sp : m.spikes) near = std::min(near, outlier_location(m, sp.delta) - b);
    if (std::isfinite(near)) grade(std::acosh(1.0 + near / h), false);
    return cuts;
}

}  // namespace

QuadratureRule make_quadrature(const SpikedModel& m, int n_nodes) { return make_quadrature(m, n_nodes, {}); }

QuadratureRule make_quadrature(const SpikedModel& m, int n_nodes, const std::vector<double>& breakpoints) {
    if (n_nodes < 16) throw ConfigError("quadrature needs at least 16 nodes");
    auto [a, b] = mp_support(m);
    const double mid = 0.5 * (a + b), h = 0.5 * (b - a);
    std::vector<double> cuts{0.0, kPi};
    for (double x : breakpoints)
        if (x > a && x < b) cuts.push_back(std::acos(std::clamp((x - mid) / h, -1.0, 1.0)));
    for (double t : grading_cuts(m, n_nodes, a, b)) cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double u, double v) { return std::abs(u - v) < 1e-15; }),
               cuts.end());
    // at c = 1 the theta-integrand does not vanish at x = a, which the open
    // Chebyshev rule drops; Gauss-Legendre panels do not care
    if (cuts.size() == 2 && a > 0.0) return chebyshev_rule(a, b, n_nodes);

    using GL = boost::math::quadrature::gauss<double, 20>;
    const auto& xs = GL::abscissa();
    const auto& ws = GL::weights();
    const int total_panels = std::max<int>(static_cast<int>(cuts.size()) - 1, n_nodes / 20);

    QuadratureRule q;
    q.a = a;
    q.b = b;
    for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
        const double t0 = cuts[seg], t1 = cuts[seg + 1];
        const int panels = std::max(1, static_cast<int>(std::lround(total_panels * (t1 - t0) / kPi)));
        const double pw = (t1 - t0) / panels;
        for (int p = 0; p < panels; ++p) {
            const double c0 = t0 + (p + 0.5) * pw, hw = 0.5 * pw;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                for (int sgn : {-1, 1}) {
                    if (xs[i] == 0.0 && sgn > 0) continue;
                    const double th = c0 + sgn * hw * xs[i];
                    q.nodes.push_back(mid + h * std::cos(th));
                    q.weights.push_back(h * std::sin(th) * hw * ws[i]);
                }
            }
        }
    }
    q.n_nodes = static_cast<int>(q.nodes.size());
    return q;
}

SpectralMeasure::SpectralMeasure(const SpikedModel& m, std::vector<Component> parts)
    : sigma0_sq_(m.sigma0_sq), c_(m.c), parts_(std::move(parts)) {
    std::tie(a_, b_) = mp_support(m);
    double zero_mass = 0.0;
    for (const auto& p : parts_) {
        if (p.delta < 0.0) throw std::domain_error("delta must be nonnegative");
        zero_mass += p.weight * zero_atom_mass(m, p.delta);
        if (p.delta > 0.0) {
            const double om = outlier_atom_mass(m, p.delta);
            if (om > 0.0) atoms_.push_back({outlier_location(m, p.delta), p.weight * om});
        }
    }
    if (zero_mass > 0.0) atoms_.insert(atoms_.begin(), Atom{0.0, zero_mass});
}

double SpectralMeasure::bulk_density(double x) const {
    if (x <= a_ || x >= b_) return 0.0;
    const double base = std::sqrt((b_ - x) * (x - a_)) / (2.0 * kPi * sigma0_sq_ * c_ * x);
    double mult = 0.0;
    for (const auto& p : parts_) {
        if (p.delta == 0.0) {
            mult += p.weight;
        } else {
            const double d = p.delta, s2 = sigma0_sq_;
            // f_delta = f_MP / nu_delta
            mult += p.weight * c_ * s2 * (d + s2) /
                    (c_ * s2 * s2 + (c_ + 1.0) * d * s2 + d * d - d * x);
        }
    }
    return base * mult;
}

double SpectralMeasure::bulk_mass(const QuadratureRule& q) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < q.nodes.size(); ++k) acc += q.weights[k] * bulk_density(q.nodes[k]);
    return acc;
}

double SpectralMeasure::total_mass(const QuadratureRule& q) const {
    double acc = bulk_mass(q);
    for (const auto& at : atoms_) acc += at.mass;
    return acc;
}

SpectralMeasure mp_measure(const SpikedModel& m) { return SpectralMeasure(m, {{1.0, 0.0}}); }

SpectralMeasure spiked_measure(const SpikedModel& m, double delta) {
    if (delta < 0.0) throw std::domain_error("delta must be nonnegative");
    return SpectralMeasure(m, {{1.0, delta}});
}

double mp_upper_tail(const SpikedModel& m, double x) {
    auto [a, b] = mp_support(m);
    if (x >= b) return 0.0;
    const double bulk = std::min(1.0, 1.0 / m.c);
    if (x <= a) return bulk;
    const double mid = 0.5 * (a + b), h = 0.5 * (b - a);
    const double theta_x = std::acos(std::clamp((x - mid) / h, -1.0, 1.0));
    const double scale = h * h / (2.0 * kPi * m.sigma0_sq * m.c);
    auto integrand = [&](double th) {
        const double s = std::sin(th);
        return scale * s * s / (mid + h * std::cos(th));
    };
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    return GK::integrate(integrand, 0.0, theta_x, 20, 1e-14);
}

double mp_quantile_inverse(const SpikedModel& m, double tau) {
    const double bulk = std::min(1.0, 1.0 / m.c);
    if (!(tau >= 0.0 && tau < bulk)) throw std::domain_error("tau must lie in [0, min(1, 1/c))");
    auto [a, b] = mp_support(m);
    if (tau == 0.0) return b;
    auto f = [&](double x) { return mp_upper_tail(m, x) - tau; };
    auto done = [&](double lo, double hi) { return hi - lo <= 1e-14 * b; };
    auto [lo, hi] = boost::math::tools::bisect(f, a, b, done);
    return 0.5 * (lo + hi);
}

}  // namespace sdshrink
