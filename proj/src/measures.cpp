#include "sdshrink/measures.hpp"

#include <cmath>
#include <stdexcept>

namespace sdshrink {

MixtureWeights mixture_weights(const SpikedModel& m) {
    MixtureWeights w;
    const double r2 = m.r * m.r;
    w.omega0 = 1.0;
    for (const auto& sp : m.spikes) {
        w.omegas.push_back(sp.alpha * sp.alpha / r2);
        w.omega0 -= w.omegas.back();
    }
    return w;
}

SpectralMeasure mixture_measure(const SpikedModel& m) {
    auto w = mixture_weights(m);
    std::vector<SpectralMeasure::Component> parts{{w.omega0, 0.0}};
    for (std::size_t j = 0; j < m.s(); ++j) parts.push_back({w.omegas[j], m.spikes[j].delta});
    return SpectralMeasure(m, std::move(parts));
}

RnPolynomials rn_polynomials(const SpikedModel& m) {
    RnPolynomials rn;
    const double s2 = m.sigma0_sq;
    for (const auto& sp : m.spikes) {
        const double k = sp.delta / (m.c * s2 * (sp.delta + s2));
        const double xs = outlier_location(m, sp.delta);
        rn.nu_j.push_back(Poly{{k * xs, -k}});
    }
    const std::size_t s = m.s();
    rn.nu = Poly{{1.0}};
    for (const auto& p : rn.nu_j) rn.nu *= p;
    auto w = mixture_weights(m);
    rn.D = rn.nu * w.omega0;
    for (std::size_t j = 0; j < s; ++j) {
        Poly prod{{1.0}};
        for (std::size_t i = 0; i < s; ++i)
            if (i != j) prod *= rn.nu_j[i];
        rn.nu_minus.push_back(prod);
        rn.D += prod * w.omegas[j];
    }
    return rn;
}

namespace {

// nu_i(x) for every spike, exactly zero at that spike's own outlier
std::vector<double> nu_values(const SpikedModel& m, double x) {
    std::vector<double> v(m.s());
    for (std::size_t i = 0; i < m.s(); ++i) {
        const double xs = outlier_location(m, m.spikes[i].delta);
        v[i] = (x == xs) ? 0.0 : rn_nu(m, m.spikes[i].delta, x);
    }
    return v;
}

// (mu_0, mu_1..mu_s) at x from the affine factors
std::vector<double> mu_all(const SpikedModel& m, const MixtureWeights& om, const std::vector<double>& nu) {
    const std::size_t s = nu.size();
    std::vector<double> minus(s, 1.0);
    double full = 1.0;
    for (std::size_t i = 0; i < s; ++i) {
        full *= nu[i];
        for (std::size_t j = 0; j < s; ++j)
            if (j != i) minus[j] *= nu[i];
    }
    double D = om.omega0 * full;
    for (std::size_t j = 0; j < s; ++j) D += om.omegas[j] * minus[j];
    std::vector<double> out(s + 1);
    out[0] = full / D;
    for (std::size_t j = 0; j < s; ++j) out[j + 1] = minus[j] / D;
    (void)m;
    return out;
}

void require_support_point(const SpikedModel& m, double x) {
    auto [a, b] = mp_support(m);
    const double tol = 1e-12 * b;
    if (x >= a - tol && x <= b + tol) return;
    if (x == 0.0 && m.c > 1.0) return;
    for (const auto& sp : m.spikes)
        if (outlier_atom_mass(m, sp.delta) > 0.0) {
            const double xs = outlier_location(m, sp.delta);
            if (std::abs(x - xs) <= 1e-12 * xs) return;
        }
    throw std::domain_error("x is not in the limiting spectral support");
}

double snap_outlier(const SpikedModel& m, double x) {
    for (const auto& sp : m.spikes) {
        const double xs = outlier_location(m, sp.delta);
        if (std::abs(x - xs) <= 1e-12 * xs) return xs;
    }
    return x;
}

}  // namespace

double mu_j(const SpikedModel& m, std::size_t j, double x) {
    if (j > m.s()) throw std::out_of_range("mu_j index");
    require_support_point(m, x);
    x = snap_outlier(m, x);
    return mu_all(m, mixture_weights(m), nu_values(m, x))[j];
}

double weight_w(const SpikedModel& m, double x) {
    const double s2 = m.sigma0_sq;
    return s2 * m.r * m.r * x + m.c * s2 * m.sigma_eps_sq * mu_j(m, 0, x);
}

double target_g(const SpikedModel& m, double x) {
    require_support_point(m, x);
    x = snap_outlier(m, x);
    auto mu = mu_all(m, mixture_weights(m), nu_values(m, x));
    const double s2 = m.sigma0_sq;
    double num = s2 * m.r * m.r;
    for (std::size_t j = 0; j < m.s(); ++j)
        num += m.spikes[j].delta * m.spikes[j].alpha * m.spikes[j].alpha * mu[j + 1];
    return num / (s2 * m.r * m.r * x + m.c * s2 * m.sigma_eps_sq * mu[0]);
}

double basis_h(const SpikedModel& m, std::size_t j, double x) {
    return mu_j(m, j, x) / weight_w(m, x);
}

ModelGrid::ModelGrid(const SpikedModel& m, int n_nodes, const std::vector<double>& breakpoints)
    : model_(m), n_nodes_(n_nodes) {
    model_.validate();
    quad_ = breakpoints.empty() ? make_quadrature(m, n_nodes) : make_quadrature(m, n_nodes, breakpoints);
    omega_ = mixture_weights(m);
    rn_ = rn_polynomials(m);
    const std::size_t s = m.s();
    for (const auto& sp : m.spikes) {
        xstar_.push_back(outlier_location(m, sp.delta));
        above_.push_back(outlier_atom_mass(m, sp.delta) > 0.0);
    }

    std::vector<double> pts(quad_.nodes);
    const std::size_t nb = pts.size();
    const bool zero_atom = m.c > 1.0;
    if (zero_atom) pts.push_back(0.0);
    std::vector<std::size_t> atom_index(s, 0);
    for (std::size_t j = 0; j < s; ++j)
        if (above_[j]) {
            atom_index[j] = pts.size();
            pts.push_back(xstar_[j]);
        }
    const std::size_t np = pts.size();
    x_ = Eigen::Map<Eigen::VectorXd>(pts.data(), static_cast<Eigen::Index>(np));

    const auto mp = mp_measure(m);
    w_mp_ = Eigen::VectorXd::Zero(np);
    for (std::size_t k = 0; k < nb; ++k) w_mp_[k] = quad_.weights[k] * mp.bulk_density(pts[k]);
    if (zero_atom) w_mp_[nb] = 1.0 - 1.0 / m.c;

    w_spike_.assign(s, Eigen::VectorXd::Zero(np));
    for (std::size_t j = 0; j < s; ++j) {
        const double d = m.spikes[j].delta;
        for (std::size_t k = 0; k < nb; ++k) w_spike_[j][k] = w_mp_[k] / rn_nu(m, d, pts[k]);
        if (zero_atom) w_spike_[j][nb] = zero_atom_mass(m, d);
        if (above_[j]) w_spike_[j][atom_index[j]] = outlier_atom_mass(m, d);
    }
    w_alpha_ = omega_.omega0 * w_mp_;
    for (std::size_t j = 0; j < s; ++j) w_alpha_ += omega_.omegas[j] * w_spike_[j];

    mu_.resize(np, s + 1);
    w_.resize(np);
    h_.resize(np, s + 1);
    const double s2 = m.sigma0_sq;
    for (std::size_t k = 0; k < np; ++k) {
        auto mu = mu_all(m, omega_, nu_values(m, pts[k]));
        for (std::size_t j = 0; j <= s; ++j) mu_(k, j) = mu[j];
        w_[k] = s2 * m.r * m.r * pts[k] + m.c * s2 * m.sigma_eps_sq * mu[0];
        for (std::size_t j = 0; j <= s; ++j) h_(k, j) = (w_[k] > 0.0) ? mu[j] / w_[k] : 0.0;
    }
}

Eigen::VectorXd ModelGrid::tabulate(const std::function<double(double)>& f) const {
    Eigen::VectorXd v(x_.size());
    for (Eigen::Index k = 0; k < x_.size(); ++k) v[k] = f(x_[k]);
    return v;
}

ModelGrid ModelGrid::with_breakpoints(const std::vector<double>& breakpoints) const {
    return ModelGrid(model_, n_nodes_, breakpoints);
}

double inner_w(const ModelGrid& g, const Eigen::VectorXd& phi, const Eigen::VectorXd& psi) {
    // phi psi first so the form is exactly symmetric
    return ((phi.array() * psi.array()) * (g.w_alpha().array() * g.x().array() * g.w().array())).sum();
}

double inner_w(const ModelGrid& g, const std::function<double(double)>& phi,
               const std::function<double(double)>& psi) {
    Eigen::VectorXd a = g.tabulate(phi), b = g.tabulate(psi);
    // the zero atom carries a vanishing x factor; skip it so phi need not be finite there
    for (Eigen::Index k = 0; k < a.size(); ++k)
        if (g.x()[k] == 0.0) a[k] = b[k] = 0.0;
    return inner_w(g, a, b);
}

GramSystem gram_system(const ModelGrid& g) {
    const auto& m = g.model();
    const std::size_t s = g.s();
    Eigen::VectorXd wt = Eigen::VectorXd::Zero(g.x().size());
    for (Eigen::Index k = 0; k < wt.size(); ++k)
        if (g.x()[k] > 0.0) wt[k] = g.w_alpha()[k] * g.x()[k] / g.w()[k];
    GramSystem gs;
    gs.H = g.mu().transpose() * wt.asDiagonal() * g.mu();
    gs.H = 0.5 * (gs.H + gs.H.transpose()).eval();
    gs.gamma.resize(static_cast<Eigen::Index>(s + 1));
    gs.gamma[0] = m.sigma0_sq * m.r * m.r * g.omega().omega0;
    for (std::size_t j = 0; j < s; ++j)
        gs.gamma[static_cast<Eigen::Index>(j + 1)] =
            (m.spikes[j].delta + m.sigma0_sq) * m.spikes[j].alpha * m.spikes[j].alpha;
    if (!gs.H.allFinite()) throw NumericalError("Gram matrix has non-finite entries");
    return gs;
}

}  // namespace sdshrink
