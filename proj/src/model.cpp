#include "sdshrink/model.hpp"

#include <cmath>
#include <sstream>

namespace sdshrink {

namespace {

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void SpikedModel::validate() const {
    if (!finite_positive(sigma0_sq)) throw ConfigError("sigma0_sq must be positive");
    if (!finite_positive(c)) throw ConfigError("c must be positive");
    if (!finite_positive(r)) throw ConfigError("r must be positive");
    if (!std::isfinite(sigma_eps_sq) || sigma_eps_sq < 0.0)
        throw ConfigError("sigma_eps_sq must be nonnegative");

    const double crit = c * sigma0_sq * sigma0_sq;
    double a2 = 0.0;
    for (std::size_t i = 0; i < spikes.size(); ++i) {
        const auto& si = spikes[i];
        if (!finite_positive(si.delta)) throw ConfigError("spike delta must be positive");
        if (!std::isfinite(si.alpha) || si.alpha == 0.0)
            throw ConfigError("spike alpha must be finite and nonzero");
        a2 += si.alpha * si.alpha;
        for (std::size_t j = i; j < spikes.size(); ++j) {
            const double dj = spikes[j].delta;
            if (j != i && std::abs(si.delta - dj) <= 1e-12 * std::max(si.delta, dj))
                throw ConfigError("spike deltas must be distinct");
            // delta_i delta_j = c sigma0^4 puts two outliers on top of each other
            // (or one on the bulk edge when i == j)
            if (std::abs(si.delta * dj - crit) <= 1e-9 * crit) {
                std::ostringstream os;
                os << "spikes " << i << "," << j << " violate delta_i*delta_j != c*sigma0^4";
                throw ConfigError(os.str());
            }
        }
    }
    if (!(a2 < r * r)) throw ConfigError("need sum of alpha_j^2 < r^2");
}

SpikedModel SpikedModel::with_c(double c_new) const {
    SpikedModel m = *this;
    m.c = c_new;
    return m;
}

SpikedModel SpikedModel::with_noise(double v) const {
    SpikedModel m = *this;
    m.sigma_eps_sq = v;
    return m;
}

std::string describe(const SpikedModel& m) {
    std::ostringstream os;
    os << "sigma0_sq=" << m.sigma0_sq << " c=" << m.c << " r=" << m.r
       << " sigma_eps_sq=" << m.sigma_eps_sq << " spikes=[";
    for (std::size_t j = 0; j < m.s(); ++j)
        os << (j ? ", " : "") << "(" << m.spikes[j].delta << ", " << m.spikes[j].alpha << ")";
    os << "]";
    return os.str();
}

}  // namespace sdshrink
