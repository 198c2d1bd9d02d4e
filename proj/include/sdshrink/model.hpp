#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdshrink {

// Bad input or configuration. The CLI maps it to exit code 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A modelling assumption the theory needs does not hold (exit code 3).
struct AssumptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Quadrature, root finding or a factorization went wrong (exit code 4).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Spike {
    double delta = 0.0;
    double alpha = 0.0;
};

// Sigma = sigma0_sq * I + sum_j delta_j v_j v_j^T, with beta0^T v_j -> alpha_j,
// ||beta0|| -> r and p/n -> c.
struct SpikedModel {
    double sigma0_sq = 1.0;
    double c = 1.0;
    std::vector<Spike> spikes;
    double r = 1.0;
    double sigma_eps_sq = 1.0;

    std::size_t s() const { return spikes.size(); }

    // Throws ConfigError on any violation.
    void validate() const;

    SpikedModel with_c(double c_new) const;
    SpikedModel with_noise(double sigma_eps_sq_new) const;
};

std::string describe(const SpikedModel& m);

}  // namespace sdshrink
