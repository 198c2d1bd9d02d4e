#pragma once

#include <vector>

#include "sdshrink/optimal.hpp"

namespace sdshrink {

struct FederatedOptimum {
    int K = 1;
    Eigen::VectorXd b;        // b^(K)
    double rho_star = 1.0;    // common aggregation weight
    RationalRule fK;          // rho* times the local rule
    RationalRule local_rule;  // what each client fits
    SDParams sd_params;       // s-step chain realizing local_rule
};

// Solves (I + D_K H) b = gamma with
// D_K = diag(sigma0^2 r^2 omega0 (K-1), ((K-1) sigma0^2 + K delta_j) alpha_j^2).
Eigen::VectorXd federated_coefficients(const ModelGrid& g, int K);

// Throws AssumptionError when b_0^(K) vanishes (|b_0| < 1e-10 |gamma|).
FederatedOptimum federated_optimum(const ModelGrid& g, int K, SdOrdering order = SdOrdering::MinCoefficient);
FederatedOptimum federated_optimum(const SpikedModel& m, int K, SdOrdering order = SdOrdering::MinCoefficient);

// sigma0^2 r^2 omega0, the large-noise limit of b_0^(K) for every K
double b0_noise_limit(const SpikedModel& m);
double b0_at_noise(const SpikedModel& m, int K, double sigma_eps_sq);

// omega0 int phi dF_MP(c_l) int psi dF_MP(c_k) + sum_j omega_j int phi dF_delta_j(c_l) int psi dF_delta_j(c_k)
double product_form_limit(const SpikedModel& m, const ShrinkageFn& phi, const ShrinkageFn& psi, double c_l,
                          double c_k);

// Limiting prediction risk of sum_l rho_l f_l(Sigma_hat_l) X_l^T y_l / n with K
// independent clients of equal size, all at the model's aspect ratio.
double federated_risk(const ModelGrid& g, const std::vector<ShrinkageFn>& rules, const std::vector<double>& rhos);
double federated_risk(const SpikedModel& m, const std::vector<ShrinkageFn>& rules, const std::vector<double>& rhos);

}  // namespace sdshrink
