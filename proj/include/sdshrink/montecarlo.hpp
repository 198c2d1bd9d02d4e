#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sdshrink/parallel.hpp"
#include "sdshrink/shrinkage.hpp"

namespace sdshrink {

enum class EntryDist { Gaussian, Rademacher, StudentT };

struct SimConfig {
    SpikedModel model;
    int n = 0;
    int p = 0;
    std::uint64_t seed = 0;
    EntryDist entry_dist = EntryDist::Gaussian;
    double t_df = 10.0;  // degrees of freedom for StudentT, must exceed 8
    int n_replicates = 20;
    std::optional<Eigen::MatrixXd> directions;  // p x s orthonormal columns; random if unset

    void validate() const;  // ConfigError on bad sizes or distributions
    bool aspect_mismatch() const;  // |p/n - c| > 0.01
};

// Signal and spike directions, shared by every client of a replicate.
struct Problem {
    Eigen::VectorXd beta0;
    Eigen::MatrixXd V;  // p x s
};

struct Dataset {
    Eigen::MatrixXd X;  // n x p
    Eigen::VectorXd y;
};

// Independent generator for (seed, replicate, role, client).
std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t replicate, std::uint64_t role, std::uint64_t client = 0);

Problem draw_problem(const SimConfig& cfg, int replicate);
Dataset draw_dataset(const SimConfig& cfg, const Problem& pb, int replicate, int client = 0);

struct GeneratedData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Eigen::VectorXd beta0;
    Eigen::MatrixXd V;
};
GeneratedData gen_data(const SimConfig& cfg, int replicate = 0);

// Nonzero spectrum of Sigma_hat = X^T X / n: Sigma_hat = U diag(d) U^T on range(U),
// zero on its orthocomplement. For p > n it is lifted from the n x n Gram matrix.
struct SpectralDecomp {
    Eigen::VectorXd d;   // descending
    Eigen::MatrixXd U;   // p x rank
    Eigen::VectorXd z;   // U^T X^T y / n
    int p = 0;
    int n = 0;
    double d_max() const { return d.size() ? d[0] : 0.0; }

    // beta = U diag(mult) z
    Eigen::VectorXd apply(const Eigen::VectorXd& mult) const;
    // f(Sigma_hat) v, with f(0) on the null space
    Eigen::VectorXd apply_fn(const ShrinkageFn& f, const Eigen::VectorXd& v) const;
};

SpectralDecomp decompose(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

struct FittedEstimator {
    Eigen::VectorXd coefficients;
    std::string tag;
};

// Poles within 1e-10 * (largest eigenvalue) of a sample eigenvalue contribute zero.
double pinv_tolerance(const SpectralDecomp& sd);

FittedEstimator fit_shrinkage(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ShrinkageFn& f);
// The self-distillation recursion with explicit p x p pseudoinverses.
FittedEstimator fit_sd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SDParams& params);
FittedEstimator fit_pcr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int m);
FittedEstimator fit_minnorm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
FittedEstimator fit_gd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double eta, int T);

// ||beta_hat - beta0||^2_Sigma = sigma0^2 |d|^2 + sum_j delta_j (v_j^T d)^2
double sigma_risk(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta0, const SpikedModel& m,
                  const Eigen::MatrixXd& V);

FittedEstimator fit_aggregated(const std::vector<Dataset>& clients, const std::vector<ShrinkageFn>& rules,
                               const std::vector<double>& rhos);

// An estimator evaluated from the spectrum: multipliers f(d_i) for the nonzero eigenvalues.
struct SpectralEstimator {
    std::string name;
    std::function<Eigen::VectorXd(const SpectralDecomp&)> multipliers;
    double limit = 0.0;  // limiting risk to compare against
};

SpectralEstimator shrinkage_estimator(std::string name, const ShrinkageFn& f, double limit);
SpectralEstimator sd_estimator(std::string name, const SDParams& params, double limit);
SpectralEstimator pcr_estimator(std::string name, int m, double limit);

struct HarnessReport {
    std::string name;
    double limit = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    double rel_gap = 0.0;  // (mean - limit) / limit
    std::vector<double> samples;
};

// Runs cfg.n_replicates independent fits and reduces in replicate order, so the
// report does not depend on the schedule.
std::vector<HarnessReport> converge_harness(const SimConfig& cfg, const std::vector<SpectralEstimator>& estimators,
                                            Exec exec = Exec::Parallel);

struct ProductFormReport {
    double mean = 0.0;
    double std_error = 0.0;
    std::vector<double> samples;
};

// beta0^T phi(Sigma_hat_l) psi(Sigma_hat_k) beta0 / |beta0|^2 for two independent clients
// with n_l = p / c_l and n_k = p / c_k samples.
ProductFormReport product_form_mc(const SpikedModel& m, int p, double c_l, double c_k, const ShrinkageFn& phi,
                                  const ShrinkageFn& psi, int replicates, std::uint64_t seed,
                                  Exec exec = Exec::Parallel);

}  // namespace sdshrink
