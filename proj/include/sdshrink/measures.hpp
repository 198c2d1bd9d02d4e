#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/polynomial.hpp>

#include "sdshrink/spectra.hpp"

namespace sdshrink {

using Poly = boost::math::tools::polynomial<double>;

struct MixtureWeights {
    double omega0 = 1.0;
    std::vector<double> omegas;
};

MixtureWeights mixture_weights(const SpikedModel& m);
SpectralMeasure mixture_measure(const SpikedModel& m);

// nu_j(x) = delta_j (x*_j - x) / (c sigma0^2 (delta_j + sigma0^2)), nu = prod nu_j,
// nu_minus[j] = prod_{i != j} nu_i, D = omega0 nu + sum_j omega_j nu_minus[j].
struct RnPolynomials {
    std::vector<Poly> nu_j;
    Poly nu;
    std::vector<Poly> nu_minus;
    Poly D;
};

RnPolynomials rn_polynomials(const SpikedModel& m);

// Pointwise Radon-Nikodym derivatives dF_MP/dF_alpha (j = 0) and dF_delta_j/dF_alpha.
// x must lie in the bulk, at the zero atom, or at an outlier atom.
double mu_j(const SpikedModel& m, std::size_t j, double x);
double weight_w(const SpikedModel& m, double x);
double target_g(const SpikedModel& m, double x);
double basis_h(const SpikedModel& m, std::size_t j, double x);

// Everything the risk and Gram computations need, tabulated once per model on
// the bulk nodes plus the atoms of F_MP, F_delta_j and F_alpha.
class ModelGrid {
public:
    explicit ModelGrid(const SpikedModel& m, int n_nodes = default_nodes(),
                       const std::vector<double>& breakpoints = {});

    const SpikedModel& model() const { return model_; }
    std::size_t s() const { return model_.s(); }
    double a() const { return quad_.a; }
    double b() const { return quad_.b; }
    int n_nodes() const { return n_nodes_; }
    const QuadratureRule& quadrature() const { return quad_; }
    const MixtureWeights& omega() const { return omega_; }
    const RnPolynomials& rn() const { return rn_; }

    // outlier locations of every spike (above BBP or not), in model order
    const std::vector<double>& outliers() const { return xstar_; }
    const std::vector<bool>& above_bbp() const { return above_; }

    // support points: bulk nodes first, then atoms
    const Eigen::VectorXd& x() const { return x_; }
    std::size_t n_bulk() const { return quad_.nodes.size(); }
    bool is_bulk(std::size_t k) const { return k < n_bulk(); }

    // measure weights on the support points
    const Eigen::VectorXd& w_mp() const { return w_mp_; }
    const Eigen::VectorXd& w_spike(std::size_t j) const { return w_spike_[j]; }
    const Eigen::VectorXd& w_alpha() const { return w_alpha_; }

    // tabulated mu_0, mu_j (column j, 1-based spikes in columns 1..s) and w
    const Eigen::MatrixXd& mu() const { return mu_; }
    const Eigen::VectorXd& w() const { return w_; }
    // h_j = mu_j / w, columns 0..s
    const Eigen::MatrixXd& h() const { return h_; }

    Eigen::VectorXd tabulate(const std::function<double(double)>& f) const;

    // A grid with the same model and node budget, split at the given bulk points.
    ModelGrid with_breakpoints(const std::vector<double>& breakpoints) const;

private:
    SpikedModel model_;
    int n_nodes_;
    QuadratureRule quad_;
    MixtureWeights omega_;
    RnPolynomials rn_;
    std::vector<double> xstar_;
    std::vector<bool> above_;
    Eigen::VectorXd x_, w_mp_, w_alpha_, w_;
    std::vector<Eigen::VectorXd> w_spike_;
    Eigen::MatrixXd mu_, h_;
};

// <phi, psi>_w = int phi psi x w dF_alpha. The zero atom drops out through x.
double inner_w(const ModelGrid& g, const Eigen::VectorXd& phi, const Eigen::VectorXd& psi);
double inner_w(const ModelGrid& g, const std::function<double(double)>& phi,
               const std::function<double(double)>& psi);

struct GramSystem {
    Eigen::MatrixXd H;      // H_ij = <h_i, h_j>_w
    Eigen::VectorXd gamma;  // (sigma0^2 r^2 omega0, (delta_j + sigma0^2) alpha_j^2)
};

GramSystem gram_system(const ModelGrid& g);

}  // namespace sdshrink
