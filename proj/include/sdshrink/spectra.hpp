#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "sdshrink/model.hpp"

namespace sdshrink {

using cplx = std::complex<double>;

// Bulk [a, b] of the Marchenko-Pastur law.
std::pair<double, double> mp_support(const SpikedModel& m);
double mp_density(const SpikedModel& m, double x);
double bbp_threshold(const SpikedModel& m);  // sigma0^2 sqrt(c)

// Stieltjes transforms, z off [0, inf). Throw std::domain_error otherwise.
cplx mp_stieltjes(const SpikedModel& m, cplx z);
cplx companion_stieltjes(const SpikedModel& m, cplx z);
cplx spiked_stieltjes(const SpikedModel& m, double delta, cplx z);
// Boundary value lim_{eps->0+} of the companion transform at x + i eps, x inside (a, b).
cplx companion_stieltjes_boundary(const SpikedModel& m, double x);

double outlier_location(const SpikedModel& m, double delta);
// dF_MP/dF_delta, affine in x and zero at the outlier location.
double rn_nu(const SpikedModel& m, double delta, double x);
double zero_atom_mass(const SpikedModel& m, double delta);     // 0 unless c > 1
double outlier_atom_mass(const SpikedModel& m, double delta);  // 0 unless above BBP

// Nodes and dx-weights for integrals over the bulk of functions carrying the
// sqrt((b-x)(x-a)) edge factor: int_a^b g dx ~ sum_k weights[k] g(nodes[k]).
struct QuadratureRule {
    int n_nodes = 0;
    double a = 0.0, b = 0.0;
    std::vector<double> nodes;
    std::vector<double> weights;
};

int default_nodes();  // 2048 unless SPECTRAL_DISTILL_NODES is set

// Gauss-Chebyshev of the second kind under x = (a+b)/2 + (b-a)/2 cos(theta).
// Falls back to graded Gauss-Legendre panels in theta when c is 1 or close to
// it, or when a spike sits close to the BBP threshold.
QuadratureRule make_quadrature(const SpikedModel& m, int n_nodes = default_nodes());
// Composite Gauss-Legendre in theta with panel edges at the given bulk points,
// for integrands with kinks (ramped surrogates).
QuadratureRule make_quadrature(const SpikedModel& m, int n_nodes,
                               const std::vector<double>& breakpoints);

struct Atom {
    double location = 0.0;
    double mass = 0.0;
};

// Convex combination of F_MP (delta = 0) and one-spike laws F_delta.
class SpectralMeasure {
public:
    struct Component {
        double weight;
        double delta;
    };

    SpectralMeasure(const SpikedModel& m, std::vector<Component> parts);

    double bulk_lo() const { return a_; }
    double bulk_hi() const { return b_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::vector<Component>& components() const { return parts_; }

    double bulk_density(double x) const;

    template <class F>
    double integrate(F&& phi, const QuadratureRule& q) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < q.nodes.size(); ++k)
            acc += q.weights[k] * bulk_density(q.nodes[k]) * phi(q.nodes[k]);
        for (const auto& at : atoms_) acc += at.mass * phi(at.location);
        return acc;
    }
    double bulk_mass(const QuadratureRule& q) const;
    double total_mass(const QuadratureRule& q) const;

private:
    double sigma0_sq_, c_, a_, b_;
    std::vector<Component> parts_;
    std::vector<Atom> atoms_;
};

SpectralMeasure mp_measure(const SpikedModel& m);
SpectralMeasure spiked_measure(const SpikedModel& m, double delta);

// Upper-tail mass Q_c(x) = int_x^b f_MP, and its inverse on [0, min(1, 1/c)).
double mp_upper_tail(const SpikedModel& m, double x);
double mp_quantile_inverse(const SpikedModel& m, double tau);

}  // namespace sdshrink
