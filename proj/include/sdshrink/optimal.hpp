#pragma once

#include <vector>

#include "sdshrink/shrinkage.hpp"

namespace sdshrink {

struct OptimalCoefficients {
    Eigen::VectorXd b;  // b_0 .. b_s
    Eigen::VectorXd A;  // A_j = <f*, h_j>_w, j = 1..s
};

// f = Q / P with P monic of degree s+1. Q is monic for the single-client rules.
struct RationalRule {
    Poly P;
    Poly Q;
    std::vector<double> roots;  // roots of P, ascending
    double scale = 1.0;         // leading coefficient divided out of both P and Q

    double operator()(double x) const { return Q(x) / P(x); }
    ShrinkageFn to_shrinkage() const { return rational(Q, P); }
};

struct PredOptimum {
    RationalRule rule;
    OptimalCoefficients coef;
};

// Q0 = b_0 nu + sum_j b_j nu_{-j}, P0 = sigma0^2 r^2 x D + c sigma0^2 sigma_eps^2 nu, both
// divided by the leading coefficient of P0. Roots are bracketed and filled in.
RationalRule assemble_rule(const ModelGrid& g, const Eigen::VectorXd& b);

// Solves (I + diag(d) H) b = gamma.
Eigen::VectorXd solve_coefficients(const GramSystem& gs, const Eigen::VectorXd& d);

PredOptimum optimal_pred_rule(const ModelGrid& g);
PredOptimum optimal_pred_rule(const SpikedModel& m);
RationalRule optimal_est_rule(const ModelGrid& g);
RationalRule optimal_est_rule(const SpikedModel& m);

// Ridge at c sigma_eps^2 / r^2; s must be 0.
ShrinkageFn isotropic_optimal(const SpikedModel& m);

// s+1 real roots of the monic P, from sign-change brackets around the outliers
// of every spike (above the BBP threshold or not) plus one negative root.
std::vector<double> denominator_roots(const ModelGrid& g, const Poly& P);

// max over grid points of |f + sum_j delta_j alpha_j^2 <f, h_j>_w h_j - g|
double fixed_point_residual(const ModelGrid& g, const ShrinkageFn& f);

enum class SdOrdering {
    MinCoefficient,  // the admissible root order with the smallest max_k |t_k|
    MaxResidual,     // greedy: next root maximizes |R_k(gamma)|
};

SDParams synthesize_sd_params(const RationalRule& rule, SdOrdering order = SdOrdering::MinCoefficient);

// sup over grid points of |sd_chain(params) - rule|
double round_trip_error(const ModelGrid& g, const RationalRule& rule, const SDParams& params);

// true iff P and Q share no root (relative residual of Q at the roots of P above 1e-8)
bool coprimality_check(const RationalRule& rule);

}  // namespace sdshrink
