#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "sdshrink/measures.hpp"

namespace sdshrink {

// lambda_0..lambda_k and xi_1..xi_k (xi_0 = 0 by convention).
struct SDParams {
    std::vector<double> lambdas;
    std::vector<double> xis;
    std::size_t steps() const { return lambdas.empty() ? 0 : lambdas.size() - 1; }
};

struct Ridge {
    double lambda = 0.0;
};
struct Rational {
    Poly num;
    Poly den;
};
struct SDChain {
    SDParams params;
};
struct GDPoly {
    double eta = 0.0;
    int steps = 0;
};
// 0 below the ramp, 1/x above it; ramp centred on the threshold.
struct PCRSurrogate {
    double threshold = 0.0;
    double ramp_width = 0.0;
};
// 0 on [0, cut), 1/x from cut + ramp_width on.
struct MinNormSurrogate {
    double cut = 0.0;
    double ramp_width = 0.0;
};
// Values at given points, linear in between.
struct Tabulated {
    std::vector<double> x;
    std::vector<double> y;
};

struct ShrinkageFn {
    std::variant<Ridge, Rational, SDChain, GDPoly, PCRSurrogate, MinNormSurrogate, Tabulated> rule;

    double operator()(double x) const;
    // interior kinks that a quadrature should not straddle
    std::vector<double> breakpoints() const;
    std::string name() const;
};

ShrinkageFn ridge(double lambda);
ShrinkageFn rational(Poly num, Poly den);
ShrinkageFn gd_poly(double eta, int steps);
ShrinkageFn sd_chain_fn(const SDParams& params);
ShrinkageFn tabulated(std::vector<double> x, std::vector<double> y);

// f(x); poles map to 0 as a pseudoinverse would. pole_tol widens the pole band.
double eval_shrinkage(const ShrinkageFn& f, double x, double pole_tol = 0.0);

// The unrolled recursion f_{t} = ((1 - xi_t) + xi_t x f_{t-1}) / (x + lambda_t).
double sd_recursion(const SDParams& params, double x, double pole_tol = 0.0);

// Throws ConfigError if f has a pole on the limiting support (bulk, zero atom, outliers).
void check_admissible(const SpikedModel& m, const ShrinkageFn& f);

struct RiskBreakdown {
    double bias_bulk = 0.0;
    std::vector<double> bias_spikes;
    double variance = 0.0;
    double total = 0.0;
};

RiskBreakdown limiting_pred_risk(const ModelGrid& g, const ShrinkageFn& f);
RiskBreakdown limiting_est_risk(const ModelGrid& g, const ShrinkageFn& f);
RiskBreakdown limiting_pred_risk(const SpikedModel& m, const ShrinkageFn& f);
RiskBreakdown limiting_est_risk(const SpikedModel& m, const ShrinkageFn& f);

enum class RiskKind { Prediction, Estimation };

// lambda > 0 minimizing the limiting risk of ridge: log-grid scan on [lo, hi], then Brent.
double tuned_ridge_lambda(const ModelGrid& g, RiskKind kind = RiskKind::Prediction, double lo = 1e-4,
                          double hi = 1e3);

// Surrogates whose limiting risks equal those of the min-norm interpolator and of PCR.
struct NamedSurrogates {
    ShrinkageFn min_norm;
    std::function<ShrinkageFn(double)> pcr;
};

double default_ramp_width(const SpikedModel& m);  // 1e-3 (b - a)
ShrinkageFn min_norm_surrogate(const SpikedModel& m, double eta_fraction = 0.5);
ShrinkageFn pcr_surrogate(const SpikedModel& m, double tau, double ramp_width = -1.0);
// PCR keeping only the outlier eigenvalues (tau -> 0 with all spikes retained).
ShrinkageFn pcr_outlier_limit(const SpikedModel& m);
NamedSurrogates named_surrogates(const SpikedModel& m);

}  // namespace sdshrink
