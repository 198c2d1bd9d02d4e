#pragma once

#include <functional>
#include <vector>

#include "sdshrink/shrinkage.hpp"

namespace sdshrink {

enum class Exec { Serial, Parallel };

int max_threads();
void set_threads(int n);  // n <= 0 leaves the OpenMP default

// Runs body(i) for i in [0, n). Parallel uses an OpenMP loop; the first exception
// thrown by any iteration is rethrown after the loop.
void for_each_index(int n, Exec exec, const std::function<void(int)>& body);

// Limiting prediction risks of many rules on one grid.
std::vector<RiskBreakdown> pred_risk_sweep(const ModelGrid& g, const std::vector<ShrinkageFn>& rules,
                                           Exec exec = Exec::Parallel);
std::vector<RiskBreakdown> est_risk_sweep(const ModelGrid& g, const std::vector<ShrinkageFn>& rules,
                                          Exec exec = Exec::Parallel);

}  // namespace sdshrink
