#include "sdshrink/parallel.hpp"

#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdshrink {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

void for_each_index(int n, Exec exec, const std::function<void(int)>& body) {
    if (exec == Exec::Serial) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr first;
    std::mutex mu;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        try {
            body(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);
}

namespace {

template <class Fn>
std::vector<RiskBreakdown> sweep(const std::vector<ShrinkageFn>& rules, Exec exec, Fn fn) {
    std::vector<RiskBreakdown> out(rules.size());
    for_each_index(static_cast<int>(rules.size()), exec, [&](int i) { out[i] = fn(rules[i]); });
    return out;
}

}  // namespace

std::vector<RiskBreakdown> pred_risk_sweep(const ModelGrid& g, const std::vector<ShrinkageFn>& rules, Exec exec) {
    return sweep(rules, exec, [&](const ShrinkageFn& f) { return limiting_pred_risk(g, f); });
}

std::vector<RiskBreakdown> est_risk_sweep(const ModelGrid& g, const std::vector<ShrinkageFn>& rules, Exec exec) {
    return sweep(rules, exec, [&](const ShrinkageFn& f) { return limiting_est_risk(g, f); });
}

}  // namespace sdshrink
