// Serial reference against the OpenMP path for the two parallel kernels.
#include <benchmark/benchmark.h>

#include "sdshrink/montecarlo.hpp"

using namespace sdshrink;

namespace {

SpikedModel one_spike() {
    SpikedModel m;
    m.c = 2.0;
    m.r = 2.0;
    m.sigma_eps_sq = 4.0;
    m.spikes = {{7.0, 1.7}};
    return m;
}

void harness(benchmark::State& st, Exec exec) {
    SimConfig cfg;
    cfg.model = one_spike();
    cfg.n = static_cast<int>(st.range(0));
    cfg.p = 2 * cfg.n;
    cfg.seed = 1;
    cfg.n_replicates = 8;
    const std::vector<SpectralEstimator> est{shrinkage_estimator("ridge", ridge(0.76), 0.0),
                                             pcr_estimator("pcr", 1, 0.0)};
    for (auto _ : st) benchmark::DoNotOptimize(converge_harness(cfg, est, exec));
    st.counters["threads"] = exec == Exec::Serial ? 1 : max_threads();
}

void risk_sweep(benchmark::State& st, Exec exec) {
    const ModelGrid g(one_spike(), static_cast<int>(st.range(0)));
    std::vector<ShrinkageFn> rules;
    for (int i = 0; i < 200; ++i) rules.push_back(ridge(1e-3 * std::pow(1e6, i / 199.0)));
    for (auto _ : st) benchmark::DoNotOptimize(pred_risk_sweep(g, rules, exec));
    st.counters["threads"] = exec == Exec::Serial ? 1 : max_threads();
}

}  // namespace

BENCHMARK_CAPTURE(harness, serial, Exec::Serial)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(harness, parallel, Exec::Parallel)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(risk_sweep, serial, Exec::Serial)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(risk_sweep, parallel, Exec::Parallel)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
