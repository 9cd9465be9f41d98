#include <randctl/bsde.hpp>
#include <randctl/dp.hpp>
#include <randctl/girsanov.hpp>
#include <randctl/rng.hpp>
#include <randctl/sim.hpp>

#include <benchmark/benchmark.h>

#include <map>
#include <string>

using namespace randctl;

namespace {

const RunConfig& config(const std::string& name) {
    static std::map<std::string, RunConfig> cache;
    auto it = cache.find(name);
    if (it == cache.end()) {
        it = cache.emplace(name, load_config_file(std::string(RANDCTL_CONFIG_DIR) + "/" + name + ".json")).first;
    }
    return it->second;
}

void BM_PhiloxNormal(benchmark::State& state) {
    CounterRng rng({1, 0, Stream::brownian});
    for (auto _ : state) {
        benchmark::DoNotOptimize(rng.normal());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PhiloxNormal);

void BM_SimulateBundle(benchmark::State& state) {
    const auto& spec = config("jump_reward").problem;
    BundleOptions options;
    options.paths = static_cast<std::size_t>(state.range(0));
    options.n_steps = 64;
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate_bundle(spec, options));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateBundle)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_PenalizedGrid(benchmark::State& state) {
    const auto& c = config("bang_drift");
    const int n = static_cast<int>(state.range(0));
    const auto time = ladder_time_grid(c.problem, c.solver, n);
    const auto grid = make_state_grid(c.problem, c.solver);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_penalized_grid(c.problem, n, time, grid, c.solver.kernel, c.solver.seed));
    }
}
BENCHMARK(BM_PenalizedGrid)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_DpGrid(benchmark::State& state) {
    const auto& c = config("jump_reward");
    const auto time = ladder_time_grid(c.problem, c.solver, 16);
    const auto grid = make_state_grid(c.problem, c.solver);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_dp_grid(c.problem, time, grid, c.solver.kernel, c.solver.seed));
    }
}
BENCHMARK(BM_DpGrid)->Unit(benchmark::kMillisecond);

void BM_Lsmc(benchmark::State& state) {
    const auto& c = config("bang_drift");
    BundleOptions options;
    options.paths = static_cast<std::size_t>(state.range(0));
    options.n_steps = ladder_time_grid(c.problem, c.solver, 16).steps;
    const auto bundle = simulate_bundle(c.problem, options);
    LsmcOptions lsmc;
    lsmc.record_paths = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_penalized_lsmc(c.problem, 4, bundle, lsmc));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Lsmc)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_DoleansWeight(benchmark::State& state) {
    const auto& spec = config("ou_switch").problem;
    BundleOptions options;
    options.paths = 1;
    options.n_steps = 64;
    const auto path = simulate_path(spec, options, 0);
    const auto nu = IntensityControl::constant(2.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(doleans_exponential(spec, path, nu));
    }
}
BENCHMARK(BM_DoleansWeight);

} // namespace
BENCHMARK_MAIN();
