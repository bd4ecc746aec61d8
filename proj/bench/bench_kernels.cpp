#include "fuselvm/inference.hpp"
#include "fuselvm/kernels.hpp"
#include "fuselvm/simulate.hpp"

#include <benchmark/benchmark.h>

using namespace fuselvm;

namespace {

struct Fixture {
    ConditionParams params;
    ConditionCache cache;
    ConditionData data;
    std::vector<SamplePosterior> start;
};

Fixture make_fixture(Eigen::Index replicates, Eigen::Index dim) {
    SimConfig cfg = SimConfig::community_defaults();
    cfg.dims = {dim};
    cfg.replicates = replicates;
    cfg.seed = 1;
    const SimResult sim = simulate_community(cfg);
    FitOptions o;
    const ModelParams mp = initial_params(sim.dataset, cfg.latent_dim, o);
    Fixture f;
    f.params = mp.conditions[0];
    f.cache = ConditionCache::build(f.params, o.jitter);
    f.data = ConditionData::from_dataset(sim.dataset, 0);
    f.start = initial_posteriors(mp, sim.dataset).samples[0];
    return f;
}

void BM_EstepSerial(benchmark::State& state) {
    const Fixture f = make_fixture(state.range(0), state.range(1));
    FitOptions o;
    for (auto _ : state) {
        auto posts = f.start;
        kernels::estep_serial(f.params, f.cache, f.data, posts, o);
        benchmark::DoNotOptimize(posts.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EstepOpenmp(benchmark::State& state) {
    const Fixture f = make_fixture(state.range(0), state.range(1));
    FitOptions o;
    o.threads = static_cast<int>(state.range(2));
    for (auto _ : state) {
        auto posts = f.start;
        kernels::estep_openmp(f.params, f.cache, f.data, posts, o);
        benchmark::DoNotOptimize(posts.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ElboSerial(benchmark::State& state) {
    Fixture f = make_fixture(state.range(0), state.range(1));
    kernels::estep_serial(f.params, f.cache, f.data, f.start, FitOptions{});
    for (auto _ : state) benchmark::DoNotOptimize(kernels::elbo_terms_serial(f.params, f.cache, f.data, f.start));
}

void BM_ElboOpenmp(benchmark::State& state) {
    Fixture f = make_fixture(state.range(0), state.range(1));
    kernels::estep_serial(f.params, f.cache, f.data, f.start, FitOptions{});
    const int threads = static_cast<int>(state.range(2));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::elbo_terms_openmp(f.params, f.cache, f.data, f.start, threads));
    }
}

}  // namespace

// Arguments: replicates, features, threads (OpenMP variants only).
BENCHMARK(BM_EstepSerial)->Args({200, 64})->Args({400, 64})->Args({200, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EstepOpenmp)
    ->ArgsProduct({{200, 400}, {64, 128}, {1, 2, 4}})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ElboSerial)->Args({200, 64})->Args({400, 128})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ElboOpenmp)->Args({200, 64, 2})->Args({400, 128, 2})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
