#include <benchmark/benchmark.h>

#include <vector>

#include "actrace/activity.hpp"
#include "actrace/classifier.hpp"
#include "actrace/net.hpp"
#include "actrace/rng.hpp"
#include "actrace/similarity.hpp"

using namespace actrace;

namespace {

FeatureVector random_fv(Rng& rng) {
    FeatureVector fv;
    fv.zeta.assign(kZetaDim, 0.0);
    double n2 = 0;
    for (int k = 0; k < 6; ++k) {
        const auto i = rng.below(kZetaDim);
        fv.zeta[i] = rng.uniform(0.1, 1.0);
        n2 += fv.zeta[i] * fv.zeta[i];
    }
    for (auto& z : fv.zeta) z /= std::sqrt(n2);
    for (int k = 0; k < 40; ++k)
        fv.mu[rng.below(1 << 20)] = 1 + static_cast<std::int64_t>(rng.below(30));
    return fv;
}

}  // namespace

static void BM_Sim(benchmark::State& state) {
    Rng rng(1);
    const SimilarityParams p;
    const auto a = random_fv(rng);
    const auto b = random_fv(rng);
    for (auto _ : state) benchmark::DoNotOptimize(sim(a, b, p));
}
BENCHMARK(BM_Sim);

static void BM_MuIndexQuery(benchmark::State& state) {
    Rng rng(2);
    const SimilarityParams p;
    std::vector<MuMap> owners;
    for (int i = 0; i < state.range(0); ++i) owners.push_back(random_fv(rng).mu);
    const auto ix = MuIndex::build(owners, p);
    const auto q = random_fv(rng).mu;
    for (auto _ : state) benchmark::DoNotOptimize(ix.query(q, 50.0));
}
BENCHMARK(BM_MuIndexQuery)->Arg(1000)->Arg(10000);

static void BM_MuBruteScan(benchmark::State& state) {
    Rng rng(2);
    const SimilarityParams p;
    std::vector<MuMap> owners;
    for (int i = 0; i < state.range(0); ++i) owners.push_back(random_fv(rng).mu);
    const auto q = random_fv(rng).mu;
    for (auto _ : state) {
        int hits = 0;
        for (const auto& o : owners)
            if (p.theta_mu * cos_mu(q, o, p) >= 50.0) ++hits;
        benchmark::DoNotOptimize(hits);
    }
}
BENCHMARK(BM_MuBruteScan)->Arg(1000)->Arg(10000);

static void BM_ExtractTightClusters(benchmark::State& state) {
    Rng rng(3);
    const SimilarityParams sp;
    std::vector<FeatureVector> window;
    for (int i = 0; i < state.range(0); ++i) {
        auto fv = random_fv(rng);
        fv.ts_us = i;
        // push vectors toward a handful of shared directions
        fv.zeta.assign(kZetaDim, 0.0);
        fv.zeta[rng.below(6)] = 1.0;
        window.push_back(std::move(fv));
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(extract_tight_clusters(window, sp));
}
BENCHMARK(BM_ExtractTightClusters)->Arg(64)->Arg(256);

static void BM_NetForward(benchmark::State& state) {
    NetConfig cfg;
    cfg.inputs = DeriveParams{}.dim();
    cfg.classes = 3;
    Net net(cfg);
    Rng rng(4);
    std::vector<double> x(cfg.inputs);
    for (auto& v : x) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_NetForward);

BENCHMARK_MAIN();
