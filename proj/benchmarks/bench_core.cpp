#include <benchmark/benchmark.h>

#include <vector>

#include "geoadapt/adapt.hpp"
#include "geoadapt/geocluster.hpp"
#include "geoadapt/model.hpp"
#include "geoadapt/stats.hpp"

using namespace geoadapt;

namespace {

text::Vocabulary bench_vocab() {
    std::vector<std::string> tokens = {text::kPadToken, text::kClsToken, text::kMaskToken,
                                       text::kUnkToken};
    for (int i = 0; i < 96; ++i) tokens.push_back("w" + std::to_string(i));
    return text::Vocabulary::from_id_order(std::move(tokens));
}

model::ModelBundle<float> bench_bundle(size_t d_model, size_t layers) {
    model::EncoderConfig cfg;
    cfg.n_layers = layers;
    cfg.d_model = d_model;
    cfg.n_heads = 4;
    cfg.max_len = 24;
    cfg.dropout = 0.0;
    return model::init_bundle<float>(cfg, bench_vocab(), 12, 3, 7);
}

std::vector<std::vector<int>> bench_docs(size_t n, size_t len) {
    Rng rng(3);
    std::vector<std::vector<int>> docs(n, std::vector<int>(len));
    for (auto& d : docs)
        for (int& t : d) t = text::Vocabulary::kNumSpecials + int(rng.uniform_int(96));
    return docs;
}

}  // namespace

static void BM_Gemm(benchmark::State& state) {
    const size_t n = size_t(state.range(0));
    std::vector<float> a(n * n), b(n * n), c(n * n);
    Rng rng(1);
    for (auto& v : a) v = float(rng.normal());
    for (auto& v : b) v = float(rng.normal());
    for (auto _ : state) {
        nn::gemm(a.data(), b.data(), c.data(), n, n, n, false, false, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(2 * n * n * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

static void BM_ForwardEval(benchmark::State& state) {
    auto m = bench_bundle(size_t(state.range(0)), 2);
    auto docs = bench_docs(16, 18);
    model::Batch batch = model::make_batch(docs, 24);
    for (auto _ : state) {
        nn::Tensor<float> h = model::hidden_eval(m, batch);
        benchmark::DoNotOptimize(h.data.data());
    }
}
BENCHMARK(BM_ForwardEval)->Arg(48)->Arg(64);

static void BM_TrainStep(benchmark::State& state) {
    auto m = bench_bundle(size_t(state.range(0)), 2);
    auto docs = bench_docs(16, 18);
    std::vector<std::array<double, 2>> geo(docs.size(), {0.2, -0.4});
    adapt::MaskPolicy policy;
    Rng rng(9);
    for (auto _ : state) {
        nn::Tape<float> tape;
        adapt::MaskedBatch mb = adapt::mask_batch(docs, m.vocab, policy, 24, rng);
        model::ForwardOptions opts;
        auto losses = adapt::build_losses(tape, m, mb, adapt::Regime::GeoAdaW, geo, opts);
        tape.backward(losses.total);
        nn::harvest_grads(tape, m.store);
        m.store.adam_step(1e-3);
    }
}
BENCHMARK(BM_TrainStep)->Arg(48)->Arg(64);

static void BM_KMeans(benchmark::State& state) {
    Rng rng(5);
    std::vector<cluster::GeoPoint> pts(size_t(state.range(0)));
    for (auto& p : pts) p = {rng.uniform(4.0, 17.0), rng.uniform(43.0, 59.0)};
    for (auto _ : state) {
        cluster::ClusterModel m = cluster::fit_kmeans(pts, 12, 11);
        benchmark::DoNotOptimize(m.centroids.data());
    }
}
BENCHMARK(BM_KMeans)->Arg(1000)->Arg(10000);

static void BM_Geodesic(benchmark::State& state) {
    Rng rng(7);
    std::vector<cluster::GeoPoint> a(1024), b(1024);
    for (auto& p : a) p = {rng.uniform(-180.0, 180.0), rng.uniform(-89.0, 89.0)};
    for (auto& p : b) p = {rng.uniform(-180.0, 180.0), rng.uniform(-89.0, 89.0)};
    size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cluster::geodesic_km(a[i & 1023], b[i & 1023]));
        ++i;
    }
}
BENCHMARK(BM_Geodesic);

static void BM_McNemar(benchmark::State& state) {
    Rng rng(13);
    std::vector<uint8_t> a(size_t(state.range(0))), b(a.size());
    for (auto& v : a) v = rng.uniform() < 0.6;
    for (auto& v : b) v = rng.uniform() < 0.55;
    for (auto _ : state) benchmark::DoNotOptimize(stats::mcnemar(a, b));
}
BENCHMARK(BM_McNemar)->Arg(240);

BENCHMARK_MAIN();
