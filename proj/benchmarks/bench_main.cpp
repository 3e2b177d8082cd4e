#include "sthdr/model.hpp"
#include "sthdr/ops.hpp"
#include "sthdr/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace sthdr;

namespace {

Tensor uniform(const Shape& shape, std::uint64_t seed, Real lo = -1, Real hi = 1) {
    Rng rng(seed);
    Tensor t(shape);
    for (Real& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

std::array<Tensor, 3> frames(int size) {
    std::array<Tensor, 3> in;
    for (std::size_t i = 0; i < 3; ++i) in[i] = uniform({6, size, size}, 10 + i, 0, 1);
    return in;
}

void BM_Conv3x3(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
    const Var x = Var::constant(uniform({c, s, s}, 1));
    const Var w = Var::constant(uniform({c, c, 3, 3}, 2));
    const Var b = Var::constant(uniform({c}, 3));
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1).value().ptr());
    state.SetItemsProcessed(state.iterations() * s * s);
}
BENCHMARK(BM_Conv3x3)->Args({8, 64})->Args({32, 64})->Args({32, 128})->Unit(benchmark::kMillisecond);

void BM_DeformConv(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
    const Var x = Var::constant(uniform({c, s, s}, 1));
    const Var off = Var::constant(uniform({18, s, s}, 2, -2, 2));
    const Var mask = Var::constant(uniform({9, s, s}, 3, 0, 1));
    const Var w = Var::constant(uniform({c, c, 3, 3}, 4));
    const Var b = Var::constant(uniform({c}, 5));
    for (auto _ : state) benchmark::DoNotOptimize(deform_conv2d(x, off, mask, w, b).value().ptr());
    state.SetItemsProcessed(state.iterations() * s * s);
}
BENCHMARK(BM_DeformConv)->Args({8, 64})->Args({32, 64})->Unit(benchmark::kMillisecond);

void BM_TinyForward(benchmark::State& state) {
    const Model model(ModelConfig::for_variant(Variant::SCM_MS, true), 0);
    const auto in = frames(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(model.predict(in).ptr());
}
BENCHMARK(BM_TinyForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TinyTrainStep(benchmark::State& state) {
    Model model(ModelConfig::for_variant(Variant::SCM_MS, true), 0);
    TrainState st = init_train_state(model);
    const TrainConfig cfg = TrainConfig::tiny();
    SamplePatch p;
    p.inputs = frames(64);
    p.gt = uniform({3, 64, 64}, 20, 0, 1);
    p.size = 64;
    const std::vector<SamplePatch> batch{p};
    for (auto _ : state) benchmark::DoNotOptimize(train_step(model, st, cfg, batch, 1e-4).loss.total);
}
BENCHMARK(BM_TinyTrainStep)->Unit(benchmark::kMillisecond);

void BM_DefaultForward(benchmark::State& state) {
    const Model model(ModelConfig::for_variant(Variant::SCM_MS), 0);
    const auto in = frames(64);
    for (auto _ : state) benchmark::DoNotOptimize(model.predict(in).ptr());
}
BENCHMARK(BM_DefaultForward)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();
