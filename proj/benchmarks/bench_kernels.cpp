#include <benchmark/benchmark.h>

#include "xva/autoencoder.hpp"
#include "xva/classifier.hpp"
#include "xva/layers.hpp"
#include "xva/synth.hpp"

namespace {

using namespace xva;

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.gaussian());
  return t;
}

// Args: channels in, channels out, extent, stride.
void BM_Conv2dForward(benchmark::State& state) {
  const auto cin = std::size_t(state.range(0)), cout = std::size_t(state.range(1));
  const auto n = std::size_t(state.range(2)), stride = std::size_t(state.range(3));
  Conv2d<float> layer(cin, cout, 3, 1, stride);
  Rng rng(1);
  layer.init(rng, 1.0);
  const auto x = random_tensor({cin, n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
}
BENCHMARK(BM_Conv2dForward)->Args({3, 32, 256, 2})->Args({32, 64, 128, 2})->Args({64, 64, 64, 2})
    ->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto cin = std::size_t(state.range(0)), cout = std::size_t(state.range(1));
  const auto n = std::size_t(state.range(2)), stride = std::size_t(state.range(3));
  Conv2d<float> layer(cin, cout, 3, 1, stride);
  Rng rng(1);
  layer.init(rng, 1.0);
  const auto x = random_tensor({cin, n, n}, 2);
  const auto gy = random_tensor(layer.output_shape(x.shape()), 3);
  for (auto _ : state) benchmark::DoNotOptimize(layer.backward(x, gy));
}
BENCHMARK(BM_Conv2dBackward)->Args({3, 32, 256, 2})->Args({32, 64, 128, 2})->Args({64, 64, 64, 2})
    ->Unit(benchmark::kMillisecond);

// Args: channels in, channels out, input extent (stride 2 doubles it).
void BM_ConvTranspose2dForward(benchmark::State& state) {
  const auto cin = std::size_t(state.range(0)), cout = std::size_t(state.range(1));
  const auto n = std::size_t(state.range(2));
  ConvTranspose2d<float> layer(cin, cout, 3, {2, 1, 1, 1});
  Rng rng(1);
  layer.init(rng, 1.0);
  const auto x = random_tensor({cin, n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
}
BENCHMARK(BM_ConvTranspose2dForward)->Args({128, 128, 8})->Args({64, 32, 64})->Args({32, 3, 128})
    ->Unit(benchmark::kMillisecond);

// Args: sequence length, channels.
void BM_Conv1dForward(benchmark::State& state) {
  const auto t = std::size_t(state.range(0)), c = std::size_t(state.range(1));
  Conv1d<float> layer(c, c, 3, 1);
  Rng rng(1);
  layer.init(rng, 1.0);
  const auto x = random_tensor({t, c}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
}
BENCHMARK(BM_Conv1dForward)->Args({60, 64})->Args({300, 128})->Args({1200, 128});

void BM_XvaFuse(benchmark::State& state) {
  const auto t = std::size_t(state.range(0)), c = std::size_t(state.range(1));
  const auto a = random_tensor({t, c}, 1);
  const auto b = random_tensor({t, c}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(xva_fuse(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_XvaFuse)->Args({60, 64})->Args({300, 64})->Args({1200, 64})->Complexity();

void BM_XvaFuseBackward(benchmark::State& state) {
  const auto t = std::size_t(state.range(0)), c = std::size_t(state.range(1));
  const auto a = random_tensor({t, c}, 1);
  const auto b = random_tensor({t, c}, 2);
  XvaTape<float> tape;
  const auto y = xva_fuse(a, b, tape);
  const auto gy = random_tensor(y.shape(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(xva_fuse_backward(tape, gy));
}
BENCHMARK(BM_XvaFuseBackward)->Args({60, 64})->Args({300, 64});

// Unit-batch Adam steps of the default two-view classifier; items are steps.
void BM_ClassifierStep(benchmark::State& state) {
  ClassifierConfig cfg;
  ClassifierModel<float> model(cfg);
  model.init();
  std::vector<MultiViewSample<float>> pair(2);
  for (int label = 0; label < 2; ++label) {
    pair[label].label = label;
    for (std::size_t v = 0; v < cfg.views; ++v)
      pair[label].views.push_back(
          {static_cast<ViewId>(v),
           random_tensor({std::size_t(state.range(0)), cfg.nz}, 10 + 2 * v + label)});
  }
  ClassifierTrainOptions opts;
  opts.epochs = 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        train_classifier(model, std::span<const MultiViewSample<float>>(pair), opts));
  state.SetItemsProcessed(state.iterations() * 2);
}
BENCHMARK(BM_ClassifierStep)->Arg(60)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_AeEncode(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  AEModel<float> ae({32, n, n});
  Rng rng(1);
  ae.init(rng);
  const auto frame = synth_frames(1, n, n, 2).front();
  for (auto _ : state) benchmark::DoNotOptimize(ae.encode(frame));
}
BENCHMARK(BM_AeEncode)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
