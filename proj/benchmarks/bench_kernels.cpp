#include <benchmark/benchmark.h>

#include "cscore/codec/codec.hpp"
#include "cscore/nn/infer.hpp"
#include "cscore/nn/rng.hpp"
#include "cscore/nn/tape.hpp"
#include "cscore/sched/schedule.hpp"

namespace {

using cs::TensorF;

TensorF random_rows(std::int64_t n, std::int64_t c, std::uint64_t seed) {
  cs::rng::Rng rng(seed);
  TensorF t(n, c);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

void BM_AffineRows(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const TensorF x = random_rows(n, 64, 1);
  const TensorF w = random_rows(64, 64, 2);
  const TensorF b = random_rows(1, 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(cs::nn::affine_rows(x, w, b));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AffineRows)->Arg(16)->Arg(176)->Arg(1500);

void BM_LayerNormRows(benchmark::State& state) {
  const TensorF x = random_rows(state.range(0), 64, 4);
  const TensorF g = random_rows(1, 64, 5);
  const TensorF b = random_rows(1, 64, 6);
  for (auto _ : state)
    benchmark::DoNotOptimize(cs::nn::layer_norm_rows(x, g, b));
}
BENCHMARK(BM_LayerNormRows)->Arg(176);

void BM_EncodeWindow(benchmark::State& state) {
  const cs::codec::CodecConfig cfg;
  const cs::codec::CodecModel model(cfg, 11);
  const TensorF window = random_rows(cfg.T, cs::codec::kMotionDim, 7);
  for (auto _ : state)
    benchmark::DoNotOptimize(model.encode_window(window));
}
BENCHMARK(BM_EncodeWindow)->Unit(benchmark::kMillisecond);

// One frame through the streaming decoder, amortized over a full window.
void BM_DecodeFrame(benchmark::State& state) {
  const cs::codec::CodecConfig cfg;
  const cs::codec::CodecModel model(cfg, 11);
  const TensorF window = random_rows(cfg.T, cs::codec::kMotionDim, 8);
  const cs::codec::EncodeResult enc = model.encode_window(window);
  for (auto _ : state) {
    cs::codec::DecoderSession session(model);
    for (std::int64_t t = 0; t < cfg.T; ++t)
      benchmark::DoNotOptimize(session.decode_upto(enc.tokens, t + 1));
  }
  state.SetItemsProcessed(state.iterations() * cfg.T);
}
BENCHMARK(BM_DecodeFrame)->Unit(benchmark::kMillisecond);

// Incremental self-attention step with a warm cache.
void BM_TransformerStep(benchmark::State& state) {
  cs::nn::ParameterStore store;
  cs::nn::TransformerConfig tcfg;
  tcfg.depth = 2;
  tcfg.width = 64;
  tcfg.heads = 4;
  cs::rng::Rng rng(9);
  cs::nn::register_transformer(store, "tf", tcfg, rng);
  const TensorF row = random_rows(1, 64, 10);
  for (auto _ : state) {
    cs::nn::TransformerSession session(store, "tf", tcfg);
    for (std::int64_t t = 0; t < state.range(0); ++t)
      benchmark::DoNotOptimize(session.step(row));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TransformerStep)->Arg(176)->Unit(benchmark::kMillisecond);

void BM_BuildSchedule(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(cs::sched::build_schedule(100, {1, 25, 50, 100}));
}
BENCHMARK(BM_BuildSchedule);

void BM_TapeTrainingStep(benchmark::State& state) {
  const cs::codec::CodecConfig cfg;
  cs::codec::CodecModel model(cfg, 11);
  const TensorF window = random_rows(cfg.T, cs::codec::kMotionDim, 12);
  for (auto _ : state) {
    cs::nn::Tape<float> tape;
    const auto att = cs::nn::attach_params<float>(tape, model.params());
    const auto loss = model.build_loss(tape, att, {window}, false);
    tape.backward(loss.total);
    model.params().zero_gradients();
  }
}
BENCHMARK(BM_TapeTrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
