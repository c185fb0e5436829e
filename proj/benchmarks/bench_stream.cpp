#include <benchmark/benchmark.h>

#include "cscore/data/synthetic.hpp"
#include "cscore/gen/generator.hpp"
#include "cscore/retrieval/retriever.hpp"

namespace {

// Whole-pipeline per-frame cost: retrieval, token sampling (with the
// guidance twin), and causal decoding, against a library of the given
// total row count. The 25 fps budget is 40 ms per frame.

struct StreamFixture {
  cs::codec::CodecModel codec{cs::codec::CodecConfig{}, 3};
  cs::retrieval::RetrieverConfig rcfg;
  cs::gen::GenConfig gcfg;
  cs::gen::GeneratorModel model{codec, rcfg, gcfg, 5};
  cs::data::SyntheticClip drive;

  StreamFixture() : drive(make_drive()) {}

  static cs::data::SyntheticClip make_drive() {
    return cs::data::synthesize_clip(cs::data::make_identity(77), 78, 100);
  }

  cs::retrieval::StyleLibrary library(std::int64_t rows) const {
    cs::retrieval::StyleLibrary lib;
    std::int64_t made = 0;
    std::uint64_t seed = 100;
    while (made < rows) {
      const std::int64_t n = std::min<std::int64_t>(500, rows - made);
      const cs::data::SyntheticClip clip =
          cs::data::synthesize_clip(cs::data::make_identity(99), seed++, n);
      lib.add({clip.audio, clip.motion, "bench"});
      made += n;
    }
    return lib;
  }
};

void BM_StreamFrame(benchmark::State& state) {
  static const StreamFixture fx;
  const cs::retrieval::StyleLibrary lib = fx.library(state.range(0));
  cs::gen::SamplerConfig sampler;
  sampler.cfg_scale = state.range(1) != 0 ? 1.5 : 1.0;
  const std::int64_t T = fx.codec.config().T;
  for (auto _ : state) {
    cs::gen::GenerationSession session(fx.model, lib, sampler, 0);
    for (std::int64_t i = 0; i < T; ++i) {
      cs::TensorF row(1, cs::codec::kAudioDim);
      for (std::int64_t c = 0; c < cs::codec::kAudioDim; ++c)
        row.at(0, c) = fx.drive.audio.at(i, c);
      benchmark::DoNotOptimize(session.push_audio(row));
    }
  }
  state.SetItemsProcessed(state.iterations() * T);
  state.counters["ms_per_frame"] = benchmark::Counter(
      static_cast<double>(state.iterations() * T),
      benchmark::Counter::kIsRate | benchmark::Counter::kInvert);
}
BENCHMARK(BM_StreamFrame)
    ->Args({150, 1})
    ->Args({1500, 1})
    ->Args({1500, 0})
    ->Unit(benchmark::kMillisecond);

void BM_LibraryEncode(benchmark::State& state) {
  static const StreamFixture fx;
  const cs::retrieval::StyleLibrary lib = fx.library(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(fx.model.retriever().encode_library(lib));
}
BENCHMARK(BM_LibraryEncode)->Arg(1500)->Unit(benchmark::kMillisecond);

void BM_Retrieve(benchmark::State& state) {
  static const StreamFixture fx;
  const cs::retrieval::StyleLibrary lib = fx.library(state.range(0));
  const cs::retrieval::LibraryMemory memory =
      fx.model.retriever().encode_library(lib);
  const std::int64_t T = fx.codec.config().T;
  cs::retrieval::QueryHistory hist;
  hist.audio = cs::TensorF(T, cs::codec::kAudioDim);
  hist.motion = cs::TensorF(T, cs::codec::kMotionDim);
  for (std::int64_t i = 0; i < T; ++i) {
    for (std::int64_t c = 0; c < cs::codec::kAudioDim; ++c)
      hist.audio.at(i, c) = fx.drive.audio.at(i, c);
    for (std::int64_t c = 0; c < cs::codec::kMotionDim; ++c)
      hist.motion.at(i, c) = fx.drive.motion.at(i, c);
  }
  hist.pad.assign(static_cast<std::size_t>(T), 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        fx.model.retriever().retrieve(memory, hist, T + 1));
}
BENCHMARK(BM_Retrieve)->Arg(150)->Arg(1500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
