#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cscore/codec/codec.hpp"
#include "cscore/nn/infer.hpp"
#include "cscore/nn/params.hpp"
#include "cscore/nn/rng.hpp"
#include "cscore/retrieval/retriever.hpp"
#include "cscore/sched/schedule.hpp"

namespace cs::gen {

// Streaming autoregressive token generator: predicts hierarchical motion
// tokens in emission-schedule order, cross-attending to audio, the previous
// window's motion, and the retrieved style prior.

struct GenConfig {
  std::int64_t depth = 2;
  std::int64_t width = 64;
  std::int64_t heads = 4;
  double cfg_dropout = 0.1;   // train-time chance of dropping all streams
  std::int64_t lookahead = 0; // audio frames beyond t readable at inference
  std::vector<double> lambda_levels;  // per-level CE weights; empty = all 1
  double lambda_p = 0.1;              // prior supervision weight
  bool supervise_first_pass = false;  // also penalize the pass-one prior

  void validate() const;
  double level_weight(std::int64_t level) const;  // level is 1-based
};

struct SamplerConfig {
  double temperature = 0.9;
  std::int64_t top_k = 32;
  double cfg_scale = 1.5;
  std::uint64_t seed = 0;
};

// uncond + scale * (cond - uncond); scale 1 returns cond bit-exactly and
// scale 0 returns uncond bit-exactly.
std::vector<float> cfg_combine(const std::vector<float>& cond,
                               const std::vector<float>& uncond, double scale);

// Temperature-scaled, top-k-truncated categorical draw. Ties at the k-th
// logit resolve toward lower class indices; fully deterministic given the
// rng state.
std::int64_t sample_token(const std::vector<float>& logits,
                          const SamplerConfig& sampler, rng::Rng& rng);

// Retriever and generator parameters live in one store (they train
// jointly); the codec is borrowed, frozen, and never optimized here.
class GeneratorModel {
 public:
  GeneratorModel(const codec::CodecModel& codec,
                 retrieval::RetrieverConfig rcfg, GenConfig gcfg,
                 std::uint64_t seed);

  // the retriever member holds a reference into store_
  GeneratorModel(const GeneratorModel&) = delete;
  GeneratorModel& operator=(const GeneratorModel&) = delete;

  const codec::CodecModel& codec() const { return codec_; }
  const GenConfig& config() const { return cfg_; }
  const retrieval::RetrieverModel& retriever() const { return retriever_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }
  const sched::EmissionSchedule& schedule() const { return schedule_; }

  nn::TransformerConfig token_tf_config() const;

  // Token-transformer input row for predicting `due`: embedding of the
  // previously sampled class (start class = 256 at window start) plus the
  // due token's level embedding and frame position.
  TensorF context_row(std::int64_t prev_class,
                      const sched::TokenAddress& due) const;

  // Condition-stream embeddings (eager, inference path).
  TensorF embed_audio_rows(const TensorF& audio_rows,
                           std::int64_t first_frame) const;
  TensorF embed_history(const TensorF& prev_motion) const;  // empty = padded
  TensorF embed_prior_rows(const TensorF& prior) const;
  TensorF null_stream(const std::string& name) const;  // audio|hist|prior

  // logits for one transformer output row
  std::vector<float> output_logits(const TensorF& row) const;

  std::int64_t start_class() const { return codec_.config().classes(); }

  const TensorF& frame_posenc() const { return posenc_; }
  const TensorF& prior_posenc2() const { return posenc2_; }

 private:
  const codec::CodecModel& codec_;
  GenConfig cfg_;
  nn::ParameterStore store_;
  retrieval::RetrieverModel retriever_;
  sched::EmissionSchedule schedule_;
  TensorF posenc_;   // T x width
  TensorF posenc2_;  // 2T x width
};

struct StreamFrame {
  std::int64_t frame = 0;  // global index across windows
  TensorF motion;          // 1 x 137
  std::int64_t emit_ns = 0;
};

// Which modalities the retrieval query carries. The masked block is zeroed
// at query-construction time; an ablation knob, not a trained mode.
enum class QueryMode { kFull, kAudioOnly, kMotionOnly };

QueryMode parse_query_mode(const std::string& name);
const char* query_mode_name(QueryMode mode);

// One live stream: audio frames in, motion frames out, bit-reproducible
// for a fixed (weights, library, sampler seed, audio) tuple.
class GenerationSession {
 public:
  GenerationSession(const GeneratorModel& model,
                    const retrieval::StyleLibrary& library,
                    SamplerConfig sampler, std::int64_t lookahead = -1,
                    QueryMode query_mode = QueryMode::kFull);

  // Feed one 1 x 512 audio frame; returns any motion frames that became
  // emittable (with lookahead the first k pushes return none).
  std::vector<StreamFrame> push_audio(const TensorF& audio_row);

  // The audio stream ended: emit the remaining frames (those whose
  // lookahead was never satisfied), using the audio that exists.
  std::vector<StreamFrame> flush();

  std::int64_t emitted_frames() const { return global_emitted_; }
  std::int64_t lookahead() const { return lookahead_; }

 private:
  void start_window_();
  void emit_one_(std::vector<StreamFrame>& out);
  retrieval::QueryHistory query_history_() const;

  const GeneratorModel& model_;
  const codec::CodecModel& codec_;
  SamplerConfig sampler_;
  std::int64_t lookahead_ = 0;
  QueryMode query_mode_ = QueryMode::kFull;
  rng::Rng rng_;

  retrieval::LibraryMemory memory_;
  nn::TransformerSession cond_;
  std::optional<nn::TransformerSession> uncond_;
  std::optional<codec::DecoderSession> decoder_;
  codec::TokenHierarchy tokens_;

  TensorF prev_audio_, prev_motion_;  // last full window, empty at start
  TensorF cur_audio_, cur_motion_;    // current window so far
  bool have_prev_ = false;
  std::int64_t cur_frame_ = 0;      // frames emitted in current window
  std::int64_t audio_fed_ = 0;      // rows pushed into cond audio stream
  std::int64_t prev_class_ = 0;     // last sampled class (start class at S)
  std::int64_t next_token_ = 0;     // schedule position of the next token
  std::int64_t global_emitted_ = 0;
};

}  // namespace cs::gen
