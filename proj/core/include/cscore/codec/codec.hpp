#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscore/nn/infer.hpp"
#include "cscore/nn/params.hpp"
#include "cscore/nn/tape.hpp"
#include "cscore/nn/transformer.hpp"
#include "cscore/sched/schedule.hpp"

namespace cs::codec {

// motion layout: expression latents then pose (head rotation, head
// translation, shoulder translation)
inline constexpr std::int64_t kMotionDim = 137;
inline constexpr std::int64_t kExpressionDim = 128;
inline constexpr std::int64_t kPoseOffset = 128;
inline constexpr std::int64_t kPoseDim = 9;
inline constexpr std::int64_t kAudioDim = 512;

struct CodecConfig {
  std::int64_t T = 100;
  std::vector<std::int64_t> resolutions = {1, 25, 50, 100};
  std::int64_t p = 8;
  double lambda_v = 1.0;
  double lambda_j = 0.5;
  double lambda_e = 0.02;
  std::int64_t enc_depth = 2;
  std::int64_t dec_depth = 2;
  std::int64_t width = 64;
  std::int64_t heads = 4;

  std::int64_t levels() const {
    return static_cast<std::int64_t>(resolutions.size());
  }
  std::int64_t token_budget() const {
    std::int64_t s = 0;
    for (std::int64_t r : resolutions) s += r;
    return s;
  }
  std::int64_t classes() const { return std::int64_t{1} << p; }
  double code_magnitude() const;  // 1/sqrt(p)
  void validate() const;
};

// One level's emitted codes. Rows may be a prefix of the level's full row
// count while a window is still streaming in.
struct CodeLevel {
  std::int64_t level = 0;      // 1-based, matching TokenAddress
  std::int64_t full_rows = 0;  // r_l
  std::int64_t bits_per_row = 0;
  std::vector<std::uint8_t> bits;  // rows_present x p, values 0/1

  std::int64_t rows_present() const {
    return bits_per_row == 0
               ? 0
               : static_cast<std::int64_t>(bits.size()) / bits_per_row;
  }
  std::uint8_t bit(std::int64_t row, std::int64_t b) const {
    return bits[static_cast<std::size_t>(row * bits_per_row + b)];
  }
  // bits packed LSB-first into an integer class label
  std::int64_t class_index(std::int64_t row) const;
  void append_class(std::int64_t cls);
  // rows_present x p with entries +/- magnitude
  TensorF dequantized(double magnitude) const;
};

struct TokenHierarchy {
  std::vector<CodeLevel> levels;

  static TokenHierarchy empty_like(const CodecConfig& cfg);
  bool complete() const;
  std::int64_t total_rows_present() const;
};

struct CodecLosses {
  double recon = 0.0;
  double velocity = 0.0;
  double jitter = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

// One level's quantization of raw feature rows, standalone: project,
// L2-normalize, sign-binarize with ties and zero rows going positive.
// This is the same op sequence the encoder applies per level, exposed so
// the quantizer's geometry is testable without a trained model.
struct BsqRows {
  std::vector<std::uint8_t> bits;  // rows x p, values 0/1
  TensorF dequantized;             // rows x p, entries +/- magnitude
};
BsqRows bsq_quantize(const TensorF& features, const TensorF& projection,
                     double magnitude);

struct EncodeResult {
  TokenHierarchy tokens;
  TensorF features;               // encoder output f, T x p
  TensorF residual;               // what is left after all levels, T x p
  std::vector<TensorF> relaxed;   // sigmoid of projected logits, per level
  std::vector<double> residual_mse;  // mean squared norm before each level
                                     // subtraction, then the final value
};

template <typename S>
struct CodecLossNodes {
  typename nn::Tape<S>::Id recon, velocity, jitter, entropy, total;
};

// Non-causal encoder, per-level residual sign quantization on a sphere,
// causal decoder. One instance owns its parameters; training and
// inference views share them.
class CodecModel {
 public:
  CodecModel(CodecConfig cfg, std::uint64_t seed);

  const CodecConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  // Offline analysis pass over a full window (T x 137): tokens plus the
  // intermediates the loss and the invariants are stated over.
  EncodeResult encode_window(const TensorF& window) const;

  // Decode frames [0, upto_frame) from a possibly partial hierarchy.
  // Throws StateError when a required code row is missing. Prefixes are
  // bit-identical across calls with different upto_frame or later-row
  // content by construction (fresh replay of an incremental session).
  TensorF decode_causal(const TokenHierarchy& tokens,
                        std::int64_t upto_frame) const;

  // f-hat: sum over levels of the causally upsampled dequantized rows;
  // needs every row covering frames < upto_frame
  TensorF upsampled_sum(const TokenHierarchy& tokens,
                        std::int64_t upto_frame) const;

  // Training/check graph over a batch of windows. relaxed_quantizer
  // replaces the hard sign forward with identity so the whole loss is
  // differentiable (the straight-through estimator's reference function).
  template <typename S>
  CodecLossNodes<S> build_loss(nn::Tape<S>& tape,
                               const nn::AttachedParams<S>& att,
                               const std::vector<TensorF>& batch_windows,
                               bool relaxed_quantizer) const;

  // loss numbers with hard bits, no gradient bookkeeping kept
  CodecLosses eval_loss(const std::vector<TensorF>& batch_windows) const;

  nn::TransformerConfig encoder_tf() const;
  nn::TransformerConfig decoder_tf() const;
  const TensorF& posenc() const { return posenc_; }

 private:
  template <typename S>
  friend struct CodecGraph;

  CodecConfig cfg_;
  nn::ParameterStore store_;
  TensorF posenc_;  // T x width
};

// Streaming decoder: feed rows as they are emitted, pull frames as they
// become decodable. Bit-identical to decode_causal prefixes.
class DecoderSession {
 public:
  explicit DecoderSession(const CodecModel& model);

  // Decode frames [decoded, upto_frame) given the rows present in tokens.
  // Returns the newly decoded rows ((upto-decoded) x 137).
  TensorF decode_upto(const TokenHierarchy& tokens, std::int64_t upto_frame);
  std::int64_t decoded_frames() const { return frames_; }

 private:
  const CodecModel& model_;
  nn::TransformerSession session_;
  std::int64_t frames_ = 0;
};

}  // namespace cs::codec
