#pragma once

#include <string>
#include <vector>

#include "cscore/codec/codec.hpp"
#include "cscore/data/synthetic.hpp"
#include "cscore/nn/optim.hpp"

namespace cs::codec {

// Stage 1: fit the codec on motion windows alone.

// Reconstruction bar: held-out mean absolute error per channel per frame
// must undercut this fraction of the held-out mean per-channel std.
inline constexpr double kReconTargetFraction = 0.15;

struct CodecTrainConfig {
  std::int64_t steps = 1200;
  std::int64_t batch = 8;
  double ema_decay = 0.995;
  std::int64_t log_every = 100;
  std::int64_t max_eval_windows = 32;
  std::uint64_t seed = 7;
  nn::AdamConfig adam;  // total_steps is overridden with steps
  bool verbose = true;
  std::string nan_dump_path;  // batch dump target on divergence, may be empty
};

// Cut every clip with the given role into T-frame motion windows.
std::vector<TensorF> collect_windows(const data::Dataset& ds,
                                     data::ClipRole role, std::int64_t T,
                                     std::int64_t stride);

double held_out_l1_target(const std::vector<TensorF>& windows);

// Mean |decoded - truth| per entry, through the streaming decoder.
double held_out_l1(const CodecModel& model,
                   const std::vector<TensorF>& windows);

struct CodecTrainResult {
  std::int64_t steps_run = 0;
  CodecLosses last_batch;       // components of the final training batch
  double held_out_l1 = 0.0;     // with averaged weights
  double held_out_target = 0.0;
  bool reached_target = false;
};

CodecTrainResult train_codec(CodecModel& model,
                             const std::vector<TensorF>& train_windows,
                             const std::vector<TensorF>& held_out_windows,
                             const CodecTrainConfig& tcfg);

}  // namespace cs::codec
