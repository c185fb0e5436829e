#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscore/data/synthetic.hpp"
#include "cscore/gen/generator.hpp"
#include "cscore/nn/optim.hpp"
#include "cscore/retrieval/retriever.hpp"

namespace cs::gen {

// Stage 2: the codec is frozen, the retriever and the token generator
// train jointly with teacher forcing plus a second retrieval pass over
// self-generated history.

// Exit bar for the cross-entropy sanity check: every level must fall at
// least this fraction below the uniform starting point log(classes).
inline constexpr double kCeDropFraction = 0.30;

struct WindowRef {
  std::int64_t clip = 0;
  std::int64_t window = 0;
};

// Owned training pool: clips, per-identity template libraries, and the
// flattened window list batches are drawn from.
struct GenTrainData {
  std::vector<data::SyntheticClip> clips;           // train-role clips
  std::vector<retrieval::StyleLibrary> libraries;   // one per identity
  std::vector<std::int64_t> clip_library;           // clip -> library index
  std::vector<WindowRef> items;
};

GenTrainData load_gen_train_data(const data::Dataset& ds, std::int64_t T);

struct GenTrainConfig {
  std::int64_t steps = 1500;
  std::int64_t batch = 4;
  double ema_decay = 0.995;
  std::int64_t log_every = 50;
  std::uint64_t seed = 11;
  // memory rows drawn per template per step; full graphs over 500-frame
  // templates would dominate the step cost
  std::int64_t template_chunk = 128;
  std::vector<std::int64_t> lookahead_choices = {0, 5};
  std::int64_t ce_window = 100;  // trailing steps averaged for the exit bar
  nn::AdamConfig adam;           // total_steps is overridden with steps
  bool verbose = true;
  std::string nan_dump_path;

  void validate() const;
};

struct GenTrainResult {
  std::int64_t steps_run = 0;
  std::vector<double> initial_ce;  // per level, first batch before updates
  std::vector<double> final_ce;    // per level, trailing ce_window mean
  double final_prior = 0.0;
  bool ce_dropped = false;  // every level >= kCeDropFraction below uniform
};

GenTrainResult train_generator(GeneratorModel& model,
                               const GenTrainData& data,
                               const GenTrainConfig& tcfg);

}  // namespace cs::gen
