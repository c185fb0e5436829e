#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscore/config.hpp"
#include "cscore/data/synthetic.hpp"
#include "cscore/nn/params.hpp"

namespace csc {

// Shared plumbing -----------------------------------------------------------

// defaults -> config file (if any) -> CSC_SEED environment override.
// CSC_SEED acts as a master seed: it rederives every module seed, including
// ones the file set explicitly.
cs::cfg::RunConfig load_run_config(const std::string& config_path);

// Applies the CSC_SEED override alone (used when the base config comes from
// a checkpoint rather than a file).
void apply_seed_env(cs::cfg::RunConfig& rc);

// Serialized config plus its hash, as a text sidecar next to binary
// artifacts whose format has no metadata slot.
void write_config_sidecar(const std::string& path,
                          const cs::cfg::RunConfig& rc);

// Does the config file set any key under `prefix.`?
bool config_file_sets(const std::string& config_path,
                      const std::string& prefix);

// Accepts either the dataset directory or a manifest path.
cs::data::Dataset open_dataset(const std::string& data_path);

// FNV-1a over every parameter's raw and averaged weights, in store order.
std::uint64_t param_digest(const cs::nn::ParameterStore& store);

std::string config_keys_help();

// Subcommands ---------------------------------------------------------------

struct GenDataOpts {
  std::string config;
  std::string out;
  bool force = false;
};
int cmd_gen_data(const GenDataOpts& o);

struct TrainCodecOpts {
  std::string config;
  std::string data;
  std::string out;
  std::int64_t stride = 50;  // window stride over training clips
  bool quiet = false;
};
int cmd_train_codec(const TrainCodecOpts& o);

struct TrainGenOpts {
  std::string config;
  std::string data;
  std::string codec_ckpt;
  std::string out;
  bool quiet = false;
};
int cmd_train_gen(const TrainGenOpts& o);

struct StreamOpts {
  std::string config;
  std::string codec_ckpt;
  std::string gen_ckpt;
  std::string library;
  bool empty_library = false;
  std::string audio;   // clip file input
  bool use_stdin = false;  // harness records on stdin instead
  std::string out;
  std::string latency;  // default: <out>.latency.csv
  std::int64_t lookahead = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double cfg_scale = 0.0;
  bool cfg_scale_set = false;
  double temperature = 0.0;
  bool temperature_set = false;
  std::int64_t top_k = 0;
  bool top_k_set = false;
  std::string query_mode = "full";
};
int cmd_stream(const StreamOpts& o);

struct EvalOpts {
  std::string data;
  std::string generated;  // manifest file or directory holding one
  std::string out;
  std::string codec_ckpt;  // optional; enables the causality audit
  std::string gen_ckpt;
  std::int64_t audit_trials = 20;
  std::int64_t audit_frames = 150;
  std::int64_t lookahead = 0;
};
int cmd_eval(const EvalOpts& o);

struct AblateOpts {
  std::string suite;
  std::string data;
  std::string codec_ckpt;
  std::string gen_ckpt;
  std::string out;
  std::vector<std::uint64_t> seeds = {101, 102, 103};
  std::int64_t eval_clips = 2;
  std::int64_t eval_frames = 200;
  std::string write_dir;  // optional: keep per-variant generated clips
};
int cmd_ablate(const AblateOpts& o);

struct ScheduleDumpOpts {
  std::int64_t T = 100;
  std::vector<std::int64_t> resolutions = {1, 25, 50, 100};
  std::string out;  // empty = stdout
};
int cmd_schedule_dump(const ScheduleDumpOpts& o);

}  // namespace csc
