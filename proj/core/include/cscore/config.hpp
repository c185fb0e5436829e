#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cscore/codec/codec.hpp"
#include "cscore/codec/trainer.hpp"
#include "cscore/data/synthetic.hpp"
#include "cscore/gen/generator.hpp"
#include "cscore/gen/trainer.hpp"
#include "cscore/retrieval/retriever.hpp"

namespace cs::cfg {

// Flat key=value run configuration. Files use [section] headers; a key's
// full name is "section.name". Serialization is canonical (fixed order,
// fixed number formatting), so equal configs hash equally.

struct KeyValues {
  std::vector<std::pair<std::string, std::string>> entries;  // in order

  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;
  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::string get_str(const std::string& key, const std::string& def) const;
  std::int64_t get_i64(const std::string& key, std::int64_t def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  double get_f64(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<std::int64_t> get_i64_list(
      const std::string& key, const std::vector<std::int64_t>& def) const;
  std::vector<double> get_f64_list(const std::string& key,
                                   const std::vector<double>& def) const;

  void set_i64(const std::string& key, std::int64_t v);
  void set_u64(const std::string& key, std::uint64_t v);
  void set_f64(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);
  void set_i64_list(const std::string& key,
                    const std::vector<std::int64_t>& v);
  void set_f64_list(const std::string& key, const std::vector<double>& v);
};

KeyValues parse_key_values(const std::string& text);
KeyValues parse_key_values_file(const std::string& path);
std::string serialize(const KeyValues& kv);
std::uint64_t fnv1a64(const std::string& text);

// Everything a run needs: module configs, training configs, seeds, paths,
// and the stage being executed. Logging and dump paths are runtime-only
// and stay out of the serialized form.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string stage;
  std::string data_dir;
  std::string out_dir;
  data::SplitConfig data;
  codec::CodecConfig codec;
  codec::CodecTrainConfig codec_train;
  retrieval::RetrieverConfig retriever;
  gen::GenConfig gen;
  gen::GenTrainConfig gen_train;
  gen::SamplerConfig sampler;
};

// run.seed cascades: module seeds still at their defaults are derived from
// it; explicitly configured module seeds win.
void apply_master_seed(RunConfig& rc, std::uint64_t seed);

// Unknown keys are a hard error (they are always typos).
RunConfig run_config_from(const KeyValues& kv);
KeyValues to_key_values(const RunConfig& rc);

std::string config_hash(const RunConfig& rc);  // 16 hex digits
std::string codec_config_text(const codec::CodecConfig& c);

// Checkpoint bundles: weights plus the producing config as a text blob.
void save_codec_checkpoint(const std::string& path,
                           const codec::CodecModel& model,
                           const RunConfig& rc);

struct LoadedCodec {
  std::unique_ptr<codec::CodecModel> model;
  RunConfig config;
};
LoadedCodec load_codec_checkpoint(const std::string& path);

void save_generator_checkpoint(const std::string& path,
                               const gen::GeneratorModel& model,
                               const RunConfig& rc);

struct LoadedGenerator {
  std::unique_ptr<gen::GeneratorModel> model;
  RunConfig config;
};
// Refuses a generator trained against a different codec configuration.
LoadedGenerator load_generator_checkpoint(const std::string& path,
                                          const codec::CodecModel& codec);

}  // namespace cs::cfg
