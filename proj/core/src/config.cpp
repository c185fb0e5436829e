#include "cscore/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cscore/errors.hpp"
#include "cscore/nn/checkpoint.hpp"
#include "cscore/nn/rng.hpp"

namespace cs::cfg {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::int64_t parse_i64(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  check_config(end != nullptr && *end == '\0' && !s.empty(),
               "config: bad integer for " + key + ": '" + s + "'");
  return static_cast<std::int64_t>(v);
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  check_config(end != nullptr && *end == '\0' && !s.empty(),
               "config: bad unsigned integer for " + key + ": '" + s + "'");
  return static_cast<std::uint64_t>(v);
}

double parse_f64(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  check_config(end != nullptr && *end == '\0' && !s.empty(),
               "config: bad number for " + key + ": '" + s + "'");
  return v;
}

}  // namespace

void KeyValues::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries.emplace_back(key, value);
}

const std::string* KeyValues::find(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return &v;
  return nullptr;
}

std::string KeyValues::get_str(const std::string& key,
                               const std::string& def) const {
  const std::string* v = find(key);
  return v != nullptr ? *v : def;
}

std::int64_t KeyValues::get_i64(const std::string& key,
                                std::int64_t def) const {
  const std::string* v = find(key);
  return v != nullptr ? parse_i64(key, *v) : def;
}

std::uint64_t KeyValues::get_u64(const std::string& key,
                                 std::uint64_t def) const {
  const std::string* v = find(key);
  return v != nullptr ? parse_u64(key, *v) : def;
}

double KeyValues::get_f64(const std::string& key, double def) const {
  const std::string* v = find(key);
  return v != nullptr ? parse_f64(key, *v) : def;
}

bool KeyValues::get_bool(const std::string& key, bool def) const {
  const std::string* v = find(key);
  if (v == nullptr) return def;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + *v + "'");
}

std::vector<std::int64_t> KeyValues::get_i64_list(
    const std::string& key, const std::vector<std::int64_t>& def) const {
  const std::string* v = find(key);
  if (v == nullptr) return def;
  std::vector<std::int64_t> out;
  if (trim(*v).empty()) return out;
  for (const std::string& part : split(*v, ','))
    out.push_back(parse_i64(key, part));
  return out;
}

std::vector<double> KeyValues::get_f64_list(
    const std::string& key, const std::vector<double>& def) const {
  const std::string* v = find(key);
  if (v == nullptr) return def;
  std::vector<double> out;
  if (trim(*v).empty()) return out;
  for (const std::string& part : split(*v, ','))
    out.push_back(parse_f64(key, part));
  return out;
}

void KeyValues::set_i64(const std::string& key, std::int64_t v) {
  set(key, std::to_string(v));
}
void KeyValues::set_u64(const std::string& key, std::uint64_t v) {
  set(key, std::to_string(v));
}
void KeyValues::set_f64(const std::string& key, double v) {
  set(key, fmt_f64(v));
}
void KeyValues::set_bool(const std::string& key, bool v) {
  set(key, v ? "true" : "false");
}
void KeyValues::set_i64_list(const std::string& key,
                             const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += ",";
    s += std::to_string(v[i]);
  }
  set(key, s);
}
void KeyValues::set_f64_list(const std::string& key,
                             const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += ",";
    s += fmt_f64(v[i]);
  }
  set(key, s);
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      check_config(line.back() == ']' && line.size() > 2,
                   "config line " + std::to_string(line_no) +
                       ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    check_config(eq != std::string::npos,
                 "config line " + std::to_string(line_no) +
                     ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    check_config(!key.empty(), "config line " + std::to_string(line_no) +
                                   ": empty key");
    kv.set(section.empty() ? key : section + "." + key,
           trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues parse_key_values_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

std::string serialize(const KeyValues& kv) {
  std::string out;
  std::string section;
  for (const auto& [key, value] : kv.entries) {
    const std::size_t dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name =
        dot == std::string::npos ? key : key.substr(dot + 1);
    if (sec != section) {
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += name + "=" + value + "\n";
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ull;
  }
  return h;
}

void apply_master_seed(RunConfig& rc, std::uint64_t seed) {
  rc.seed = seed;
  rc.data.seed = rng::derive_seed(seed, 0x64617431);
  rc.codec_train.seed = rng::derive_seed(seed, 0x74726331);
  rc.gen_train.seed = rng::derive_seed(seed, 0x74726732);
  rc.sampler.seed = rng::derive_seed(seed, 0x736d7031);
}

namespace {

void fill_all(KeyValues& kv, const RunConfig& rc) {
  kv.set_u64("run.seed", rc.seed);
  kv.set("run.stage", rc.stage);
  kv.set("run.data_dir", rc.data_dir);
  kv.set("run.out_dir", rc.out_dir);

  kv.set_u64("data.seed", rc.data.seed);
  kv.set_i64("data.train_ids", rc.data.n_train_ids);
  kv.set_i64("data.test_ids", rc.data.n_test_ids);
  kv.set_i64("data.clips_per_id", rc.data.clips_per_id);
  kv.set_i64("data.clip_len", rc.data.clip_len);

  kv.set_i64("codec.T", rc.codec.T);
  kv.set_i64_list("codec.resolutions", rc.codec.resolutions);
  kv.set_i64("codec.p", rc.codec.p);
  kv.set_f64("codec.lambda_v", rc.codec.lambda_v);
  kv.set_f64("codec.lambda_j", rc.codec.lambda_j);
  kv.set_f64("codec.lambda_e", rc.codec.lambda_e);
  kv.set_i64("codec.enc_depth", rc.codec.enc_depth);
  kv.set_i64("codec.dec_depth", rc.codec.dec_depth);
  kv.set_i64("codec.width", rc.codec.width);
  kv.set_i64("codec.heads", rc.codec.heads);

  kv.set_i64("codec_train.steps", rc.codec_train.steps);
  kv.set_i64("codec_train.batch", rc.codec_train.batch);
  kv.set_f64("codec_train.ema_decay", rc.codec_train.ema_decay);
  kv.set_i64("codec_train.log_every", rc.codec_train.log_every);
  kv.set_i64("codec_train.max_eval_windows", rc.codec_train.max_eval_windows);
  kv.set_u64("codec_train.seed", rc.codec_train.seed);
  kv.set_f64("codec_train.base_lr", rc.codec_train.adam.base_lr);
  kv.set_f64("codec_train.decay_factor", rc.codec_train.adam.decay_factor);

  kv.set_i64("retriever.width", rc.retriever.width);
  kv.set_i64("retriever.heads", rc.retriever.heads);
  kv.set_i64("retriever.query_tail", rc.retriever.query_tail);
  kv.set_i64("retriever.slots", rc.retriever.slots);
  kv.set_i64("retriever.head_hidden", rc.retriever.head_hidden);

  kv.set_i64("gen.depth", rc.gen.depth);
  kv.set_i64("gen.width", rc.gen.width);
  kv.set_i64("gen.heads", rc.gen.heads);
  kv.set_f64("gen.cfg_dropout", rc.gen.cfg_dropout);
  kv.set_i64("gen.lookahead", rc.gen.lookahead);
  kv.set_f64_list("gen.lambda_levels", rc.gen.lambda_levels);
  kv.set_f64("gen.lambda_p", rc.gen.lambda_p);
  kv.set_bool("gen.supervise_first_pass", rc.gen.supervise_first_pass);

  kv.set_i64("gen_train.steps", rc.gen_train.steps);
  kv.set_i64("gen_train.batch", rc.gen_train.batch);
  kv.set_f64("gen_train.ema_decay", rc.gen_train.ema_decay);
  kv.set_i64("gen_train.log_every", rc.gen_train.log_every);
  kv.set_u64("gen_train.seed", rc.gen_train.seed);
  kv.set_i64("gen_train.template_chunk", rc.gen_train.template_chunk);
  kv.set_i64_list("gen_train.lookahead_choices",
                  rc.gen_train.lookahead_choices);
  kv.set_i64("gen_train.ce_window", rc.gen_train.ce_window);
  kv.set_f64("gen_train.base_lr", rc.gen_train.adam.base_lr);
  kv.set_f64("gen_train.decay_factor", rc.gen_train.adam.decay_factor);

  kv.set_f64("sampler.temperature", rc.sampler.temperature);
  kv.set_i64("sampler.top_k", rc.sampler.top_k);
  kv.set_f64("sampler.cfg_scale", rc.sampler.cfg_scale);
  kv.set_u64("sampler.seed", rc.sampler.seed);
}

}  // namespace

RunConfig run_config_from(const KeyValues& kv) {
  RunConfig rc;
  {
    // typos are config errors, not silently ignored keys
    KeyValues known;
    fill_all(known, rc);
    for (const auto& [key, value] : kv.entries)
      check_config(known.has(key), "config: unknown key '" + key + "'");
  }

  if (kv.has("run.seed")) apply_master_seed(rc, kv.get_u64("run.seed", 1));
  rc.stage = kv.get_str("run.stage", rc.stage);
  rc.data_dir = kv.get_str("run.data_dir", rc.data_dir);
  rc.out_dir = kv.get_str("run.out_dir", rc.out_dir);

  rc.data.seed = kv.get_u64("data.seed", rc.data.seed);
  rc.data.n_train_ids = kv.get_i64("data.train_ids", rc.data.n_train_ids);
  rc.data.n_test_ids = kv.get_i64("data.test_ids", rc.data.n_test_ids);
  rc.data.clips_per_id = kv.get_i64("data.clips_per_id", rc.data.clips_per_id);
  rc.data.clip_len = kv.get_i64("data.clip_len", rc.data.clip_len);

  rc.codec.T = kv.get_i64("codec.T", rc.codec.T);
  rc.codec.resolutions =
      kv.get_i64_list("codec.resolutions", rc.codec.resolutions);
  rc.codec.p = kv.get_i64("codec.p", rc.codec.p);
  rc.codec.lambda_v = kv.get_f64("codec.lambda_v", rc.codec.lambda_v);
  rc.codec.lambda_j = kv.get_f64("codec.lambda_j", rc.codec.lambda_j);
  rc.codec.lambda_e = kv.get_f64("codec.lambda_e", rc.codec.lambda_e);
  rc.codec.enc_depth = kv.get_i64("codec.enc_depth", rc.codec.enc_depth);
  rc.codec.dec_depth = kv.get_i64("codec.dec_depth", rc.codec.dec_depth);
  rc.codec.width = kv.get_i64("codec.width", rc.codec.width);
  rc.codec.heads = kv.get_i64("codec.heads", rc.codec.heads);

  rc.codec_train.steps = kv.get_i64("codec_train.steps", rc.codec_train.steps);
  rc.codec_train.batch = kv.get_i64("codec_train.batch", rc.codec_train.batch);
  rc.codec_train.ema_decay =
      kv.get_f64("codec_train.ema_decay", rc.codec_train.ema_decay);
  rc.codec_train.log_every =
      kv.get_i64("codec_train.log_every", rc.codec_train.log_every);
  rc.codec_train.max_eval_windows = kv.get_i64(
      "codec_train.max_eval_windows", rc.codec_train.max_eval_windows);
  rc.codec_train.seed = kv.get_u64("codec_train.seed", rc.codec_train.seed);
  rc.codec_train.adam.base_lr =
      kv.get_f64("codec_train.base_lr", rc.codec_train.adam.base_lr);
  rc.codec_train.adam.decay_factor =
      kv.get_f64("codec_train.decay_factor", rc.codec_train.adam.decay_factor);

  rc.retriever.width = kv.get_i64("retriever.width", rc.retriever.width);
  rc.retriever.heads = kv.get_i64("retriever.heads", rc.retriever.heads);
  rc.retriever.query_tail =
      kv.get_i64("retriever.query_tail", rc.retriever.query_tail);
  rc.retriever.slots = kv.get_i64("retriever.slots", rc.retriever.slots);
  rc.retriever.head_hidden =
      kv.get_i64("retriever.head_hidden", rc.retriever.head_hidden);

  rc.gen.depth = kv.get_i64("gen.depth", rc.gen.depth);
  rc.gen.width = kv.get_i64("gen.width", rc.gen.width);
  rc.gen.heads = kv.get_i64("gen.heads", rc.gen.heads);
  rc.gen.cfg_dropout = kv.get_f64("gen.cfg_dropout", rc.gen.cfg_dropout);
  rc.gen.lookahead = kv.get_i64("gen.lookahead", rc.gen.lookahead);
  rc.gen.lambda_levels =
      kv.get_f64_list("gen.lambda_levels", rc.gen.lambda_levels);
  rc.gen.lambda_p = kv.get_f64("gen.lambda_p", rc.gen.lambda_p);
  rc.gen.supervise_first_pass =
      kv.get_bool("gen.supervise_first_pass", rc.gen.supervise_first_pass);

  rc.gen_train.steps = kv.get_i64("gen_train.steps", rc.gen_train.steps);
  rc.gen_train.batch = kv.get_i64("gen_train.batch", rc.gen_train.batch);
  rc.gen_train.ema_decay =
      kv.get_f64("gen_train.ema_decay", rc.gen_train.ema_decay);
  rc.gen_train.log_every =
      kv.get_i64("gen_train.log_every", rc.gen_train.log_every);
  rc.gen_train.seed = kv.get_u64("gen_train.seed", rc.gen_train.seed);
  rc.gen_train.template_chunk =
      kv.get_i64("gen_train.template_chunk", rc.gen_train.template_chunk);
  rc.gen_train.lookahead_choices = kv.get_i64_list(
      "gen_train.lookahead_choices", rc.gen_train.lookahead_choices);
  rc.gen_train.ce_window =
      kv.get_i64("gen_train.ce_window", rc.gen_train.ce_window);
  rc.gen_train.adam.base_lr =
      kv.get_f64("gen_train.base_lr", rc.gen_train.adam.base_lr);
  rc.gen_train.adam.decay_factor =
      kv.get_f64("gen_train.decay_factor", rc.gen_train.adam.decay_factor);

  rc.sampler.temperature =
      kv.get_f64("sampler.temperature", rc.sampler.temperature);
  rc.sampler.top_k = kv.get_i64("sampler.top_k", rc.sampler.top_k);
  rc.sampler.cfg_scale = kv.get_f64("sampler.cfg_scale", rc.sampler.cfg_scale);
  rc.sampler.seed = kv.get_u64("sampler.seed", rc.sampler.seed);

  rc.retriever.max_window = rc.codec.T;
  return rc;
}

KeyValues to_key_values(const RunConfig& rc) {
  KeyValues kv;
  fill_all(kv, rc);
  return kv;
}

std::string config_hash(const RunConfig& rc) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(serialize(to_key_values(rc)))));
  return buf;
}

std::string codec_config_text(const codec::CodecConfig& c) {
  RunConfig rc;
  rc.codec = c;
  KeyValues all = to_key_values(rc);
  KeyValues codec_only;
  for (const auto& [key, value] : all.entries)
    if (key.rfind("codec.", 0) == 0) codec_only.entries.emplace_back(key, value);
  return serialize(codec_only);
}

namespace {

std::vector<nn::CheckpointBlob> config_blob(const RunConfig& rc) {
  const std::string text = serialize(to_key_values(rc));
  nn::CheckpointBlob blob;
  blob.name = "__config__";
  blob.bytes.assign(text.begin(), text.end());
  return {std::move(blob)};
}

RunConfig config_of(const nn::LoadedCheckpoint& ckpt,
                    const std::string& path) {
  const nn::CheckpointBlob* blob = ckpt.find_blob("__config__");
  check_config(blob != nullptr, "checkpoint has no config blob: " + path);
  return run_config_from(parse_key_values(
      std::string(blob->bytes.begin(), blob->bytes.end())));
}

}  // namespace

void save_codec_checkpoint(const std::string& path,
                           const codec::CodecModel& model,
                           const RunConfig& rc) {
  RunConfig copy = rc;
  copy.codec = model.config();  // the embedded config must match the weights
  nn::save_checkpoint(path, model.params(), config_blob(copy));
}

LoadedCodec load_codec_checkpoint(const std::string& path) {
  const nn::LoadedCheckpoint ckpt = nn::read_checkpoint(path);
  RunConfig rc = config_of(ckpt, path);
  auto model = std::make_unique<codec::CodecModel>(rc.codec, rc.seed);
  nn::load_into_store(ckpt, model->params());
  return {std::move(model), std::move(rc)};
}

void save_generator_checkpoint(const std::string& path,
                               const gen::GeneratorModel& model,
                               const RunConfig& rc) {
  RunConfig copy = rc;
  copy.codec = model.codec().config();
  copy.retriever = model.retriever().config();
  copy.gen = model.config();
  nn::save_checkpoint(path, model.params(), config_blob(copy));
}

LoadedGenerator load_generator_checkpoint(const std::string& path,
                                          const codec::CodecModel& codec) {
  const nn::LoadedCheckpoint ckpt = nn::read_checkpoint(path);
  RunConfig rc = config_of(ckpt, path);
  check_config(
      codec_config_text(rc.codec) == codec_config_text(codec.config()),
      "codec/generator config mismatch: the generator checkpoint was trained "
      "against a different codec configuration");
  retrieval::RetrieverConfig rcfg = rc.retriever;
  rcfg.max_window = codec.config().T;
  auto model =
      std::make_unique<gen::GeneratorModel>(codec, rcfg, rc.gen, rc.seed);
  nn::load_into_store(ckpt, model->params());
  return {std::move(model), std::move(rc)};
}

}  // namespace cs::cfg
