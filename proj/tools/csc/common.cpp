#include "commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cscore/errors.hpp"

namespace fs = std::filesystem;

namespace csc {

cs::cfg::RunConfig load_run_config(const std::string& config_path) {
  cs::cfg::RunConfig rc;
  if (!config_path.empty())
    rc = cs::cfg::run_config_from(cs::cfg::parse_key_values_file(config_path));
  apply_seed_env(rc);
  return rc;
}

void apply_seed_env(cs::cfg::RunConfig& rc) {
  const char* env = std::getenv("CSC_SEED");
  if (env == nullptr) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  cs::check_config(end != nullptr && *end == '\0' && *env != '\0',
                   std::string("CSC_SEED is not an integer: '") + env + "'");
  cs::cfg::apply_master_seed(rc, v);
}

void write_config_sidecar(const std::string& path,
                          const cs::cfg::RunConfig& rc) {
  std::ofstream out(path);
  cs::check(out.good(), "cannot write " + path);
  out << "# config_hash=" << cs::cfg::config_hash(rc) << "\n"
      << cs::cfg::serialize(cs::cfg::to_key_values(rc));
  out.flush();
  cs::check(out.good(), "write failed: " + path);
}

bool config_file_sets(const std::string& config_path,
                      const std::string& prefix) {
  if (config_path.empty()) return false;
  const cs::cfg::KeyValues kv = cs::cfg::parse_key_values_file(config_path);
  for (const auto& [key, value] : kv.entries)
    if (key.rfind(prefix + ".", 0) == 0) return true;
  return false;
}

cs::data::Dataset open_dataset(const std::string& data_path) {
  fs::path p(data_path);
  if (fs::is_directory(p)) p /= "manifest.txt";
  return cs::data::load_dataset(p.string());
}

std::uint64_t param_digest(const cs::nn::ParameterStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto mix = [&h](const float* p, std::size_t n) {
    const auto* b = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n * sizeof(float); ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (std::int64_t i = 0; i < store.count(); ++i) {
    const cs::nn::Parameter& par = store.at(i);
    mix(par.value.data.data(), par.value.data.size());
    mix(par.ema_value.data.data(), par.ema_value.data.size());
  }
  return h;
}

std::string config_keys_help() {
  std::string out = "Config file keys and their defaults:\n";
  bool at_line_start = true;
  for (char c :
       cs::cfg::serialize(cs::cfg::to_key_values(cs::cfg::RunConfig{}))) {
    if (at_line_start) out += "  ";
    out += c;
    at_line_start = c == '\n';
  }
  out +=
      "The CSC_SEED environment variable overrides run.seed as a master\n"
      "seed and rederives every module seed from it.\n";
  return out;
}

}  // namespace csc
