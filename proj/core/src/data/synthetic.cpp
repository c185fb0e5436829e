#include "cscore/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "cscore/errors.hpp"
#include "cscore/io_util.hpp"
#include "cscore/nn/blas.hpp"
#include "cscore/nn/rng.hpp"

namespace cs::data {
namespace {

namespace fs = std::filesystem;

// Seed stream tags; changing any of these changes every generated corpus.
constexpr std::uint64_t kIdentityStream = 0x69646e74;
constexpr std::uint64_t kPhonemeStream = 0x70686f6e;
constexpr std::uint64_t kBlinkStream = 0x626c6e6b;
constexpr std::uint64_t kMotionNoiseStream = 0x6d6e6f69;
constexpr std::uint64_t kAudioNoiseStream = 0x616e6f69;
constexpr std::uint64_t kMotionProjSeed = 0x4d6f506a57310001ull;
constexpr std::uint64_t kAudioProjSeed = 0x4175506a57320002ull;

constexpr double kGainSd = 0.6;
constexpr double kGainLo = 0.2;
constexpr double kGainHi = 2.0;
// Rows of the motion projection carry this total L1 mass, so the drive per
// channel stays in [-kDriveGain, kDriveGain] and gains up to 2.0 keep every
// deterministic contribution inside [-3, 3].
constexpr double kDriveGain = 1.25;
constexpr double kAmpLo = 0.12;
constexpr double kAmpHi = 0.4;
constexpr std::int64_t kBlinkChannels[2] = {48, 49};
constexpr double kBlinkAmp = 0.35;
constexpr std::int64_t kBlinkRefractory = 4;
constexpr double kBlinkShape[3] = {0.5, 1.0, 0.5};
constexpr double kNoiseAr = 0.9;
constexpr double kNoiseInnovationSd = 0.007;
// 5 sigma of the stationary AR(1) distribution; keeps the channel-bound
// invariant deterministic instead of probabilistic.
constexpr double kNoiseClamp = 0.08;
constexpr double kAudioNoiseSd = 0.03;

TensorF l1_normalized_rows(TensorF m) {
  for (std::int64_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (std::int64_t c = 0; c < m.cols(); ++c) s += std::abs(m.at(r, c));
    check_state(s > 1e-9, "degenerate projection row");
    for (std::int64_t c = 0; c < m.cols(); ++c)
      m.at(r, c) = static_cast<float>(m.at(r, c) / s);
  }
  return m;
}

std::string two_digit(const char* stem, std::int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02lld", stem,
                static_cast<long long>(i));
  return buf;
}

}  // namespace

IdentityProfile make_identity(std::uint64_t seed) {
  IdentityProfile id;
  id.seed = seed;
  rng::Rng r(rng::derive_seed(seed, kIdentityStream));

  const std::int64_t d = codec::kMotionDim;
  id.gains.assign(static_cast<std::size_t>(d), 1.0f);
  // Per-channel response gains. A profile too close to the all-ones
  // direction is resampled so any two profiles stay clearly apart.
  for (int attempt = 0; attempt < 16; ++attempt) {
    double dot = 0.0, norm = 0.0;
    for (auto& g : id.gains) {
      const double v = std::clamp(r.normal(1.0, kGainSd), kGainLo, kGainHi);
      g = static_cast<float>(v);
      dot += v;
      norm += v * v;
    }
    const double cos_to_ones =
        dot / (std::sqrt(norm) * std::sqrt(static_cast<double>(d)));
    if (cos_to_ones < 0.9) break;
  }

  const std::int64_t brow = r.uniform_int(0, 15);
  const std::int64_t mouth1 = r.uniform_int(16, 47);
  std::int64_t mouth2 = r.uniform_int(16, 47);
  while (mouth2 == mouth1) mouth2 = r.uniform_int(16, 47);
  const std::int64_t pose =
      r.uniform_int(codec::kPoseOffset, codec::kMotionDim - 1);
  for (std::int64_t c : {brow, mouth1, mouth2, pose}) {
    Oscillator o;
    o.channel = c;
    o.freq_hz = r.uniform(0.2, 3.0);
    o.phase = r.uniform(0.0, 2.0 * std::numbers::pi);
    o.amplitude = r.uniform(kAmpLo, kAmpHi);
    id.oscillators.push_back(o);
  }
  id.blink_rate = r.uniform(0.1, 0.6);
  return id;
}

TensorF make_phoneme_track(std::uint64_t content_seed, std::int64_t n) {
  check(n >= 1, "phoneme track needs at least one frame");
  rng::Rng r(rng::derive_seed(content_seed, kPhonemeStream));
  TensorF ph(n, kPhonemeDim);
  std::int64_t t = 0;
  while (t < n) {
    const std::int64_t len = r.uniform_int(3, 12);
    float value[kPhonemeDim];
    for (std::int64_t j = 0; j < kPhonemeDim; ++j)
      value[j] = static_cast<float>(r.uniform(-1.0, 1.0));
    const std::int64_t end = std::min(t + len, n);
    for (; t < end; ++t)
      for (std::int64_t j = 0; j < kPhonemeDim; ++j) ph.at(t, j) = value[j];
  }
  return ph;
}

const TensorF& motion_projection() {
  static const TensorF w = [] {
    rng::Rng r(kMotionProjSeed);
    // A direction shared across channels (with per-channel sign) dominates
    // the drive spectrum, which keeps principal-axis alignment scores stable.
    double shared[kPhonemeDim];
    for (double& v : shared) v = r.normal();
    TensorF m(codec::kMotionDim, kPhonemeDim);
    for (std::int64_t c = 0; c < m.rows(); ++c) {
      const double sign = r.uniform() < 0.5 ? -1.0 : 1.0;
      for (std::int64_t j = 0; j < kPhonemeDim; ++j)
        m.at(c, j) = static_cast<float>(r.normal() + 1.2 * sign * shared[j]);
    }
    m = l1_normalized_rows(std::move(m));
    for (float& v : m.data) v = static_cast<float>(v * kDriveGain);
    return m;
  }();
  return w;
}

const TensorF& audio_projection() {
  static const TensorF w = [] {
    rng::Rng r(kAudioProjSeed);
    TensorF m(codec::kAudioDim, kPhonemeDim);
    for (std::int64_t c = 0; c < m.rows(); ++c)
      for (std::int64_t j = 0; j < kPhonemeDim; ++j)
        m.at(c, j) = static_cast<float>(r.normal());
    return l1_normalized_rows(std::move(m));
  }();
  return w;
}

TensorF content_drive(const TensorF& phonemes) {
  check_shape(phonemes.cols() == kPhonemeDim, "phoneme track must be 16-d");
  return nn::matmul_product(phonemes, nn::transposed(motion_projection()));
}

ClipParts synthesize_parts(const IdentityProfile& identity,
                           std::uint64_t content_seed, std::int64_t n) {
  check(n >= kMinClipFrames, "clip length below the 25-frame minimum");
  check_state(static_cast<std::int64_t>(identity.gains.size()) ==
                  codec::kMotionDim,
              "identity profile has wrong gain dimension");

  const std::int64_t d = codec::kMotionDim;
  ClipParts parts{TensorF(n, d), TensorF(n, d), TensorF(n, d), TensorF(n, d)};

  const TensorF drive = content_drive(make_phoneme_track(content_seed, n));
  for (std::int64_t t = 0; t < n; ++t)
    for (std::int64_t c = 0; c < d; ++c)
      parts.drive.at(t, c) = identity.gains[static_cast<std::size_t>(c)] *
                             drive.at(t, c);

  for (const Oscillator& o : identity.oscillators) {
    check_index(o.channel >= 0 && o.channel < d, "oscillator channel");
    const double w = 2.0 * std::numbers::pi * o.freq_hz / kFrameRate;
    for (std::int64_t t = 0; t < n; ++t)
      parts.oscillation.at(t, o.channel) +=
          static_cast<float>(o.amplitude * std::sin(w * t + o.phase));
  }

  rng::Rng blink(rng::derive_seed(rng::derive_seed(identity.seed, kBlinkStream),
                                  content_seed));
  const double p_event = identity.blink_rate / kFrameRate;
  std::int64_t last_event = -kBlinkRefractory;
  for (std::int64_t t = 0; t < n; ++t) {
    const double u = blink.uniform();
    if (u < p_event && t - last_event >= kBlinkRefractory) {
      last_event = t;
      for (std::int64_t k = 0; k < 3 && t + k < n; ++k)
        for (std::int64_t c : kBlinkChannels)
          parts.blink.at(t + k, c) -=
              static_cast<float>(kBlinkAmp * kBlinkShape[k]);
    }
  }

  rng::Rng noise(rng::derive_seed(
      rng::derive_seed(identity.seed, kMotionNoiseStream), content_seed));
  std::vector<double> state(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t t = 0; t < n; ++t)
    for (std::int64_t c = 0; c < d; ++c) {
      double& s = state[static_cast<std::size_t>(c)];
      s = std::clamp(kNoiseAr * s + noise.normal(0.0, kNoiseInnovationSd),
                     -kNoiseClamp, kNoiseClamp);
      parts.noise.at(t, c) = static_cast<float>(s);
    }

  return parts;
}

SyntheticClip synthesize_clip(const IdentityProfile& identity,
                              std::uint64_t content_seed, std::int64_t n,
                              std::string identity_tag) {
  ClipParts parts = synthesize_parts(identity, content_seed, n);

  SyntheticClip clip;
  clip.identity_tag = std::move(identity_tag);
  clip.identity_seed = identity.seed;
  clip.content_seed = content_seed;

  clip.motion = TensorF(n, codec::kMotionDim);
  for (std::int64_t i = 0; i < clip.motion.size(); ++i)
    clip.motion.data[static_cast<std::size_t>(i)] =
        parts.drive.data[static_cast<std::size_t>(i)] +
        parts.oscillation.data[static_cast<std::size_t>(i)] +
        parts.blink.data[static_cast<std::size_t>(i)] +
        parts.noise.data[static_cast<std::size_t>(i)];

  // Audio noise is keyed by content alone: two identities speaking the same
  // content produce bit-identical audio, so no identity signal can leak in.
  clip.audio = nn::matmul_product(make_phoneme_track(content_seed, n),
                                  nn::transposed(audio_projection()));
  rng::Rng anoise(rng::derive_seed(content_seed, kAudioNoiseStream));
  for (float& v : clip.audio.data)
    v += static_cast<float>(anoise.normal(0.0, kAudioNoiseSd));

  return clip;
}

namespace {
constexpr char kClipMagic[4] = {'C', 'S', 'C', 'L'};
constexpr std::uint32_t kClipVersion = 1;
}  // namespace

void write_clip(const std::string& path, const SyntheticClip& clip) {
  check_shape(clip.audio.cols() == codec::kAudioDim &&
                  clip.motion.cols() == codec::kMotionDim &&
                  clip.audio.rows() == clip.motion.rows(),
              "clip blocks must be aligned n x 512 and n x 137");
  ioutil::FilePtr f = ioutil::open_file(path, "wb");
  ioutil::write_bytes(f.get(), kClipMagic, 4);
  ioutil::write_u32(f.get(), kClipVersion);
  ioutil::write_u32(f.get(), static_cast<std::uint32_t>(clip.audio.rows()));
  ioutil::write_f32_array(f.get(), clip.audio.data.data(),
                          clip.audio.data.size());
  ioutil::write_f32_array(f.get(), clip.motion.data.data(),
                          clip.motion.data.size());
  if (std::fflush(f.get()) != 0) throw IoError("clip flush failed");
}

SyntheticClip read_clip(const std::string& path) {
  ioutil::FilePtr f = ioutil::open_file(path, "rb");
  ioutil::check_magic(f.get(), kClipMagic, "clip");
  const std::uint32_t version = ioutil::read_u32(f.get(), "version");
  if (version != kClipVersion)
    throw IoError("unsupported clip version " + std::to_string(version));
  const std::int64_t n = ioutil::read_u32(f.get(), "frame count");
  check_state(n >= 1, "empty clip file");
  SyntheticClip clip;
  clip.audio = TensorF(n, codec::kAudioDim);
  clip.motion = TensorF(n, codec::kMotionDim);
  ioutil::read_f32_array(f.get(), clip.audio.data.data(),
                         clip.audio.data.size(), "audio block");
  ioutil::read_f32_array(f.get(), clip.motion.data.data(),
                         clip.motion.data.size(), "motion block");
  return clip;
}

const char* role_name(ClipRole role) {
  switch (role) {
    case ClipRole::kTrain: return "train";
    case ClipRole::kTemplate: return "template";
    case ClipRole::kEval: return "eval";
  }
  throw StateError("unknown clip role");
}

ClipRole parse_role(const std::string& name) {
  if (name == "train") return ClipRole::kTrain;
  if (name == "template") return ClipRole::kTemplate;
  if (name == "eval") return ClipRole::kEval;
  throw IoError("unknown clip role '" + name + "'");
}

std::vector<const ManifestEntry*> Dataset::select(
    const std::string& identity_tag, ClipRole role) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.identity_tag == identity_tag && e.role == role) out.push_back(&e);
  return out;
}

std::vector<const ManifestEntry*> Dataset::with_role(ClipRole role) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.role == role) out.push_back(&e);
  return out;
}

std::vector<std::string> Dataset::identities() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (std::find(out.begin(), out.end(), e.identity_tag) == out.end())
      out.push_back(e.identity_tag);
  return out;
}

Dataset build_splits(const std::string& dir, const SplitConfig& cfg) {
  check_config(cfg.n_train_ids >= 1 && cfg.n_test_ids >= 1 &&
                   cfg.clips_per_id >= 1,
               "split counts must be positive");
  check_config(cfg.clip_len >= kMinClipFrames, "clip_len below minimum");

  fs::create_directories(fs::path(dir) / "clips");

  struct IdEntry {
    std::string tag;
    std::uint64_t seed;
    bool is_train;
  };
  std::vector<IdEntry> ids;
  for (std::int64_t i = 0; i < cfg.n_train_ids; ++i)
    ids.push_back({two_digit("train", i),
                   rng::derive_seed(cfg.seed, 0x10000 + i), true});
  for (std::int64_t j = 0; j < cfg.n_test_ids; ++j)
    ids.push_back({two_digit("test", j),
                   rng::derive_seed(cfg.seed, 0x20000 + j), false});

  std::set<std::uint64_t> seen;
  for (const auto& id : ids)
    check_config(seen.insert(id.seed).second,
                 "identity seeds overlap between splits");

  const std::int64_t tmpl_train = cfg.clips_per_id / 3;
  const std::int64_t tmpl_test = cfg.clips_per_id / 2;

  Dataset ds;
  ds.root = dir;
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  std::ofstream seeds(fs::path(dir) / "seeds.txt");
  check_state(manifest.good() && seeds.good(), "cannot write dataset files");

  std::int64_t clip_counter = 0;
  for (const auto& id : ids) {
    const IdentityProfile profile = make_identity(id.seed);
    for (std::int64_t k = 0; k < cfg.clips_per_id; ++k) {
      const std::uint64_t content_seed =
          rng::derive_seed(cfg.seed, 0x30000 + clip_counter);
      ++clip_counter;

      ClipRole role;
      if (id.is_train)
        role = k < cfg.clips_per_id - tmpl_train ? ClipRole::kTrain
                                                 : ClipRole::kTemplate;
      else
        role = k < tmpl_test ? ClipRole::kTemplate : ClipRole::kEval;

      const std::string rel =
          "clips/" + id.tag + "_c" + std::to_string(k) + ".cscl";
      const SyntheticClip clip =
          synthesize_clip(profile, content_seed, cfg.clip_len, id.tag);
      write_clip((fs::path(dir) / rel).string(), clip);

      manifest << id.tag << ' ' << role_name(role) << ' ' << rel << '\n';
      seeds << rel << ' ' << id.seed << ' ' << content_seed << '\n';
      ds.entries.push_back({id.tag, role, rel, id.seed, content_seed});
    }
  }
  manifest.flush();
  seeds.flush();
  check_state(manifest.good() && seeds.good(), "dataset write failed");
  return ds;
}

Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in.good()) throw IoError("cannot open manifest " + manifest_path);

  Dataset ds;
  ds.root = fs::path(manifest_path).parent_path().string();

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag, role, path;
    if (!(ls >> tag >> role >> path))
      throw IoError("malformed manifest line: " + line);
    ds.entries.push_back({tag, parse_role(role), path, 0, 0});
  }

  const fs::path sidecar = fs::path(ds.root) / "seeds.txt";
  if (fs::exists(sidecar)) {
    std::ifstream sc(sidecar);
    while (std::getline(sc, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string path;
      std::uint64_t iseed = 0, cseed = 0;
      if (!(ls >> path >> iseed >> cseed))
        throw IoError("malformed seeds line: " + line);
      for (auto& e : ds.entries)
        if (e.path == path) {
          e.identity_seed = iseed;
          e.content_seed = cseed;
        }
    }
  }
  return ds;
}

std::string resolve_path(const Dataset& ds, const ManifestEntry& entry) {
  if (ds.root.empty()) return entry.path;
  return (fs::path(ds.root) / entry.path).string();
}

SyntheticClip load_clip(const Dataset& ds, const ManifestEntry& entry) {
  SyntheticClip clip = read_clip(resolve_path(ds, entry));
  clip.identity_tag = entry.identity_tag;
  clip.identity_seed = entry.identity_seed;
  clip.content_seed = entry.content_seed;
  return clip;
}

}  // namespace cs::data
