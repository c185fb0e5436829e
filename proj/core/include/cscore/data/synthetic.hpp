#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscore/codec/codec.hpp"
#include "cscore/nn/tensor.hpp"

namespace cs::data {

// Paired (audio, motion) clips where identity style lives only in the motion
// stream. Audio features are a fixed projection of a latent phoneme track
// shared by both modalities, so audio underdetermines the speaker by
// construction and personalization has to come from motion templates.

inline constexpr std::int64_t kFrameRate = 25;
inline constexpr std::int64_t kPhonemeDim = 16;
inline constexpr std::int64_t kMinClipFrames = 25;

// channel groups inside the 137-d motion rows
inline constexpr std::int64_t kBrowLo = 0, kBrowHi = 16;
inline constexpr std::int64_t kMouthLo = 16, kMouthHi = 48;

struct Oscillator {
  std::int64_t channel = 0;
  double freq_hz = 0.0;   // [0.2, 3.0]
  double phase = 0.0;     // [0, 2pi)
  double amplitude = 0.0; // bounded so channels stay in [-3, 3]
};

struct IdentityProfile {
  std::uint64_t seed = 0;
  std::vector<float> gains;             // per motion channel, in [0.2, 2.0]
  std::vector<Oscillator> oscillators;  // brow, mouth, mouth, pose
  double blink_rate = 0.0;              // events per second
};

IdentityProfile make_identity(std::uint64_t seed);

// Piecewise-constant latent articulation, n x 16, values in [-1, 1],
// segment lengths 3..12 frames.
TensorF make_phoneme_track(std::uint64_t content_seed, std::int64_t n);

// Fixed global projections shared by every identity. Rows have fixed L1
// mass (1.25 for motion, 1.0 for audio) so projected values are bounded.
const TensorF& motion_projection();  // motion dim x 16
const TensorF& audio_projection();   // audio dim x 16

// phonemes (n x 16) -> n x motion dim content drive, before identity gains.
TensorF content_drive(const TensorF& phonemes);

struct SyntheticClip {
  std::string identity_tag;
  std::uint64_t identity_seed = 0;
  std::uint64_t content_seed = 0;
  TensorF audio;   // n x 512
  TensorF motion;  // n x 137
};

// Additive decomposition of the motion track, exposed so tests and metrics
// can inspect individual contributions.
struct ClipParts {
  TensorF drive;        // gains * (W_m . phoneme)
  TensorF oscillation;  // identity oscillators
  TensorF blink;        // impulse train
  TensorF noise;        // per-channel AR(1)
};

ClipParts synthesize_parts(const IdentityProfile& identity,
                           std::uint64_t content_seed, std::int64_t n);
SyntheticClip synthesize_clip(const IdentityProfile& identity,
                              std::uint64_t content_seed, std::int64_t n,
                              std::string identity_tag = "");

// Clip container: magic "CSCL", u32 version, u32 n, audio block (n x 512
// little-endian f32), motion block (n x 137). Tags and seeds live in the
// manifest, not the clip file.
void write_clip(const std::string& path, const SyntheticClip& clip);
SyntheticClip read_clip(const std::string& path);

enum class ClipRole { kTrain, kTemplate, kEval };
const char* role_name(ClipRole role);
ClipRole parse_role(const std::string& name);

struct ManifestEntry {
  std::string identity_tag;
  ClipRole role = ClipRole::kTrain;
  std::string path;  // relative to the dataset root
  // From the seeds sidecar; required to regenerate phoneme tracks for
  // content-alignment metrics.
  std::uint64_t identity_seed = 0;
  std::uint64_t content_seed = 0;
};

struct Dataset {
  std::string root;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> select(const std::string& identity_tag,
                                           ClipRole role) const;
  std::vector<const ManifestEntry*> with_role(ClipRole role) const;
  std::vector<std::string> identities() const;  // unique, in manifest order
};

struct SplitConfig {
  std::uint64_t seed = 1;
  std::int64_t n_train_ids = 32;
  std::int64_t n_test_ids = 8;
  std::int64_t clips_per_id = 6;
  std::int64_t clip_len = 500;
};

// Writes clips/, manifest.txt and seeds.txt under dir and returns the loaded
// dataset. Train and test identity seed sets are disjoint by construction
// and verified.
Dataset build_splits(const std::string& dir, const SplitConfig& cfg);

Dataset load_dataset(const std::string& manifest_path);
std::string resolve_path(const Dataset& ds, const ManifestEntry& entry);
SyntheticClip load_clip(const Dataset& ds, const ManifestEntry& entry);

}  // namespace cs::data
