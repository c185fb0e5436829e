#include "driver.hpp"

#include <algorithm>
#include <chrono>

#include "cscore/errors.hpp"
#include "cscore/nn/rng.hpp"

namespace csc {
namespace {

using cs::TensorF;

TensorF slice_rows(const TensorF& t, std::int64_t a, std::int64_t b) {
  TensorF out(b - a, t.cols());
  for (std::int64_t i = a; i < b; ++i)
    for (std::int64_t c = 0; c < t.cols(); ++c) out.at(i - a, c) = t.at(i, c);
  return out;
}

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

cs::retrieval::StyleLibrary make_library(const cs::data::Dataset& ds,
                                         const std::string& identity_tag,
                                         std::int64_t count,
                                         std::int64_t frames) {
  const auto templates = ds.select(identity_tag, cs::data::ClipRole::kTemplate);
  cs::check_config(!templates.empty(),
                   "identity has no template clips: " + identity_tag);
  cs::retrieval::StyleLibrary lib;
  if (count < 0) {
    for (const auto* e : templates) {
      const cs::data::SyntheticClip clip = cs::data::load_clip(ds, *e);
      lib.add({clip.audio, clip.motion, identity_tag});
    }
    return lib;
  }
  cs::check_config(frames >= 1, "library segment length must be positive");
  std::int64_t made = 0;
  for (const auto* e : templates) {
    if (made == count) break;
    const cs::data::SyntheticClip clip = cs::data::load_clip(ds, *e);
    for (std::int64_t off = 0; off + frames <= clip.motion.rows() && made < count;
         off += frames) {
      lib.add({slice_rows(clip.audio, off, off + frames),
               slice_rows(clip.motion, off, off + frames), identity_tag});
      ++made;
    }
  }
  cs::check_config(made == count,
                   "not enough template material for the requested library "
                   "size: " + identity_tag);
  return lib;
}

EvalRun run_eval_set(const cs::gen::GeneratorModel& model,
                     const cs::data::Dataset& ds,
                     const cs::gen::SamplerConfig& base_sampler,
                     const EvalSpec& spec) {
  cs::check_config(spec.eval_clips >= 1 && spec.eval_frames >= 1,
                   "eval volume must be positive");

  EvalRun run;
  std::vector<cs::metrics::TaggedClip> generated, reference;
  std::vector<std::int64_t> frame_ns;
  std::vector<double> syncs;
  std::int64_t clip_counter = 0;

  for (const std::string& tag : ds.identities()) {
    const auto evals = ds.select(tag, cs::data::ClipRole::kEval);
    if (evals.empty()) continue;

    const cs::retrieval::StyleLibrary lib =
        spec.empty_library
            ? cs::retrieval::StyleLibrary{}
            : make_library(ds, tag, spec.lib_templates, spec.lib_frames);

    for (std::size_t j = 0; j < evals.size(); ++j) {
      const cs::data::ManifestEntry& entry = *evals[j];
      const cs::data::SyntheticClip clip = cs::data::load_clip(ds, entry);
      reference.push_back({tag, clip.motion});
      if (static_cast<std::int64_t>(j) >= spec.eval_clips) continue;

      const std::int64_t n =
          std::min<std::int64_t>(spec.eval_frames, clip.audio.rows());
      cs::gen::SamplerConfig sampler = base_sampler;
      sampler.seed = cs::rng::derive_seed(spec.sampler_seed,
                                          static_cast<std::uint64_t>(
                                              0x1000 + clip_counter));
      ++clip_counter;

      cs::gen::GenerationSession session(model, lib, sampler, spec.lookahead,
                                         spec.query_mode);
      TensorF motion(0, cs::codec::kMotionDim);
      const auto take = [&](const std::vector<cs::gen::StreamFrame>& frames,
                            std::int64_t start_ns) {
        std::int64_t prev = start_ns;
        for (const auto& f : frames) {
          cs::nn::append_rows(motion, f.motion);
          frame_ns.push_back(f.emit_ns - prev);
          prev = f.emit_ns;
        }
      };
      for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t t0 = now_ns();
        take(session.push_audio(slice_rows(clip.audio, i, i + 1)), t0);
      }
      const std::int64_t t0 = now_ns();
      take(session.flush(), t0);
      cs::check_state(motion.rows() == n,
                      "stream emitted a wrong frame count");

      const TensorF drive = cs::data::content_drive(
          cs::data::make_phoneme_track(entry.content_seed, n));
      const double sync = cs::metrics::sync_proxy(
          motion, drive, cs::data::kMouthLo, cs::data::kMouthHi);
      syncs.push_back(sync);

      generated.push_back({tag, motion});
      run.clips.push_back(
          {tag, entry.path, slice_rows(clip.audio, 0, n), motion, sync});
    }
  }
  cs::check_config(!generated.empty(), "dataset has no held-out clips");

  run.report.id_fed = cs::metrics::id_wise_frechet(
      generated, reference, cs::metrics::kExpressionLo,
      cs::metrics::kExpressionHi);
  run.report.id_fpd = cs::metrics::id_wise_frechet(
      generated, reference, cs::metrics::kPoseLo, cs::metrics::kPoseHi);
  double sync_sum = 0.0;
  for (double s : syncs) sync_sum += s;
  run.report.sync_proxy = sync_sum / static_cast<double>(syncs.size());
  run.report.sim_proxy = cs::metrics::sim_proxy(generated, reference);
  run.report.latency = cs::metrics::latency_stats(frame_ns);
  return run;
}

}  // namespace csc
