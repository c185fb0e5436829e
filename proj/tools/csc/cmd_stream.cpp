#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cscore/errors.hpp"
#include "cscore/metrics/metrics.hpp"
#include "cscore/nn/infer.hpp"
#include "commands.hpp"
#include "driver.hpp"

namespace csc {
namespace {

using cs::TensorF;

// input record: frame index + 512 comma-separated floats
TensorF parse_audio_record(const std::string& line,
                           std::int64_t expect_frame) {
  const char* p = line.c_str();
  char* end = nullptr;
  const long long idx = std::strtoll(p, &end, 10);
  cs::check(end != p && idx == expect_frame,
            "harness record out of order: expected frame " +
                std::to_string(expect_frame) + ", got '" + line + "'");
  p = end;
  TensorF row(1, cs::codec::kAudioDim);
  for (std::int64_t c = 0; c < cs::codec::kAudioDim; ++c) {
    cs::check(*p == ',', "harness record: expected 512 audio values");
    ++p;
    row.at(0, c) = std::strtof(p, &end);
    cs::check(end != p, "harness record: bad float");
    p = end;
  }
  cs::check(*p == '\0' || *p == '\r',
            "harness record: trailing bytes after 512 values");
  return row;
}

// output record: frame index + 137 floats + emission nanoseconds
void print_motion_record(const cs::gen::StreamFrame& f) {
  std::printf("%lld", static_cast<long long>(f.frame));
  for (std::int64_t c = 0; c < cs::codec::kMotionDim; ++c)
    std::printf(",%.9g", static_cast<double>(f.motion.at(0, c)));
  std::printf(",%lld\n", static_cast<long long>(f.emit_ns));
}

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

int cmd_stream(const StreamOpts& o) {
  cs::cfg::LoadedCodec codec = cs::cfg::load_codec_checkpoint(o.codec_ckpt);
  cs::cfg::LoadedGenerator gen =
      cs::cfg::load_generator_checkpoint(o.gen_ckpt, *codec.model);

  // Architecture comes from the checkpoint; a config file may swap the
  // runtime sampler settings, and single flags win over both.
  cs::cfg::RunConfig rc = gen.config;
  if (!o.config.empty()) {
    const cs::cfg::RunConfig file = load_run_config(o.config);
    rc.sampler = file.sampler;
    rc.gen.lookahead = file.gen.lookahead;
  } else {
    apply_seed_env(rc);
  }
  if (o.seed_set) rc.sampler.seed = o.seed;
  if (o.cfg_scale_set) rc.sampler.cfg_scale = o.cfg_scale;
  if (o.temperature_set) rc.sampler.temperature = o.temperature;
  if (o.top_k_set) rc.sampler.top_k = o.top_k;
  const std::int64_t lookahead =
      o.lookahead >= 0 ? o.lookahead : rc.gen.lookahead;

  cs::check_config(o.empty_library != !o.library.empty(),
                   "pass exactly one of --library and --empty-library");
  const cs::retrieval::StyleLibrary lib =
      o.empty_library ? cs::retrieval::StyleLibrary{}
                      : cs::retrieval::load_library(o.library);
  cs::check_config(o.use_stdin != !o.audio.empty(),
                   "pass exactly one of --audio and --stdin");

  cs::gen::GenerationSession session(*gen.model, lib, rc.sampler, lookahead,
                                     cs::gen::parse_query_mode(o.query_mode));

  TensorF audio(0, cs::codec::kAudioDim);
  TensorF motion(0, cs::codec::kMotionDim);
  std::vector<std::int64_t> frame_ns;
  const auto take = [&](const std::vector<cs::gen::StreamFrame>& frames,
                        std::int64_t start_ns) {
    std::int64_t prev = start_ns;
    for (const auto& f : frames) {
      cs::nn::append_rows(motion, f.motion);
      frame_ns.push_back(f.emit_ns - prev);
      prev = f.emit_ns;
      print_motion_record(f);
    }
  };

  if (o.use_stdin) {
    std::string line;
    std::int64_t i = 0;
    while (std::getline(std::cin, line)) {
      if (line.empty()) continue;
      const TensorF row = parse_audio_record(line, i);
      cs::nn::append_rows(audio, row);
      const std::int64_t t0 = now_ns();
      take(session.push_audio(row), t0);
      ++i;
    }
  } else {
    const cs::data::SyntheticClip clip = cs::data::read_clip(o.audio);
    for (std::int64_t i = 0; i < clip.audio.rows(); ++i) {
      TensorF row(1, cs::codec::kAudioDim);
      for (std::int64_t c = 0; c < cs::codec::kAudioDim; ++c)
        row.at(0, c) = clip.audio.at(i, c);
      cs::nn::append_rows(audio, row);
      const std::int64_t t0 = now_ns();
      take(session.push_audio(row), t0);
    }
  }
  const std::int64_t t0 = now_ns();
  take(session.flush(), t0);
  std::fflush(stdout);
  cs::check_state(motion.rows() == audio.rows(),
                  "stream emitted a wrong frame count");

  cs::data::SyntheticClip out_clip;
  out_clip.audio = audio;
  out_clip.motion = motion;
  cs::data::write_clip(o.out, out_clip);
  write_config_sidecar(o.out + ".config.txt", rc);

  const cs::metrics::LatencyStats lat = cs::metrics::latency_stats(frame_ns);
  const std::string latency_path =
      o.latency.empty() ? o.out + ".latency.csv" : o.latency;
  std::ofstream lcsv(latency_path);
  cs::check(lcsv.good(), "cannot write " + latency_path);
  lcsv << "# config_hash=" << cs::cfg::config_hash(rc) << "\n"
       << "# p50_ns=" << lat.p50_ns << " p95_ns=" << lat.p95_ns
       << " max_ns=" << lat.max_ns << "\n"
       << "frame,compute_ns\n";
  for (std::size_t i = 0; i < frame_ns.size(); ++i)
    lcsv << i << "," << frame_ns[i] << "\n";
  lcsv.flush();
  cs::check(lcsv.good(), "write failed: " + latency_path);

  std::fprintf(stderr,
               "streamed %lld frames (lookahead %lld): p50 %.3f ms, "
               "p95 %.3f ms, max %.3f ms\n",
               static_cast<long long>(motion.rows()),
               static_cast<long long>(lookahead), lat.p50_ns / 1e6,
               lat.p95_ns / 1e6, lat.max_ns / 1e6);
  std::fprintf(stderr, "motion %s, latency %s\n", o.out.c_str(),
               latency_path.c_str());
  return 0;
}

}  // namespace csc
