#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "cscore/errors.hpp"
#include "cscore/metrics/audit.hpp"
#include "cscore/metrics/metrics.hpp"
#include "cscore/nn/infer.hpp"
#include "cscore/sched/schedule.hpp"
#include "commands.hpp"
#include "driver.hpp"

namespace fs = std::filesystem;

namespace csc {
namespace {

using cs::TensorF;

struct GeneratedEntry {
  std::string identity_tag;
  std::string gen_path;  // resolved
  std::string ref_path;  // dataset-relative
};

// Generated-set manifest: `<identity_tag> <generated_clip> <reference_clip>`
// per line; generated paths resolve against the manifest directory,
// reference paths against the dataset root.
std::vector<GeneratedEntry> load_generated_manifest(const std::string& path) {
  std::ifstream in(path);
  cs::check(in.good(), "cannot open generated manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<GeneratedEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    GeneratedEntry e;
    std::string gen_rel;
    if (!(ls >> e.identity_tag >> gen_rel >> e.ref_path))
      throw cs::IoError("malformed generated manifest line: " + line);
    e.gen_path = fs::path(gen_rel).is_absolute() ? gen_rel
                                                 : (base / gen_rel).string();
    out.push_back(std::move(e));
  }
  cs::check_config(!out.empty(), "generated manifest is empty: " + path);
  return out;
}

// Streaming layer of the causality audit: audio prefix in, emitted motion
// out, via a fresh fixed-seed session per call.
TensorF stream_runner(const cs::gen::GeneratorModel& model,
                      const cs::retrieval::StyleLibrary& lib,
                      const cs::gen::SamplerConfig& sampler,
                      std::int64_t lookahead, const TensorF& audio) {
  cs::gen::GenerationSession session(model, lib, sampler, lookahead);
  TensorF motion(0, cs::codec::kMotionDim);
  const auto take = [&](const std::vector<cs::gen::StreamFrame>& frames) {
    for (const auto& f : frames) cs::nn::append_rows(motion, f.motion);
  };
  for (std::int64_t i = 0; i < audio.rows(); ++i) {
    TensorF row(1, cs::codec::kAudioDim);
    for (std::int64_t c = 0; c < cs::codec::kAudioDim; ++c)
      row.at(0, c) = audio.at(i, c);
    take(session.push_audio(row));
  }
  take(session.flush());
  return motion;
}

}  // namespace

int cmd_eval(const EvalOpts& o) {
  const cs::data::Dataset ds = open_dataset(o.data);
  const std::string gen_manifest =
      fs::is_directory(o.generated)
          ? (fs::path(o.generated) / "generated_manifest.txt").string()
          : o.generated;
  const auto entries = load_generated_manifest(gen_manifest);

  std::map<std::string, const cs::data::ManifestEntry*> by_path;
  for (const auto& e : ds.entries) by_path[e.path] = &e;

  std::vector<cs::metrics::TaggedClip> generated, reference;
  std::vector<std::string> tags_seen;
  double sync_sum = 0.0;
  for (const auto& e : entries) {
    const cs::data::SyntheticClip clip = cs::data::read_clip(e.gen_path);
    generated.push_back({e.identity_tag, clip.motion});

    const auto it = by_path.find(e.ref_path);
    cs::check_config(it != by_path.end(),
                     "reference clip not in dataset manifest: " + e.ref_path);
    const TensorF drive = cs::data::content_drive(cs::data::make_phoneme_track(
        it->second->content_seed, clip.motion.rows()));
    sync_sum += cs::metrics::sync_proxy(clip.motion, drive, cs::data::kMouthLo,
                                        cs::data::kMouthHi);
    if (std::find(tags_seen.begin(), tags_seen.end(), e.identity_tag) ==
        tags_seen.end())
      tags_seen.push_back(e.identity_tag);
  }
  for (const std::string& tag : tags_seen)
    for (const auto* e : ds.select(tag, cs::data::ClipRole::kEval))
      reference.push_back({tag, cs::data::load_clip(ds, *e).motion});

  cs::metrics::MetricReport report;
  report.id_fed =
      cs::metrics::id_wise_frechet(generated, reference,
                                   cs::metrics::kExpressionLo,
                                   cs::metrics::kExpressionHi);
  report.id_fpd = cs::metrics::id_wise_frechet(
      generated, reference, cs::metrics::kPoseLo, cs::metrics::kPoseHi);
  report.sync_proxy = sync_sum / static_cast<double>(entries.size());
  report.sim_proxy = cs::metrics::sim_proxy(generated, reference);

  // Config identity: the generator checkpoint when given, otherwise the
  // dataset's own record.
  std::string hash;
  std::unique_ptr<cs::cfg::LoadedCodec> codec;
  std::unique_ptr<cs::cfg::LoadedGenerator> gen;
  if (!o.gen_ckpt.empty()) {
    cs::check_config(!o.codec_ckpt.empty(),
                     "--gen needs --codec for the audit runner");
    codec = std::make_unique<cs::cfg::LoadedCodec>(
        cs::cfg::load_codec_checkpoint(o.codec_ckpt));
    gen = std::make_unique<cs::cfg::LoadedGenerator>(
        cs::cfg::load_generator_checkpoint(o.gen_ckpt, *codec->model));
    hash = cs::cfg::config_hash(gen->config);
  } else {
    const fs::path rc_path = fs::path(ds.root) / "run_config.txt";
    hash = fs::exists(rc_path)
               ? cs::cfg::config_hash(cs::cfg::run_config_from(
                     cs::cfg::parse_key_values_file(rc_path.string())))
               : cs::cfg::config_hash(cs::cfg::RunConfig{});
  }

  if (gen != nullptr && o.audit_trials > 0) {
    // audit over the first streamed clip's audio, full-library session
    const auto& first = entries.front();
    const auto it = by_path.find(first.ref_path);
    const cs::data::SyntheticClip clip =
        cs::data::load_clip(ds, *it->second);
    const std::int64_t n =
        std::min<std::int64_t>(o.audit_frames, clip.audio.rows());
    TensorF audio(n, cs::codec::kAudioDim);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < cs::codec::kAudioDim; ++c)
        audio.at(i, c) = clip.audio.at(i, c);
    const cs::retrieval::StyleLibrary lib =
        make_library(ds, first.identity_tag, -1, -1);
    const cs::gen::SamplerConfig sampler = gen->config.sampler;
    const auto runner = [&](const TensorF& prefix) {
      return stream_runner(*gen->model, lib, sampler, o.lookahead, prefix);
    };
    const cs::metrics::AuditResult audit = cs::metrics::causality_audit(
        runner, audio, o.audit_trials, sampler.seed, o.lookahead);
    report.causality_violations = audit.violations;
    std::printf("causality audit: %lld/%lld violations (lookahead %lld)\n",
                static_cast<long long>(audit.violations),
                static_cast<long long>(audit.trials),
                static_cast<long long>(o.lookahead));
  }

  cs::metrics::write_report_csv(o.out, report, hash);
  std::printf("%s", cs::metrics::report_summary(report).c_str());
  std::printf("report %s (config_hash %s)\n", o.out.c_str(), hash.c_str());
  return report.causality_violations > 0 ? 1 : 0;
}

int cmd_ablate(const AblateOpts& o) {
  cs::cfg::LoadedCodec codec = cs::cfg::load_codec_checkpoint(o.codec_ckpt);
  cs::cfg::LoadedGenerator gen =
      cs::cfg::load_generator_checkpoint(o.gen_ckpt, *codec.model);
  const cs::data::Dataset ds = open_dataset(o.data);

  struct Variant {
    std::string name;
    EvalSpec spec;
  };
  std::vector<Variant> variants;
  const auto base = [&](std::uint64_t seed) {
    EvalSpec s;
    s.eval_clips = o.eval_clips;
    s.eval_frames = o.eval_frames;
    s.sampler_seed = seed;
    return s;
  };
  const auto add = [&](const std::string& name, auto&& tweak) {
    EvalSpec s = base(0);
    tweak(s);
    variants.push_back({name, s});
  };
  if (o.suite == "retrieval") {
    add("full", [](EvalSpec&) {});
    add("no-retrieval", [](EvalSpec& s) { s.empty_library = true; });
    add("audio-only",
        [](EvalSpec& s) { s.query_mode = cs::gen::QueryMode::kAudioOnly; });
    add("motion-only",
        [](EvalSpec& s) { s.query_mode = cs::gen::QueryMode::kMotionOnly; });
  } else if (o.suite == "modality") {
    add("full", [](EvalSpec&) {});
    add("audio-only",
        [](EvalSpec& s) { s.query_mode = cs::gen::QueryMode::kAudioOnly; });
    add("motion-only",
        [](EvalSpec& s) { s.query_mode = cs::gen::QueryMode::kMotionOnly; });
  } else if (o.suite == "lookahead") {
    add("lookahead-0", [](EvalSpec& s) { s.lookahead = 0; });
    add("lookahead-5", [](EvalSpec& s) { s.lookahead = 5; });
  } else if (o.suite == "library-size") {
    add("1x100", [](EvalSpec& s) { s.lib_templates = 1; s.lib_frames = 100; });
    add("1x500", [](EvalSpec& s) { s.lib_templates = 1; s.lib_frames = 500; });
    add("5x200", [](EvalSpec& s) { s.lib_templates = 5; s.lib_frames = 200; });
  } else {
    throw cs::ConfigError(
        "unknown suite '" + o.suite +
        "' (retrieval|modality|lookahead|library-size)");
  }

  std::ofstream csv(o.out);
  cs::check(csv.good(), "cannot write " + o.out);
  csv << "# config_hash=" << cs::cfg::config_hash(gen.config) << "\n"
      << "suite,variant,seed,id_fed,id_fpd,sync_proxy,sim_proxy,p95_ns\n";

  char buf[256];
  for (const Variant& v : variants) {
    double fed = 0.0, fpd = 0.0, sync = 0.0, sim = 0.0;
    for (std::uint64_t seed : o.seeds) {
      EvalSpec spec = v.spec;
      spec.sampler_seed = seed;
      const EvalRun run =
          run_eval_set(*gen.model, ds, gen.config.sampler, spec);
      const cs::metrics::MetricReport& r = run.report;
      std::snprintf(buf, sizeof(buf),
                    "%s,%s,%llu,%.9g,%.9g,%.9g,%.9g,%lld\n", o.suite.c_str(),
                    v.name.c_str(), static_cast<unsigned long long>(seed),
                    r.id_fed.mean, r.id_fpd.mean, r.sync_proxy, r.sim_proxy,
                    static_cast<long long>(r.latency.p95_ns));
      csv << buf;
      std::printf("%s", buf);
      fed += r.id_fed.mean;
      fpd += r.id_fpd.mean;
      sync += r.sync_proxy;
      sim += r.sim_proxy;

      if (!o.write_dir.empty()) {
        const fs::path dir =
            fs::path(o.write_dir) / (v.name + "_s" + std::to_string(seed));
        fs::create_directories(dir);
        std::ofstream man(dir / "generated_manifest.txt");
        man << "# config_hash=" << cs::cfg::config_hash(gen.config) << "\n";
        std::int64_t k = 0;
        for (const GeneratedClip& c : run.clips) {
          const std::string rel = "gen_" + std::to_string(k++) + ".cscl";
          cs::data::SyntheticClip out_clip;
          out_clip.audio = c.audio;
          out_clip.motion = c.motion;
          cs::data::write_clip((dir / rel).string(), out_clip);
          man << c.identity_tag << ' ' << rel << ' ' << c.ref_path << '\n';
        }
      }
    }
    const double n = static_cast<double>(o.seeds.size());
    std::snprintf(buf, sizeof(buf), "%s,%s,mean,%.9g,%.9g,%.9g,%.9g,\n",
                  o.suite.c_str(), v.name.c_str(), fed / n, fpd / n, sync / n,
                  sim / n);
    csv << buf;
    std::printf("%s", buf);
  }
  csv.flush();
  cs::check(csv.good(), "write failed: " + o.out);
  std::printf("table %s\n", o.out.c_str());
  return 0;
}

int cmd_schedule_dump(const ScheduleDumpOpts& o) {
  const cs::sched::EmissionSchedule schedule =
      cs::sched::build_schedule(o.T, o.resolutions);
  std::ostringstream out;
  out << "position,level,index,span_start,span_end\n";
  for (std::int64_t i = 0; i < schedule.total_tokens(); ++i) {
    const cs::sched::TokenAddress& a = schedule.at(i);
    out << i << ',' << a.level << ',' << a.index << ',' << a.span_start << ','
        << a.span_end << '\n';
  }
  if (o.out.empty()) {
    std::printf("%s", out.str().c_str());
  } else {
    std::ofstream f(o.out);
    cs::check(f.good(), "cannot write " + o.out);
    f << out.str();
    f.flush();
    cs::check(f.good(), "write failed: " + o.out);
    std::printf("schedule (%lld tokens over %lld frames) -> %s\n",
                static_cast<long long>(schedule.total_tokens()),
                static_cast<long long>(o.T), o.out.c_str());
  }
  return 0;
}

}  // namespace csc
