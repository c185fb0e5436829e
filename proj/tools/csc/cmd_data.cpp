#include <cstdio>
#include <filesystem>

#include "cscore/codec/trainer.hpp"
#include "cscore/errors.hpp"
#include "cscore/gen/trainer.hpp"
#include "commands.hpp"

namespace fs = std::filesystem;

namespace csc {

int cmd_gen_data(const GenDataOpts& o) {
  cs::cfg::RunConfig rc = load_run_config(o.config);
  if (fs::exists(o.out)) {
    cs::check_config(o.force, "output path exists: " + o.out +
                                  " (pass --force to overwrite)");
    fs::remove_all(o.out);
  }
  const cs::data::Dataset ds = cs::data::build_splits(o.out, rc.data);
  write_config_sidecar((fs::path(o.out) / "run_config.txt").string(), rc);

  std::printf("dataset %s: %zu identities, %zu clips, %lld frames each\n",
              o.out.c_str(), ds.identities().size(), ds.entries.size(),
              static_cast<long long>(rc.data.clip_len));
  std::printf("config_hash %s\n", cs::cfg::config_hash(rc).c_str());
  return 0;
}

int cmd_train_codec(const TrainCodecOpts& o) {
  cs::cfg::RunConfig rc = load_run_config(o.config);
  const cs::data::Dataset ds = open_dataset(o.data);

  const std::int64_t T = rc.codec.T;
  const auto train_windows =
      cs::codec::collect_windows(ds, cs::data::ClipRole::kTrain, T, o.stride);
  const auto held_out =
      cs::codec::collect_windows(ds, cs::data::ClipRole::kEval, T, T);
  std::printf("stage 1: %zu training windows, %zu held-out windows\n",
              train_windows.size(), held_out.size());

  cs::codec::CodecModel model(rc.codec, rc.seed);
  cs::codec::CodecTrainConfig tcfg = rc.codec_train;
  tcfg.verbose = !o.quiet;
  if (tcfg.nan_dump_path.empty()) tcfg.nan_dump_path = o.out + ".nanbatch";

  const cs::codec::CodecTrainResult res =
      cs::codec::train_codec(model, train_windows, held_out, tcfg);
  cs::cfg::save_codec_checkpoint(o.out, model, rc);

  std::printf("held-out per-entry L1 %.6f (target %.6f) -> %s\n",
              res.held_out_l1, res.held_out_target,
              res.reached_target ? "reached" : "missed");
  std::printf("checkpoint %s (config_hash %s)\n", o.out.c_str(),
              cs::cfg::config_hash(rc).c_str());
  return 0;
}

int cmd_train_gen(const TrainGenOpts& o) {
  cs::cfg::RunConfig rc = load_run_config(o.config);
  cs::cfg::LoadedCodec codec = cs::cfg::load_codec_checkpoint(o.codec_ckpt);

  // A config that spells out codec settings must agree with the checkpoint
  // it is about to train against.
  if (config_file_sets(o.config, "codec"))
    cs::check_config(cs::cfg::codec_config_text(rc.codec) ==
                         cs::cfg::codec_config_text(codec.config.codec),
                     "codec/generator config mismatch: the config file and "
                     "the codec checkpoint disagree");
  rc.codec = codec.config.codec;

  cs::retrieval::RetrieverConfig rcfg = rc.retriever;
  rcfg.max_window = rc.codec.T;
  cs::gen::GeneratorModel model(*codec.model, rcfg, rc.gen, rc.seed);

  const cs::data::Dataset ds = open_dataset(o.data);
  const cs::gen::GenTrainData data =
      cs::gen::load_gen_train_data(ds, rc.codec.T);
  std::printf("stage 2: %zu clips, %zu windows, %zu libraries\n",
              data.clips.size(), data.items.size(), data.libraries.size());

  cs::gen::GenTrainConfig tcfg = rc.gen_train;
  tcfg.verbose = !o.quiet;
  if (tcfg.nan_dump_path.empty()) tcfg.nan_dump_path = o.out + ".nanbatch";

  const std::uint64_t codec_before = param_digest(codec.model->params());
  const cs::gen::GenTrainResult res =
      cs::gen::train_generator(model, data, tcfg);
  const std::uint64_t codec_after = param_digest(codec.model->params());
  cs::check_state(codec_before == codec_after,
                  "frozen codec weights drifted during stage 2");
  std::printf("codec weights bit-identical through stage 2 (digest %016llx)\n",
              static_cast<unsigned long long>(codec_after));

  cs::cfg::save_generator_checkpoint(o.out, model, rc);

  for (std::size_t l = 0; l < res.final_ce.size(); ++l)
    std::printf("level %zu CE: %.4f -> %.4f\n", l + 1, res.initial_ce[l],
                res.final_ce[l]);
  std::printf("prior loss (trailing mean) %.6f\n", res.final_prior);
  std::printf("cross-entropy drop target %s\n",
              res.ce_dropped ? "reached" : "missed");
  std::printf("checkpoint %s (config_hash %s)\n", o.out.c_str(),
              cs::cfg::config_hash(rc).c_str());
  return 0;
}

}  // namespace csc
