#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "csc: streaming audio-driven facial motion at desk scale.\n"
      "Data synthesis, two-stage training, streaming inference, metrics and\n"
      "ablation drivers. All commands are deterministic under fixed seeds."};
  app.require_subcommand(1);
  app.footer(csc::config_keys_help());

  int exit_code = 0;

  csc::GenDataOpts gd;
  auto* c_gd = app.add_subcommand(
      "gen-data", "Synthesize the identity-split dataset");
  c_gd->add_option("--config", gd.config, "config file");
  c_gd->add_option("--out", gd.out, "dataset directory")->required();
  c_gd->add_flag("--force", gd.force, "replace an existing directory");
  c_gd->callback([&] { exit_code = csc::cmd_gen_data(gd); });

  csc::TrainCodecOpts tc;
  auto* c_tc = app.add_subcommand(
      "train-codec", "Stage 1: fit the motion codec");
  c_tc->add_option("--config", tc.config, "config file");
  c_tc->add_option("--data", tc.data, "dataset directory")->required();
  c_tc->add_option("--out", tc.out, "checkpoint path")->required();
  c_tc->add_option("--stride", tc.stride, "training window stride");
  c_tc->add_flag("--quiet", tc.quiet, "suppress step logs");
  c_tc->callback([&] { exit_code = csc::cmd_train_codec(tc); });

  csc::TrainGenOpts tg;
  auto* c_tg = app.add_subcommand(
      "train-gen", "Stage 2: train retriever and token generator");
  c_tg->add_option("--config", tg.config, "config file");
  c_tg->add_option("--data", tg.data, "dataset directory")->required();
  c_tg->add_option("--codec", tg.codec_ckpt, "frozen codec checkpoint")
      ->required();
  c_tg->add_option("--out", tg.out, "checkpoint path")->required();
  c_tg->add_flag("--quiet", tg.quiet, "suppress step logs");
  c_tg->callback([&] { exit_code = csc::cmd_train_gen(tg); });

  csc::StreamOpts st;
  auto* c_st = app.add_subcommand(
      "stream",
      "Stream audio through the generator; emits harness records on stdout");
  c_st->add_option("--config", st.config, "config file (sampler overrides)");
  c_st->add_option("--codec", st.codec_ckpt, "codec checkpoint")->required();
  c_st->add_option("--gen", st.gen_ckpt, "generator checkpoint")->required();
  c_st->add_option("--library", st.library, "style library manifest");
  c_st->add_flag("--empty-library", st.empty_library,
                 "run with the learned null prior only");
  c_st->add_option("--audio", st.audio, "input clip file");
  c_st->add_flag("--stdin", st.use_stdin,
                 "read harness records from standard input");
  c_st->add_option("--out", st.out, "output motion clip")->required();
  c_st->add_option("--latency", st.latency,
                   "latency CSV (default <out>.latency.csv)");
  c_st->add_option("--lookahead", st.lookahead,
                   "audio frames readable beyond the current frame");
  auto* st_seed = c_st->add_option("--seed", st.seed, "sampler seed");
  auto* st_cfg = c_st->add_option("--cfg-scale", st.cfg_scale,
                                  "guidance scale (1 = conditional only)");
  auto* st_tmp = c_st->add_option("--temperature", st.temperature,
                                  "sampling temperature");
  auto* st_tk = c_st->add_option("--top-k", st.top_k, "top-k truncation");
  c_st->add_option("--query-mode", st.query_mode,
                   "retrieval query modality: full|audio-only|motion-only");
  c_st->callback([&] {
    st.seed_set = st_seed->count() > 0;
    st.cfg_scale_set = st_cfg->count() > 0;
    st.temperature_set = st_tmp->count() > 0;
    st.top_k_set = st_tk->count() > 0;
    exit_code = csc::cmd_stream(st);
  });

  csc::EvalOpts ev;
  auto* c_ev = app.add_subcommand(
      "eval", "Score generated motion against the reference set");
  c_ev->add_option("--data", ev.data, "dataset directory")->required();
  c_ev->add_option("--generated", ev.generated,
                   "generated-set manifest (or directory holding one)")
      ->required();
  c_ev->add_option("--out", ev.out, "report CSV path")->required();
  c_ev->add_option("--codec", ev.codec_ckpt,
                   "codec checkpoint (enables the causality audit)");
  c_ev->add_option("--gen", ev.gen_ckpt, "generator checkpoint");
  c_ev->add_option("--audit-trials", ev.audit_trials,
                   "random truncation points to try");
  c_ev->add_option("--audit-frames", ev.audit_frames,
                   "audio frames fed to the audit runner");
  c_ev->add_option("--lookahead", ev.lookahead, "audit lookahead");
  c_ev->callback([&] { exit_code = csc::cmd_eval(ev); });

  csc::AblateOpts ab;
  auto* c_ab = app.add_subcommand(
      "ablate", "Run one comparison axis and tabulate proxy metrics");
  c_ab->add_option("--suite", ab.suite,
                   "retrieval|modality|lookahead|library-size")
      ->required();
  c_ab->add_option("--data", ab.data, "dataset directory")->required();
  c_ab->add_option("--codec", ab.codec_ckpt, "codec checkpoint")->required();
  c_ab->add_option("--gen", ab.gen_ckpt, "generator checkpoint")->required();
  c_ab->add_option("--out", ab.out, "table CSV path")->required();
  c_ab->add_option("--seeds", ab.seeds, "sampler seeds, one run each")
      ->delimiter(',');
  c_ab->add_option("--eval-clips", ab.eval_clips,
                   "held-out clips streamed per identity");
  c_ab->add_option("--eval-frames", ab.eval_frames,
                   "audio frames streamed per clip");
  c_ab->add_option("--write-dir", ab.write_dir,
                   "keep per-variant generated clips under this directory");
  c_ab->callback([&] { exit_code = csc::cmd_ablate(ab); });

  csc::ScheduleDumpOpts sd;
  auto* c_sd = app.add_subcommand(
      "schedule-dump", "Print the token emission schedule as CSV");
  c_sd->add_option("--T", sd.T, "window length in frames");
  c_sd->add_option("--resolutions", sd.resolutions,
                   "per-level token counts, coarse to fine")
      ->delimiter(',');
  c_sd->add_option("--out", sd.out, "CSV path (default stdout)");
  c_sd->callback([&] { exit_code = csc::cmd_schedule_dump(sd); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return exit_code;
}
