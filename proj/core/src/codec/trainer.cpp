#include "cscore/codec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cscore/errors.hpp"
#include "cscore/io_util.hpp"
#include "cscore/nn/rng.hpp"

namespace cs::codec {
namespace {

void dump_batch(const std::string& path, const std::vector<TensorF>& batch) {
  if (path.empty()) return;
  ioutil::FilePtr f = ioutil::open_file(path, "wb");
  ioutil::write_u32(f.get(), static_cast<std::uint32_t>(batch.size()));
  for (const TensorF& w : batch) {
    ioutil::write_u32(f.get(), static_cast<std::uint32_t>(w.rows()));
    ioutil::write_u32(f.get(), static_cast<std::uint32_t>(w.cols()));
    ioutil::write_f32_array(f.get(), w.data.data(), w.data.size());
  }
}

}  // namespace

std::vector<TensorF> collect_windows(const data::Dataset& ds,
                                     data::ClipRole role, std::int64_t T,
                                     std::int64_t stride) {
  check_config(T >= 1 && stride >= 1, "window size and stride must be >= 1");
  std::vector<TensorF> out;
  for (const data::ManifestEntry* e : ds.with_role(role)) {
    const data::SyntheticClip clip = data::load_clip(ds, *e);
    for (std::int64_t start = 0; start + T <= clip.motion.rows();
         start += stride) {
      TensorF w(T, clip.motion.cols());
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t c = 0; c < w.cols(); ++c)
          w.at(t, c) = clip.motion.at(start + t, c);
      out.push_back(std::move(w));
    }
  }
  return out;
}

double held_out_l1_target(const std::vector<TensorF>& windows) {
  check_state(!windows.empty(), "no held-out windows");
  const std::int64_t d = windows.front().cols();
  std::vector<double> sum(static_cast<std::size_t>(d), 0.0);
  std::vector<double> sumsq(static_cast<std::size_t>(d), 0.0);
  std::int64_t n = 0;
  for (const TensorF& w : windows) {
    for (std::int64_t t = 0; t < w.rows(); ++t)
      for (std::int64_t c = 0; c < d; ++c) {
        const double v = w.at(t, c);
        sum[static_cast<std::size_t>(c)] += v;
        sumsq[static_cast<std::size_t>(c)] += v * v;
      }
    n += w.rows();
  }
  double mean_std = 0.0;
  for (std::int64_t c = 0; c < d; ++c) {
    const double m = sum[static_cast<std::size_t>(c)] / n;
    const double var =
        std::max(0.0, sumsq[static_cast<std::size_t>(c)] / n - m * m);
    mean_std += std::sqrt(var);
  }
  mean_std /= static_cast<double>(d);
  return kReconTargetFraction * mean_std;
}

double held_out_l1(const CodecModel& model,
                   const std::vector<TensorF>& windows) {
  check_state(!windows.empty(), "no held-out windows");
  double abs_sum = 0.0;
  std::int64_t entries = 0;
  for (const TensorF& w : windows) {
    const EncodeResult enc = model.encode_window(w);
    DecoderSession dec(model);
    const TensorF rec = dec.decode_upto(enc.tokens, w.rows());
    check_shape(rec.same_shape(w), "decode shape mismatch");
    for (std::int64_t i = 0; i < w.size(); ++i)
      abs_sum += std::abs(static_cast<double>(
                     rec.data[static_cast<std::size_t>(i)]) -
                 static_cast<double>(w.data[static_cast<std::size_t>(i)]));
    entries += w.size();
  }
  return abs_sum / static_cast<double>(entries);
}

CodecTrainResult train_codec(CodecModel& model,
                             const std::vector<TensorF>& train_windows,
                             const std::vector<TensorF>& held_out_windows,
                             const CodecTrainConfig& tcfg) {
  check_config(tcfg.steps >= 1 && tcfg.batch >= 1, "bad training config");
  check_state(!train_windows.empty(), "no training windows");

  nn::AdamConfig acfg = tcfg.adam;
  acfg.total_steps = tcfg.steps;
  nn::Adam opt(acfg);
  rng::Rng sampler(rng::derive_seed(tcfg.seed, 0x636f6465));

  std::vector<TensorF> eval_set;
  for (const TensorF& w : held_out_windows) {
    if (static_cast<std::int64_t>(eval_set.size()) >= tcfg.max_eval_windows)
      break;
    eval_set.push_back(w);
  }

  CodecTrainResult res;
  res.held_out_target = held_out_l1_target(held_out_windows);

  const std::int64_t n = static_cast<std::int64_t>(train_windows.size());
  for (std::int64_t step = 1; step <= tcfg.steps; ++step) {
    std::vector<TensorF> batch;
    batch.reserve(static_cast<std::size_t>(tcfg.batch));
    for (std::int64_t b = 0; b < tcfg.batch; ++b)
      batch.push_back(train_windows[static_cast<std::size_t>(
          sampler.uniform_int(0, n - 1))]);

    nn::Tape<float> tape;
    const auto att = nn::attach_params<float>(tape, model.params());
    const auto nodes = model.build_loss(tape, att, batch, false);

    CodecLosses cur;
    cur.recon = tape.value(nodes.recon).at(0, 0);
    cur.velocity = tape.value(nodes.velocity).at(0, 0);
    cur.jitter = tape.value(nodes.jitter).at(0, 0);
    cur.entropy = tape.value(nodes.entropy).at(0, 0);
    cur.total = tape.value(nodes.total).at(0, 0);
    if (!std::isfinite(cur.total)) {
      dump_batch(tcfg.nan_dump_path, batch);
      throw StateError("codec loss diverged at step " + std::to_string(step) +
                       (tcfg.nan_dump_path.empty()
                            ? ""
                            : ", batch dumped to " + tcfg.nan_dump_path));
    }

    tape.backward(nodes.total);
    nn::accumulate_gradients(tape, att, model.params());
    opt.step(model.params());
    // warmed-up decay: the shadow tracks raw weights closely at first, so
    // short runs do not evaluate a blend with the random init
    model.params().ema_update(
        std::min(tcfg.ema_decay, (1.0 + step) / (10.0 + step)));

    res.last_batch = cur;
    res.steps_run = step;

    if (tcfg.verbose &&
        (step % tcfg.log_every == 0 || step == 1 || step == tcfg.steps)) {
      std::printf(
          "codec step %5lld  total %.4f  recon %.4f  vel %.4f  jit %.5f  "
          "ent %.4f\n",
          static_cast<long long>(step), cur.total, cur.recon, cur.velocity,
          cur.jitter, cur.entropy);
      std::fflush(stdout);
    }
  }

  model.params().swap_ema();
  res.held_out_l1 = held_out_l1(model, eval_set);
  model.params().swap_ema();
  res.reached_target = res.held_out_l1 < res.held_out_target;

  if (tcfg.verbose) {
    std::printf("codec held-out L1 %.5f (target %.5f) %s\n", res.held_out_l1,
                res.held_out_target,
                res.reached_target ? "reached" : "missed");
    std::fflush(stdout);
  }
  return res;
}

}  // namespace cs::codec
