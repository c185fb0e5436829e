#include "cscore/gen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "cscore/errors.hpp"
#include "cscore/io_util.hpp"
#include "cscore/nn/tape.hpp"
#include "cscore/nn/transformer.hpp"

namespace cs::gen {
namespace {

TensorF slice_rows_copy(const TensorF& x, std::int64_t r0, std::int64_t r1) {
  TensorF out(r1 - r0, x.cols());
  for (std::int64_t i = r0; i < r1; ++i)
    for (std::int64_t c = 0; c < x.cols(); ++c) out.at(i - r0, c) = x.at(i, c);
  return out;
}

struct ItemTensors {
  TensorF motion, audio;            // T rows each
  TensorF prev_motion, prev_audio;  // T rows, or empty at stream start
  const retrieval::StyleLibrary* library = nullptr;
};

ItemTensors materialize(const GenTrainData& data, const WindowRef& ref,
                        std::int64_t T) {
  const data::SyntheticClip& clip =
      data.clips[static_cast<std::size_t>(ref.clip)];
  const std::int64_t f0 = ref.window * T;
  ItemTensors it;
  it.motion = slice_rows_copy(clip.motion, f0, f0 + T);
  it.audio = slice_rows_copy(clip.audio, f0, f0 + T);
  if (ref.window > 0) {
    it.prev_motion = slice_rows_copy(clip.motion, f0 - T, f0);
    it.prev_audio = slice_rows_copy(clip.audio, f0 - T, f0);
  }
  it.library = &data.libraries[static_cast<std::size_t>(
      data.clip_library[static_cast<std::size_t>(ref.clip)])];
  return it;
}

retrieval::StyleLibrary chunk_library(const retrieval::StyleLibrary& full,
                                      std::int64_t chunk, rng::Rng& rng) {
  retrieval::StyleLibrary out;
  for (const retrieval::StyleTemplate& t : full.templates()) {
    if (t.rows() <= chunk) {
      out.add(t);
      continue;
    }
    const std::int64_t start = rng.uniform_int(0, t.rows() - chunk);
    retrieval::StyleTemplate s;
    s.identity_tag = t.identity_tag;
    s.audio = slice_rows_copy(t.audio, start, start + chunk);
    s.motion = slice_rows_copy(t.motion, start, start + chunk);
    out.add(std::move(s));
  }
  return out;
}

// previous window (zeros plus pad flags at stream start) followed by the
// given current-window motion rows; audio is always the ground truth
retrieval::QueryHistory make_history(const ItemTensors& it,
                                     const TensorF& cur_motion,
                                     std::int64_t fr_cut, std::int64_t T) {
  retrieval::QueryHistory h;
  const std::int64_t n = T + fr_cut;
  h.audio = TensorF(n, codec::kAudioDim);
  h.motion = TensorF(n, codec::kMotionDim);
  h.pad.assign(static_cast<std::size_t>(n), 0);
  if (it.prev_motion.size() > 0) {
    for (std::int64_t i = 0; i < T; ++i) {
      for (std::int64_t c = 0; c < codec::kAudioDim; ++c)
        h.audio.at(i, c) = it.prev_audio.at(i, c);
      for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
        h.motion.at(i, c) = it.prev_motion.at(i, c);
    }
  } else {
    for (std::int64_t i = 0; i < T; ++i)
      h.pad[static_cast<std::size_t>(i)] = 1;
  }
  for (std::int64_t i = 0; i < fr_cut; ++i) {
    for (std::int64_t c = 0; c < codec::kAudioDim; ++c)
      h.audio.at(T + i, c) = it.audio.at(i, c);
    for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
      h.motion.at(T + i, c) = cur_motion.at(i, c);
  }
  return h;
}

// supervision for a prior of T + fr_cut + 1 rows
TensorF prior_target(const ItemTensors& it, std::int64_t fr_cut,
                     std::int64_t T) {
  TensorF t(T + fr_cut + 1, codec::kMotionDim);
  if (it.prev_motion.size() > 0)
    for (std::int64_t i = 0; i < T; ++i)
      for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
        t.at(i, c) = it.prev_motion.at(i, c);
  for (std::int64_t i = 0; i <= fr_cut; ++i)
    for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
      t.at(T + i, c) = it.motion.at(i, c);
  return t;
}

void dump_items(const std::string& path,
                const std::vector<ItemTensors>& batch) {
  if (path.empty()) return;
  ioutil::FilePtr f = ioutil::open_file(path, "wb");
  ioutil::write_u32(f.get(), static_cast<std::uint32_t>(batch.size()));
  const auto put = [&](const TensorF& t) {
    ioutil::write_u32(f.get(), static_cast<std::uint32_t>(t.rows()));
    ioutil::write_u32(f.get(), static_cast<std::uint32_t>(t.cols()));
    ioutil::write_f32_array(f.get(), t.data.data(), t.data.size());
  };
  for (const ItemTensors& it : batch) {
    put(it.motion);
    put(it.audio);
    put(it.prev_motion);
    put(it.prev_audio);
  }
}

}  // namespace

void GenTrainConfig::validate() const {
  check_config(steps >= 1 && batch >= 1, "gen train: steps and batch >= 1");
  check_config(ema_decay > 0.0 && ema_decay < 1.0,
               "gen train: ema_decay in (0,1)");
  check_config(template_chunk >= 1, "gen train: template_chunk >= 1");
  check_config(!lookahead_choices.empty(),
               "gen train: lookahead_choices non-empty");
  for (std::int64_t k : lookahead_choices)
    check_config(k >= 0, "gen train: lookahead >= 0");
  check_config(ce_window >= 1, "gen train: ce_window >= 1");
}

GenTrainData load_gen_train_data(const data::Dataset& ds, std::int64_t T) {
  GenTrainData d;
  for (const std::string& tag : ds.identities()) {
    const auto train_entries = ds.select(tag, data::ClipRole::kTrain);
    if (train_entries.empty()) continue;
    retrieval::StyleLibrary lib;
    for (const data::ManifestEntry* e :
         ds.select(tag, data::ClipRole::kTemplate)) {
      data::SyntheticClip c = data::load_clip(ds, *e);
      retrieval::StyleTemplate t;
      t.identity_tag = c.identity_tag;
      t.audio = std::move(c.audio);
      t.motion = std::move(c.motion);
      lib.add(std::move(t));
    }
    const std::int64_t li = static_cast<std::int64_t>(d.libraries.size());
    d.libraries.push_back(std::move(lib));
    for (const data::ManifestEntry* e : train_entries) {
      data::SyntheticClip clip = data::load_clip(ds, *e);
      const std::int64_t windows = clip.motion.rows() / T;
      check_config(windows >= 1, "training clip shorter than one window: " +
                                     e->path);
      const std::int64_t ci = static_cast<std::int64_t>(d.clips.size());
      d.clips.push_back(std::move(clip));
      d.clip_library.push_back(li);
      for (std::int64_t w = 0; w < windows; ++w) d.items.push_back({ci, w});
    }
  }
  check_config(!d.items.empty(), "no training windows found");
  return d;
}

GenTrainResult train_generator(GeneratorModel& model,
                               const GenTrainData& data,
                               const GenTrainConfig& tcfg) {
  tcfg.validate();
  const codec::CodecConfig& ccfg = model.codec().config();
  const std::int64_t T = ccfg.T;
  const std::int64_t L = ccfg.levels();
  const std::int64_t classes = ccfg.classes();
  const sched::EmissionSchedule& schedule = model.schedule();
  const std::int64_t N = schedule.total_tokens();
  const retrieval::RetrieverModel& retriever = model.retriever();
  nn::ParameterStore& store = model.params();
  const GenConfig& gcfg = model.config();

  nn::AdamConfig acfg = tcfg.adam;
  acfg.total_steps = tcfg.steps;
  nn::Adam opt(acfg);
  rng::Rng rng(rng::derive_seed(tcfg.seed, 0x67747261));

  // per-schedule-position tables, shared by every step
  std::vector<std::int64_t> lvl_ids(static_cast<std::size_t>(N));
  TensorF ctx_pos(N, gcfg.width);
  std::vector<std::vector<std::int64_t>> level_positions(
      static_cast<std::size_t>(L));
  for (std::int64_t g = 0; g < N; ++g) {
    const sched::TokenAddress& a = schedule.at(g);
    lvl_ids[static_cast<std::size_t>(g)] = a.level - 1;
    for (std::int64_t c = 0; c < gcfg.width; ++c)
      ctx_pos.at(g, c) = model.frame_posenc().at(a.span_start, c);
    level_positions[static_cast<std::size_t>(a.level - 1)].push_back(g);
  }
  TensorF audio_pos = slice_rows_copy(model.frame_posenc(), 0, T);

  GenTrainResult res;
  std::vector<std::vector<double>> ce_hist;
  std::vector<double> prior_hist;

  for (std::int64_t step = 1; step <= tcfg.steps; ++step) {
    std::vector<ItemTensors> batch;
    batch.reserve(static_cast<std::size_t>(tcfg.batch));
    for (std::int64_t b = 0; b < tcfg.batch; ++b)
      batch.push_back(materialize(
          data,
          data.items[static_cast<std::size_t>(rng.uniform_int(
              0, static_cast<std::int64_t>(data.items.size()) - 1))],
          T));

    nn::TapeF tape;
    nn::AttachedParams<float> att = nn::attach_params(tape, store, false);
    std::vector<double> step_ce(static_cast<std::size_t>(L), 0.0);
    double step_prior = 0.0;
    nn::TapeF::Id total = -1;

    for (const ItemTensors& it : batch) {
      // all randomness is drawn up front in a fixed order
      const std::int64_t fr_cut = rng.uniform_int(0, T - 1);
      const bool dropped = rng.uniform() < gcfg.cfg_dropout;
      const std::int64_t k_item =
          tcfg.lookahead_choices[static_cast<std::size_t>(rng.uniform_int(
              0,
              static_cast<std::int64_t>(tcfg.lookahead_choices.size()) - 1))];

      // frozen codec supplies the targets; no gradient flows into it
      const codec::EncodeResult enc = model.codec().encode_window(it.motion);
      std::vector<std::int64_t> targets(static_cast<std::size_t>(N));
      std::vector<std::int64_t> prev_ids(static_cast<std::size_t>(N));
      std::int64_t prev = classes;
      for (std::int64_t g = 0; g < N; ++g) {
        const sched::TokenAddress& a = schedule.at(g);
        const std::int64_t cls =
            enc.tokens.levels[static_cast<std::size_t>(a.level - 1)]
                .class_index(a.index);
        targets[static_cast<std::size_t>(g)] = cls;
        prev_ids[static_cast<std::size_t>(g)] = prev;
        prev = cls;
      }

      const retrieval::StyleLibrary chunk =
          chunk_library(*it.library, tcfg.template_chunk, rng);
      const auto [mem_k, mem_v] =
          retriever.encode_library_graph<float>(tape, att, chunk);

      // pass one: teacher-forced history up to the cut
      nn::TapeF::Id prior1 = -1;
      if (!dropped || gcfg.supervise_first_pass) {
        const retrieval::QueryInputs q1 = retriever.build_query(
            make_history(it, it.motion, fr_cut, T), T + fr_cut + 1);
        prior1 = retriever.retrieve_graph<float>(tape, att, mem_k, mem_v, q1);
      }

      // token context rows in schedule order
      const nn::TapeF::Id ctx = tape.add(
          tape.add(tape.gather_rows(att.id(store, "gen.embed"), prev_ids),
                   tape.gather_rows(att.id(store, "gen.level"), lvl_ids)),
          tape.constant(ctx_pos));

      std::vector<std::pair<std::string, nn::CrossStream<float>>> crosses;
      if (dropped) {
        for (const char* name : {"audio", "hist", "prior"}) {
          nn::CrossStream<float> cs;
          cs.source = att.id(store, std::string("gen.null.") + name);
          cs.mask = nn::AttentionMask::dense();
          crosses.emplace_back(name, cs);
        }
      } else {
        {
          nn::CrossStream<float> cs;
          cs.source = tape.add(tape.affine(tape.constant(it.audio),
                                           att.id(store, "gen.audio.w"),
                                           att.id(store, "gen.audio.b")),
                               tape.constant(audio_pos));
          std::vector<std::uint8_t> allow(static_cast<std::size_t>(N * T), 0);
          for (std::int64_t g = 0; g < N; ++g) {
            const std::int64_t lim =
                std::min(schedule.at(g).span_start + k_item, T - 1);
            for (std::int64_t j = 0; j <= lim; ++j)
              allow[static_cast<std::size_t>(g * T + j)] = 1;
          }
          cs.mask = nn::AttentionMask::custom(N, T, std::move(allow));
          crosses.emplace_back("audio", cs);
        }
        {
          TensorF feats(T, codec::kMotionDim + 1);
          if (it.prev_motion.size() > 0) {
            for (std::int64_t i = 0; i < T; ++i)
              for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
                feats.at(i, c) = it.prev_motion.at(i, c);
          } else {
            for (std::int64_t i = 0; i < T; ++i)
              feats.at(i, codec::kMotionDim) = 1.0f;
          }
          nn::CrossStream<float> cs;
          cs.source = tape.add(tape.affine(tape.constant(std::move(feats)),
                                           att.id(store, "gen.hist.w"),
                                           att.id(store, "gen.hist.b")),
                               tape.constant(audio_pos));
          cs.mask = nn::AttentionMask::dense();
          crosses.emplace_back("hist", cs);
        }
        {
          const std::int64_t np = T + fr_cut + 1;
          nn::CrossStream<float> cs;
          cs.source = tape.add(
              tape.affine(prior1, att.id(store, "gen.prior.w"),
                          att.id(store, "gen.prior.b")),
              tape.constant(slice_rows_copy(model.prior_posenc2(), 0, np)));
          std::vector<std::uint8_t> allow(static_cast<std::size_t>(N * np),
                                          0);
          for (std::int64_t g = 0; g < N; ++g) {
            const std::int64_t lim =
                std::min(T + schedule.at(g).span_start, np - 1);
            for (std::int64_t i = 0; i <= lim; ++i)
              allow[static_cast<std::size_t>(g * np + i)] = 1;
          }
          cs.mask = nn::AttentionMask::custom(N, np, std::move(allow));
          crosses.emplace_back("prior", cs);
        }
      }

      const nn::TapeF::Id out = nn::apply_transformer(
          tape, store, att, "gen", model.token_tf_config(), ctx,
          nn::AttentionMask::causal(), crosses);
      const nn::TapeF::Id logits = tape.affine(
          out, att.id(store, "gen.out.w"), att.id(store, "gen.out.b"));

      nn::TapeF::Id ce_acc = -1;
      for (std::int64_t l = 0; l < L; ++l) {
        std::vector<std::int64_t> tl;
        for (std::int64_t g : level_positions[static_cast<std::size_t>(l)])
          tl.push_back(targets[static_cast<std::size_t>(g)]);
        const nn::TapeF::Id lg = tape.gather_rows(
            logits, level_positions[static_cast<std::size_t>(l)]);
        const nn::TapeF::Id ce =
            tape.softmax_cross_entropy(lg, std::move(tl));
        step_ce[static_cast<std::size_t>(l)] +=
            static_cast<double>(tape.value(ce).at(0, 0)) /
            static_cast<double>(tcfg.batch);
        const nn::TapeF::Id w = tape.scale(
            ce, static_cast<float>(gcfg.level_weight(l + 1)));
        ce_acc = ce_acc < 0 ? w : tape.add(ce_acc, w);
      }

      // pass two: replace the motion history with self-generated frames
      // (plain data as far as the tape is concerned) and re-query
      TensorF sampled(0, codec::kMotionDim);
      if (fr_cut >= 1) {
        const std::int64_t prefix = schedule.slice(fr_cut - 1).second;
        codec::TokenHierarchy tok = codec::TokenHierarchy::empty_like(ccfg);
        const TensorF& lv = tape.value(logits);
        SamplerConfig sc;
        sc.temperature = 1.0;
        sc.top_k = classes;
        for (std::int64_t g = 0; g < prefix; ++g) {
          std::vector<float> row(static_cast<std::size_t>(classes));
          for (std::int64_t c = 0; c < classes; ++c)
            row[static_cast<std::size_t>(c)] = lv.at(g, c);
          const std::int64_t cls = sample_token(row, sc, rng);
          tok.levels[static_cast<std::size_t>(
                         lvl_ids[static_cast<std::size_t>(g)])]
              .append_class(cls);
        }
        sampled = model.codec().decode_causal(tok, fr_cut);
      }
      const retrieval::QueryInputs q2 = retriever.build_query(
          make_history(it, sampled, fr_cut, T), T + fr_cut + 1);
      const nn::TapeF::Id prior2 =
          retriever.retrieve_graph<float>(tape, att, mem_k, mem_v, q2);
      const TensorF ptarget = prior_target(it, fr_cut, T);
      nn::TapeF::Id pl = retrieval::prior_loss(tape, prior2, ptarget);
      if (gcfg.supervise_first_pass && prior1 >= 0)
        pl = tape.scale(
            tape.add(pl, retrieval::prior_loss(tape, prior1, ptarget)),
            0.5f);
      step_prior += static_cast<double>(tape.value(pl).at(0, 0)) /
                    static_cast<double>(tcfg.batch);

      const nn::TapeF::Id item_total =
          tape.add(ce_acc, tape.scale(pl, static_cast<float>(gcfg.lambda_p)));
      total = total < 0 ? item_total : tape.add(total, item_total);
    }

    total = tape.scale(total, 1.0f / static_cast<float>(tcfg.batch));
    const double tv = static_cast<double>(tape.value(total).at(0, 0));
    if (!std::isfinite(tv)) {
      dump_items(tcfg.nan_dump_path, batch);
      throw StateError("generator training diverged at step " +
                       std::to_string(step) +
                       (tcfg.nan_dump_path.empty()
                            ? std::string()
                            : ", batch dumped to " + tcfg.nan_dump_path));
    }

    tape.backward(total);
    nn::accumulate_gradients(tape, att, store);
    opt.step(store);
    // same warmed-up decay as the codec trainer: short runs must not
    // evaluate a shadow blended with the random init
    store.ema_update(
        std::min(tcfg.ema_decay, (1.0 + step) / (10.0 + step)));

    ce_hist.push_back(step_ce);
    prior_hist.push_back(step_prior);
    if (tcfg.verbose && (step % tcfg.log_every == 0 || step == 1)) {
      std::printf("gen step %5lld lr %.2e total %.4f prior %.4f ce",
                  static_cast<long long>(step), opt.lr_at(step), tv,
                  step_prior);
      for (double c : step_ce) std::printf(" %.4f", c);
      std::printf("\n");
      std::fflush(stdout);
    }
  }

  res.steps_run = tcfg.steps;
  res.initial_ce = ce_hist.front();
  const std::int64_t wlen =
      std::min<std::int64_t>(tcfg.ce_window, tcfg.steps);
  res.final_ce.assign(static_cast<std::size_t>(L), 0.0);
  res.final_prior = 0.0;
  for (std::int64_t s = tcfg.steps - wlen; s < tcfg.steps; ++s) {
    for (std::int64_t l = 0; l < L; ++l)
      res.final_ce[static_cast<std::size_t>(l)] +=
          ce_hist[static_cast<std::size_t>(s)][static_cast<std::size_t>(l)];
    res.final_prior += prior_hist[static_cast<std::size_t>(s)];
  }
  for (double& c : res.final_ce) c /= static_cast<double>(wlen);
  res.final_prior /= static_cast<double>(wlen);

  const double bar =
      std::log(static_cast<double>(classes)) * (1.0 - kCeDropFraction);
  res.ce_dropped = true;
  for (double c : res.final_ce)
    if (!(c <= bar)) res.ce_dropped = false;
  return res;
}

}  // namespace cs::gen
