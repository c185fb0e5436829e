#include "cscore/gen/generator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <utility>

#include "cscore/errors.hpp"

namespace cs::gen {

void GenConfig::validate() const {
  check_config(depth >= 1 && width >= 1 && heads >= 1,
               "generator config: positive dims");
  check_config(width % heads == 0, "generator config: width % heads");
  check_config(cfg_dropout >= 0.0 && cfg_dropout <= 1.0,
               "generator config: cfg_dropout in [0,1]");
  check_config(lookahead >= 0, "generator config: lookahead >= 0");
  check_config(lambda_p >= 0.0, "generator config: lambda_p >= 0");
  for (double l : lambda_levels)
    check_config(l > 0.0, "generator config: level weights positive");
}

double GenConfig::level_weight(std::int64_t level) const {
  if (lambda_levels.empty()) return 1.0;
  check_index(level >= 1 &&
                  level <= static_cast<std::int64_t>(lambda_levels.size()),
              "level weight index");
  return lambda_levels[static_cast<std::size_t>(level - 1)];
}

std::vector<float> cfg_combine(const std::vector<float>& cond,
                               const std::vector<float>& uncond,
                               double scale) {
  check_shape(cond.size() == uncond.size(), "cfg_combine: size mismatch");
  // exact at the endpoints, so scale 1 never perturbs the conditional path
  if (scale == 1.0) return cond;
  if (scale == 0.0) return uncond;
  std::vector<float> out(cond.size());
  const float s = static_cast<float>(scale);
  for (std::size_t i = 0; i < cond.size(); ++i)
    out[i] = uncond[i] + s * (cond[i] - uncond[i]);
  return out;
}

std::int64_t sample_token(const std::vector<float>& logits,
                          const SamplerConfig& sampler, rng::Rng& rng) {
  const std::int64_t n = static_cast<std::int64_t>(logits.size());
  check_config(n >= 1, "sample_token: empty logits");
  check_config(sampler.temperature >= 0.0,
               "sample_token: temperature must be >= 0");
  check_config(sampler.top_k >= 1, "sample_token: top_k must be >= 1");
  const std::int64_t k = std::min(sampler.top_k, n);

  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), std::int64_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
    const float la = logits[static_cast<std::size_t>(a)];
    const float lb = logits[static_cast<std::size_t>(b)];
    if (la != lb) return la > lb;
    return a < b;  // ties resolve to the lower class, keeps runs replayable
  });

  if (sampler.temperature == 0.0) return idx[0];

  const double t = sampler.temperature;
  const double mx = static_cast<double>(logits[static_cast<std::size_t>(idx[0])]);
  std::vector<double> w(static_cast<std::size_t>(k));
  double z = 0.0;
  for (std::int64_t i = 0; i < k; ++i) {
    const double l =
        static_cast<double>(logits[static_cast<std::size_t>(idx[i])]);
    w[static_cast<std::size_t>(i)] = std::exp((l - mx) / t);
    z += w[static_cast<std::size_t>(i)];
  }
  const double u = rng.uniform() * z;
  double acc = 0.0;
  for (std::int64_t i = 0; i < k; ++i) {
    acc += w[static_cast<std::size_t>(i)];
    if (u < acc) return idx[static_cast<std::size_t>(i)];
  }
  return idx[static_cast<std::size_t>(k - 1)];
}

GeneratorModel::GeneratorModel(const codec::CodecModel& codec,
                               retrieval::RetrieverConfig rcfg,
                               GenConfig gcfg, std::uint64_t seed)
    : codec_(codec),
      cfg_(std::move(gcfg)),
      retriever_(rcfg, store_, rng::derive_seed(seed, 0x72657472)),
      schedule_(sched::build_schedule(codec.config().T,
                                      codec.config().resolutions)) {
  cfg_.validate();
  check_config(rcfg.max_window == codec_.config().T,
               "retriever max_window must equal the codec window length");
  if (!cfg_.lambda_levels.empty())
    check_config(static_cast<std::int64_t>(cfg_.lambda_levels.size()) ==
                     codec_.config().levels(),
                 "lambda_levels must match the codec level count");

  rng::Rng rng(rng::derive_seed(seed, 0x67656e72));
  const std::int64_t w = cfg_.width;
  const std::int64_t classes = codec_.config().classes();

  store_.add("gen.embed", nn::init_normal(rng, classes + 1, w, 0.02));
  store_.add("gen.level",
             nn::init_normal(rng, codec_.config().levels(), w, 0.02));
  store_.add("gen.audio.w", nn::init_normal(rng, codec::kAudioDim, w, 0.02));
  store_.add("gen.audio.b", nn::init_zeros(1, w));
  store_.add("gen.hist.w",
             nn::init_normal(rng, codec::kMotionDim + 1, w, 0.02));
  store_.add("gen.hist.b", nn::init_zeros(1, w));
  store_.add("gen.prior.w", nn::init_normal(rng, codec::kMotionDim, w, 0.02));
  store_.add("gen.prior.b", nn::init_zeros(1, w));
  store_.add("gen.null.audio", nn::init_normal(rng, 1, w, 0.02));
  store_.add("gen.null.hist", nn::init_normal(rng, 1, w, 0.02));
  store_.add("gen.null.prior", nn::init_normal(rng, 1, w, 0.02));
  nn::register_transformer(store_, "gen", token_tf_config(), rng);
  // zero head: every class starts equally likely, so the first CE readings
  // sit exactly at log(classes)
  store_.add("gen.out.w", nn::init_zeros(w, classes));
  store_.add("gen.out.b", nn::init_zeros(1, classes));

  posenc_ = nn::sinusoidal_posenc(codec_.config().T, w);
  posenc2_ = nn::sinusoidal_posenc(2 * codec_.config().T, w);
}

nn::TransformerConfig GeneratorModel::token_tf_config() const {
  nn::TransformerConfig tf;
  tf.depth = cfg_.depth;
  tf.width = cfg_.width;
  tf.heads = cfg_.heads;
  tf.cross_streams = {"audio", "hist", "prior"};
  return tf;
}

TensorF GeneratorModel::context_row(std::int64_t prev_class,
                                    const sched::TokenAddress& due) const {
  check_index(prev_class >= 0 && prev_class <= codec_.config().classes(),
              "context_row: class out of range");
  check_index(due.level >= 1 && due.level <= codec_.config().levels() &&
                  due.span_start >= 0 && due.span_start < codec_.config().T,
              "context_row: bad token address");
  const TensorF& emb = store_.param("gen.embed").value;
  const TensorF& lvl = store_.param("gen.level").value;
  TensorF row(1, cfg_.width);
  for (std::int64_t c = 0; c < cfg_.width; ++c)
    row.at(0, c) = emb.at(prev_class, c) + lvl.at(due.level - 1, c) +
                   posenc_.at(due.span_start, c);
  return row;
}

TensorF GeneratorModel::embed_audio_rows(const TensorF& audio_rows,
                                         std::int64_t first_frame) const {
  check_shape(audio_rows.cols() == codec::kAudioDim,
              "embed_audio_rows: want 512 channels");
  check_index(first_frame >= 0 &&
                  first_frame + audio_rows.rows() <= codec_.config().T,
              "embed_audio_rows: frames outside the window");
  TensorF out = nn::affine_rows(audio_rows, store_.param("gen.audio.w").value,
                                store_.param("gen.audio.b").value);
  for (std::int64_t i = 0; i < out.rows(); ++i)
    for (std::int64_t c = 0; c < out.cols(); ++c)
      out.at(i, c) += posenc_.at(first_frame + i, c);
  return out;
}

TensorF GeneratorModel::embed_history(const TensorF& prev_motion) const {
  const std::int64_t T = codec_.config().T;
  TensorF feats(T, codec::kMotionDim + 1);
  if (prev_motion.size() > 0) {
    check_shape(prev_motion.rows() == T &&
                    prev_motion.cols() == codec::kMotionDim,
                "embed_history: want a full previous window");
    for (std::int64_t i = 0; i < T; ++i)
      for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
        feats.at(i, c) = prev_motion.at(i, c);
  } else {
    // stream start: zero history, padding channel raised
    for (std::int64_t i = 0; i < T; ++i)
      feats.at(i, codec::kMotionDim) = 1.0f;
  }
  TensorF out = nn::affine_rows(feats, store_.param("gen.hist.w").value,
                                store_.param("gen.hist.b").value);
  for (std::int64_t i = 0; i < T; ++i)
    for (std::int64_t c = 0; c < out.cols(); ++c)
      out.at(i, c) += posenc_.at(i, c);
  return out;
}

TensorF GeneratorModel::embed_prior_rows(const TensorF& prior) const {
  check_shape(prior.cols() == codec::kMotionDim,
              "embed_prior_rows: want 137 channels");
  check_index(prior.rows() <= 2 * codec_.config().T,
              "embed_prior_rows: prior longer than two windows");
  TensorF out = nn::affine_rows(prior, store_.param("gen.prior.w").value,
                                store_.param("gen.prior.b").value);
  for (std::int64_t i = 0; i < out.rows(); ++i)
    for (std::int64_t c = 0; c < out.cols(); ++c)
      out.at(i, c) += posenc2_.at(i, c);
  return out;
}

TensorF GeneratorModel::null_stream(const std::string& name) const {
  check_config(name == "audio" || name == "hist" || name == "prior",
               "null_stream: unknown stream " + name);
  return store_.param("gen.null." + name).value;
}

std::vector<float> GeneratorModel::output_logits(const TensorF& row) const {
  check_shape(row.rows() == 1 && row.cols() == cfg_.width,
              "output_logits: want one width row");
  const TensorF l = nn::affine_rows(row, store_.param("gen.out.w").value,
                                    store_.param("gen.out.b").value);
  return l.data;
}

QueryMode parse_query_mode(const std::string& name) {
  if (name == "full") return QueryMode::kFull;
  if (name == "audio-only") return QueryMode::kAudioOnly;
  if (name == "motion-only") return QueryMode::kMotionOnly;
  throw ConfigError("unknown query mode '" + name +
                    "' (full|audio-only|motion-only)");
}

const char* query_mode_name(QueryMode mode) {
  switch (mode) {
    case QueryMode::kFull: return "full";
    case QueryMode::kAudioOnly: return "audio-only";
    case QueryMode::kMotionOnly: return "motion-only";
  }
  return "full";
}

GenerationSession::GenerationSession(const GeneratorModel& model,
                                     const retrieval::StyleLibrary& library,
                                     SamplerConfig sampler,
                                     std::int64_t lookahead,
                                     QueryMode query_mode)
    : model_(model),
      codec_(model.codec()),
      sampler_(sampler),
      lookahead_(lookahead >= 0 ? lookahead : model.config().lookahead),
      query_mode_(query_mode),
      rng_(rng::derive_seed(sampler.seed, 0x67656e73)),
      memory_(model.retriever().encode_library(library)),
      cond_(model.params(), "gen", model.token_tf_config()) {
  check_config(sampler_.cfg_scale >= 0.0, "cfg_scale must be >= 0");
  if (sampler_.cfg_scale != 1.0) {
    uncond_.emplace(model.params(), "gen", model.token_tf_config());
    uncond_->set_stream("audio", model_.null_stream("audio"));
    uncond_->set_stream("hist", model_.null_stream("hist"));
    uncond_->set_stream("prior", model_.null_stream("prior"));
  }
  start_window_();
}

void GenerationSession::start_window_() {
  tokens_ = codec::TokenHierarchy::empty_like(codec_.config());
  decoder_.emplace(codec_);
  cond_.reset_context();
  cond_.set_stream("audio", TensorF(0, model_.config().width));
  cond_.set_stream("hist", model_.embed_history(have_prev_ ? prev_motion_
                                                           : TensorF()));
  if (uncond_) uncond_->reset_context();
  cur_audio_ = TensorF(0, codec::kAudioDim);
  cur_motion_ = TensorF(0, codec::kMotionDim);
  cur_frame_ = 0;
  audio_fed_ = 0;
  prev_class_ = model_.start_class();
  next_token_ = 0;
}

retrieval::QueryHistory GenerationSession::query_history_() const {
  const std::int64_t T = codec_.config().T;
  const std::int64_t n = T + cur_frame_;
  retrieval::QueryHistory h;
  h.audio = TensorF(n, codec::kAudioDim);
  h.motion = TensorF(n, codec::kMotionDim);
  h.pad.assign(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < T; ++i) {
    if (have_prev_) {
      for (std::int64_t c = 0; c < codec::kAudioDim; ++c)
        h.audio.at(i, c) = prev_audio_.at(i, c);
      for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
        h.motion.at(i, c) = prev_motion_.at(i, c);
    } else {
      h.pad[static_cast<std::size_t>(i)] = 1;
    }
  }
  // only frames strictly before the one being generated; pushed audio
  // beyond that stays invisible to retrieval even with lookahead on
  for (std::int64_t i = 0; i < cur_frame_; ++i) {
    for (std::int64_t c = 0; c < codec::kAudioDim; ++c)
      h.audio.at(T + i, c) = cur_audio_.at(i, c);
    for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
      h.motion.at(T + i, c) = cur_motion_.at(i, c);
  }
  if (query_mode_ == QueryMode::kAudioOnly)
    std::fill(h.motion.data.begin(), h.motion.data.end(), 0.0f);
  if (query_mode_ == QueryMode::kMotionOnly)
    std::fill(h.audio.data.begin(), h.audio.data.end(), 0.0f);
  return h;
}

std::vector<StreamFrame> GenerationSession::push_audio(
    const TensorF& audio_row) {
  check_shape(audio_row.rows() == 1 && audio_row.cols() == codec::kAudioDim,
              "push_audio: want 1 x 512");
  check_state(cur_audio_.rows() < codec_.config().T,
              "push_audio: window accounting out of step");
  nn::append_rows(cur_audio_, audio_row);
  const std::int64_t T = codec_.config().T;
  std::vector<StreamFrame> out;
  while (cur_frame_ < cur_audio_.rows() &&
         cur_audio_.rows() > std::min(cur_frame_ + lookahead_, T - 1)) {
    emit_one_(out);
  }
  return out;
}

std::vector<StreamFrame> GenerationSession::flush() {
  std::vector<StreamFrame> out;
  while (cur_frame_ < cur_audio_.rows()) emit_one_(out);
  return out;
}

void GenerationSession::emit_one_(std::vector<StreamFrame>& out) {
  const std::int64_t T = codec_.config().T;
  const std::int64_t fr = cur_frame_;

  // 1. style prior over the previous window plus frames <= current
  const TensorF prior =
      model_.retriever().retrieve(memory_, query_history_(), T + fr + 1);
  cond_.set_stream("prior", model_.embed_prior_rows(prior));

  // 2. reveal audio up to the lookahead horizon, clamped to the window
  //    edge and to what actually arrived
  const std::int64_t visible =
      std::min({fr + lookahead_, T - 1, cur_audio_.rows() - 1});
  if (visible + 1 > audio_fed_) {
    TensorF fresh(visible + 1 - audio_fed_, codec::kAudioDim);
    for (std::int64_t i = 0; i < fresh.rows(); ++i)
      for (std::int64_t c = 0; c < codec::kAudioDim; ++c)
        fresh.at(i, c) = cur_audio_.at(audio_fed_ + i, c);
    cond_.append_stream("audio", model_.embed_audio_rows(fresh, audio_fed_));
    audio_fed_ = visible + 1;
  }

  // 3. predict and sample this frame's schedule slice
  const auto [begin, end] = model_.schedule().slice(fr);
  check_state(next_token_ == begin, "schedule cursor out of step");
  for (std::int64_t g = begin; g < end; ++g) {
    const sched::TokenAddress& addr = model_.schedule().at(g);
    const TensorF row = model_.context_row(prev_class_, addr);
    std::vector<float> logits = model_.output_logits(cond_.step(row));
    if (uncond_)
      logits = cfg_combine(logits, model_.output_logits(uncond_->step(row)),
                           sampler_.cfg_scale);
    const std::int64_t cls = sample_token(logits, sampler_, rng_);
    tokens_.levels[static_cast<std::size_t>(addr.level - 1)].append_class(cls);
    prev_class_ = cls;
  }
  next_token_ = end;

  // 4. decode and emit the frame
  TensorF decoded = decoder_->decode_upto(tokens_, fr + 1);
  nn::append_rows(cur_motion_, decoded);
  StreamFrame sf;
  sf.frame = global_emitted_;
  sf.motion = std::move(decoded);
  sf.emit_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                   std::chrono::steady_clock::now().time_since_epoch())
                   .count();
  out.push_back(std::move(sf));
  ++global_emitted_;
  ++cur_frame_;

  if (cur_frame_ == T) {
    prev_motion_ = cur_motion_;
    prev_audio_ = cur_audio_;
    have_prev_ = true;
    start_window_();
  }
}

}  // namespace cs::gen
