#include "cscore/codec/codec.hpp"

#include <cmath>

namespace cs::codec {

double CodecConfig::code_magnitude() const {
  return 1.0 / std::sqrt(static_cast<double>(p));
}

void CodecConfig::validate() const {
  check_config(T >= 3, "codec: T >= 3 (jitter needs second differences)");
  check_config(!resolutions.empty(), "codec: at least one level");
  for (std::size_t i = 0; i + 1 < resolutions.size(); ++i)
    check_config(resolutions[i] <= resolutions[i + 1],
                 "codec: resolutions non-decreasing");
  for (std::int64_t r : resolutions)
    check_config(r >= 1 && r <= T, "codec: 1 <= r_l <= T");
  check_config(p >= 1 && p <= 16, "codec: 1 <= p <= 16");
  check_config(width % heads == 0, "codec: width divisible by heads");
}

std::int64_t CodeLevel::class_index(std::int64_t row) const {
  std::int64_t cls = 0;
  for (std::int64_t b = 0; b < bits_per_row; ++b)
    cls |= static_cast<std::int64_t>(bit(row, b)) << b;
  return cls;
}

void CodeLevel::append_class(std::int64_t cls) {
  check_index(rows_present() < full_rows, "code level already full");
  check_index(cls >= 0 && cls < (std::int64_t{1} << bits_per_row),
              "class index out of range");
  for (std::int64_t b = 0; b < bits_per_row; ++b)
    bits.push_back(static_cast<std::uint8_t>((cls >> b) & 1));
}

TensorF CodeLevel::dequantized(double magnitude) const {
  const float mag = static_cast<float>(magnitude);
  TensorF out(rows_present(), bits_per_row);
  for (std::int64_t r = 0; r < out.rows(); ++r)
    for (std::int64_t b = 0; b < bits_per_row; ++b)
      out.at(r, b) = bit(r, b) ? mag : -mag;
  return out;
}

TokenHierarchy TokenHierarchy::empty_like(const CodecConfig& cfg) {
  TokenHierarchy h;
  for (std::int64_t l = 0; l < cfg.levels(); ++l) {
    CodeLevel lv;
    lv.level = l + 1;
    lv.full_rows = cfg.resolutions[static_cast<std::size_t>(l)];
    lv.bits_per_row = cfg.p;
    h.levels.push_back(std::move(lv));
  }
  return h;
}

bool TokenHierarchy::complete() const {
  for (const CodeLevel& lv : levels)
    if (lv.rows_present() != lv.full_rows) return false;
  return true;
}

std::int64_t TokenHierarchy::total_rows_present() const {
  std::int64_t n = 0;
  for (const CodeLevel& lv : levels) n += lv.rows_present();
  return n;
}

CodecModel::CodecModel(CodecConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  cs::rng::Rng rng(seed);
  const std::int64_t w = cfg_.width;
  // Input projections start large enough that content rows match the
  // unit-norm positional rows at the first layer norm.
  store_.add("codec.enc.in.w", nn::init_normal(rng, kMotionDim, w, 0.08));
  store_.add("codec.enc.in.b", nn::init_zeros(1, w));
  nn::register_transformer(store_, "codec.enc", encoder_tf(), rng);
  store_.add("codec.enc.out.w", nn::init_normal(rng, w, cfg_.p, 0.06));
  store_.add("codec.enc.out.b", nn::init_zeros(1, cfg_.p));
  for (std::int64_t l = 0; l < cfg_.levels(); ++l)
    store_.add("codec.bsq.l" + std::to_string(l) + ".proj",
               nn::init_near_identity(rng, cfg_.p, 0.02));
  store_.add("codec.dec.in.w", nn::init_normal(rng, cfg_.p, w, 0.15));
  store_.add("codec.dec.in.b", nn::init_zeros(1, w));
  nn::register_transformer(store_, "codec.dec", decoder_tf(), rng);
  // zero output head: an untrained decoder emits its bias, nothing else
  store_.add("codec.dec.out.w", nn::init_zeros(w, kMotionDim));
  store_.add("codec.dec.out.b", nn::init_zeros(1, kMotionDim));
  posenc_ = nn::sinusoidal_posenc(cfg_.T, w);
}

nn::TransformerConfig CodecModel::encoder_tf() const {
  return {cfg_.enc_depth, cfg_.width, cfg_.heads, 4, {}};
}

nn::TransformerConfig CodecModel::decoder_tf() const {
  return {cfg_.dec_depth, cfg_.width, cfg_.heads, 4, {}};
}

// Shared graph construction. Encoding runs the non-causal encoder, then
// peels levels off the residual: downsample by bin means (floor
// boundaries), project, normalize to the sphere, binarize, causally
// upsample, subtract. Decoding is the summed upsampled codes through the
// causally masked decoder.
template <typename S>
struct CodecGraph {
  using Id = typename nn::Tape<S>::Id;

  Id f = -1;
  std::vector<Id> residual_stages;  // f, then after each level
  std::vector<Id> normalized, relaxed, quantized, upsampled;
  Id residual = -1;
  Id fhat = -1;
  Id decoded = -1;

  static CodecGraph build(const CodecModel& m, nn::Tape<S>& tape,
                          const nn::AttachedParams<S>& att, Id window,
                          bool relaxed_quantizer, bool with_decode) {
    const CodecConfig& cfg = m.cfg_;
    const nn::ParameterStore& ps = m.store_;
    auto pid = [&](const std::string& n) { return att.id(ps, n); };
    CodecGraph g;

    const Id posenc = tape.constant(m.posenc_.template cast<S>());
    Id h = tape.add(
        tape.affine(window, pid("codec.enc.in.w"), pid("codec.enc.in.b")),
        posenc);
    h = nn::apply_transformer(tape, ps, att, "codec.enc", m.encoder_tf(), h,
                              nn::AttentionMask::dense());
    g.f = tape.affine(h, pid("codec.enc.out.w"), pid("codec.enc.out.b"));

    const S mag = static_cast<S>(cfg.code_magnitude());
    Id residual = g.f;
    g.residual_stages.push_back(residual);
    for (std::int64_t l = 0; l < cfg.levels(); ++l) {
      const std::int64_t r = cfg.resolutions[static_cast<std::size_t>(l)];
      std::vector<std::int64_t> starts(static_cast<std::size_t>(r + 1));
      for (std::int64_t j = 0; j <= r; ++j)
        starts[static_cast<std::size_t>(j)] = j * cfg.T / r;
      const Id down = tape.pool_rows_mean(residual, std::move(starts));
      const Id u = tape.matmul(
          down, pid("codec.bsq.l" + std::to_string(l) + ".proj"));
      g.relaxed.push_back(tape.sigmoid(u));
      const Id n = tape.l2_normalize_rows(u);
      g.normalized.push_back(n);
      const Id q = tape.binarize_ste(n, mag, relaxed_quantizer);
      g.quantized.push_back(q);
      std::vector<std::int64_t> up(static_cast<std::size_t>(cfg.T));
      for (std::int64_t t = 0; t < cfg.T; ++t)
        up[static_cast<std::size_t>(t)] = sched::source_index(t, r, cfg.T);
      const Id z = tape.gather_rows(q, std::move(up));
      g.upsampled.push_back(z);
      residual = tape.sub(residual, z);
      g.residual_stages.push_back(residual);
    }
    g.residual = residual;

    g.fhat = g.upsampled[0];
    for (std::size_t l = 1; l < g.upsampled.size(); ++l)
      g.fhat = tape.add(g.fhat, g.upsampled[l]);

    if (with_decode) {
      Id d = tape.add(
          tape.affine(g.fhat, pid("codec.dec.in.w"), pid("codec.dec.in.b")),
          posenc);
      d = nn::apply_transformer(tape, ps, att, "codec.dec", m.decoder_tf(), d,
                                nn::AttentionMask::causal());
      g.decoded =
          tape.affine(d, pid("codec.dec.out.w"), pid("codec.dec.out.b"));
    }
    return g;
  }
};

EncodeResult CodecModel::encode_window(const TensorF& window) const {
  check_shape(window.rows() == cfg_.T && window.cols() == kMotionDim,
              "encode_window: window must be T x 137");
  check(window.all_finite(), "encode_window: non-finite input");
  nn::TapeF tape;
  const auto att = nn::attach_params(tape, store_);
  const auto win = tape.leaf(window);
  const auto g = CodecGraph<float>::build(*this, tape, att, win,
                                          /*relaxed_quantizer=*/false,
                                          /*with_decode=*/false);
  EncodeResult out;
  out.tokens = TokenHierarchy::empty_like(cfg_);
  for (std::int64_t l = 0; l < cfg_.levels(); ++l) {
    const TensorF& n = tape.value(g.normalized[static_cast<std::size_t>(l)]);
    CodeLevel& lv = out.tokens.levels[static_cast<std::size_t>(l)];
    lv.bits.reserve(static_cast<std::size_t>(n.size()));
    for (std::int64_t i = 0; i < n.rows(); ++i)
      for (std::int64_t b = 0; b < n.cols(); ++b)
        lv.bits.push_back(n.at(i, b) >= 0.0f ? 1 : 0);
    out.relaxed.push_back(tape.value(g.relaxed[static_cast<std::size_t>(l)]));
  }
  out.features = tape.value(g.f);
  out.residual = tape.value(g.residual);
  for (const auto id : g.residual_stages) {
    const TensorF& r = tape.value(id);
    double mse = 0.0;
    for (float v : r.data) mse += static_cast<double>(v) * v;
    out.residual_mse.push_back(mse / static_cast<double>(r.size()));
  }
  return out;
}

TensorF CodecModel::upsampled_sum(const TokenHierarchy& tokens,
                                  std::int64_t upto_frame) const {
  check_index(upto_frame >= 0 && upto_frame <= cfg_.T,
              "upsampled_sum: frame range");
  check_shape(static_cast<std::int64_t>(tokens.levels.size()) == cfg_.levels(),
              "upsampled_sum: level count");
  const float mag = static_cast<float>(cfg_.code_magnitude());
  TensorF out(upto_frame, cfg_.p);
  for (std::int64_t l = 0; l < cfg_.levels(); ++l) {
    const CodeLevel& lv = tokens.levels[static_cast<std::size_t>(l)];
    const std::int64_t r = cfg_.resolutions[static_cast<std::size_t>(l)];
    check_shape(lv.bits_per_row == cfg_.p && lv.full_rows == r,
                "upsampled_sum: level shape");
    for (std::int64_t t = 0; t < upto_frame; ++t) {
      const std::int64_t j = sched::source_index(t, r, cfg_.T);
      check_state(j < lv.rows_present(),
                  "upsampled_sum: code row for frame not yet emitted");
      for (std::int64_t b = 0; b < cfg_.p; ++b)
        out.at(t, b) += lv.bit(j, b) ? mag : -mag;
    }
  }
  return out;
}

TensorF CodecModel::decode_causal(const TokenHierarchy& tokens,
                                  std::int64_t upto_frame) const {
  DecoderSession session(*this);
  return session.decode_upto(tokens, upto_frame);
}

template <typename S>
CodecLossNodes<S> CodecModel::build_loss(nn::Tape<S>& tape,
                                         const nn::AttachedParams<S>& att,
                                         const std::vector<TensorF>& batch,
                                         bool relaxed_quantizer) const {
  using Id = typename nn::Tape<S>::Id;
  check_config(!batch.empty(), "codec loss: batch size >= 1");
  const auto B = static_cast<std::int64_t>(batch.size());
  const std::int64_t T = cfg_.T;

  Id recon_sum = -1, vel_sum = -1, jit_sum = -1;
  std::vector<std::vector<Id>> relaxed_per_level(
      static_cast<std::size_t>(cfg_.levels()));

  for (const TensorF& window : batch) {
    check_shape(window.rows() == T && window.cols() == kMotionDim,
                "codec loss: window must be T x 137");
    const Id win = tape.constant(window.template cast<S>());
    const auto g = CodecGraph<S>::build(*this, tape, att, win,
                                        relaxed_quantizer,
                                        /*with_decode=*/true);
    for (std::int64_t l = 0; l < cfg_.levels(); ++l)
      relaxed_per_level[static_cast<std::size_t>(l)].push_back(
          g.relaxed[static_cast<std::size_t>(l)]);

    const Id recon = tape.scale(
        tape.reduce_sum_all(tape.abs(tape.sub(g.decoded, win))),
        S(1) / static_cast<S>(T));
    const Id pose_hat = tape.slice_cols(g.decoded, kPoseOffset, kMotionDim);
    const Id pose_gt = tape.slice_cols(win, kPoseOffset, kMotionDim);
    const Id vel = tape.scale(
        tape.reduce_sum_all(tape.square(
            tape.sub(tape.diff_rows(pose_hat), tape.diff_rows(pose_gt)))),
        S(1) / static_cast<S>(T - 1));
    const Id jit = tape.scale(
        tape.reduce_sum_all(
            tape.square(tape.diff_rows(tape.diff_rows(pose_hat)))),
        S(1) / static_cast<S>(T - 2));
    recon_sum = recon_sum < 0 ? recon : tape.add(recon_sum, recon);
    vel_sum = vel_sum < 0 ? vel : tape.add(vel_sum, vel);
    jit_sum = jit_sum < 0 ? jit : tape.add(jit_sum, jit);
  }

  // mean over (batch, bits) of the sigmoid-relaxed code per (level, row);
  // balanced usage pins every group mean at one half
  Id ent_sum = -1;
  for (std::int64_t l = 0; l < cfg_.levels(); ++l) {
    const std::int64_t r = cfg_.resolutions[static_cast<std::size_t>(l)];
    const Id stacked =
        tape.concat_rows(relaxed_per_level[static_cast<std::size_t>(l)]);
    std::vector<std::int64_t> groups(static_cast<std::size_t>(B * r));
    for (std::int64_t i = 0; i < B * r; ++i)
      groups[static_cast<std::size_t>(i)] = i % r;
    const Id cbar = tape.group_mean_scalar(stacked, std::move(groups), r);
    const S lo = S(1e-6), hi = S(1) - S(1e-6);
    const Id half_logs = tape.add(
        tape.scale(tape.log_clamped(cbar, lo, hi), S(0.5)),
        tape.scale(
            tape.log_clamped(tape.affine_scalar(cbar, S(-1), S(1)), lo, hi),
            S(0.5)));
    const Id level_sum = tape.reduce_sum_all(half_logs);
    ent_sum = ent_sum < 0 ? level_sum : tape.add(ent_sum, level_sum);
  }

  CodecLossNodes<S> out;
  const S inv_b = S(1) / static_cast<S>(B);
  out.recon = tape.scale(recon_sum, inv_b);
  out.velocity = tape.scale(vel_sum, inv_b);
  out.jitter = tape.scale(jit_sum, inv_b);
  out.entropy =
      tape.scale(ent_sum, S(-1) / static_cast<S>(cfg_.token_budget()));
  out.total = tape.add(
      out.recon,
      tape.add(tape.scale(out.velocity, static_cast<S>(cfg_.lambda_v)),
               tape.add(tape.scale(out.jitter, static_cast<S>(cfg_.lambda_j)),
                        tape.scale(out.entropy,
                                   static_cast<S>(cfg_.lambda_e)))));
  return out;
}

template CodecLossNodes<float> CodecModel::build_loss<float>(
    nn::Tape<float>&, const nn::AttachedParams<float>&,
    const std::vector<TensorF>&, bool) const;
template CodecLossNodes<double> CodecModel::build_loss<double>(
    nn::Tape<double>&, const nn::AttachedParams<double>&,
    const std::vector<TensorF>&, bool) const;

CodecLosses CodecModel::eval_loss(const std::vector<TensorF>& batch) const {
  nn::TapeF tape;
  const auto att = nn::attach_params(tape, store_);
  const auto nodes = build_loss(tape, att, batch, /*relaxed_quantizer=*/false);
  CodecLosses out;
  out.recon = tape.value(nodes.recon).at(0, 0);
  out.velocity = tape.value(nodes.velocity).at(0, 0);
  out.jitter = tape.value(nodes.jitter).at(0, 0);
  out.entropy = tape.value(nodes.entropy).at(0, 0);
  out.total = tape.value(nodes.total).at(0, 0);
  return out;
}

DecoderSession::DecoderSession(const CodecModel& model)
    : model_(model),
      session_(model.params(), "codec.dec", model.decoder_tf()) {}

TensorF DecoderSession::decode_upto(const TokenHierarchy& tokens,
                                    std::int64_t upto_frame) {
  const CodecConfig& cfg = model_.config();
  check_index(upto_frame >= frames_ && upto_frame <= cfg.T,
              "decode_upto: frame range");
  const nn::ParameterStore& ps = model_.params();
  const TensorF& in_w = ps.param("codec.dec.in.w").value;
  const TensorF& in_b = ps.param("codec.dec.in.b").value;
  const TensorF& out_w = ps.param("codec.dec.out.w").value;
  const TensorF& out_b = ps.param("codec.dec.out.b").value;
  const float mag = static_cast<float>(cfg.code_magnitude());

  TensorF decoded(0, kMotionDim);
  for (std::int64_t t = frames_; t < upto_frame; ++t) {
    TensorF fhat(1, cfg.p);
    for (std::int64_t l = 0; l < cfg.levels(); ++l) {
      const CodeLevel& lv = tokens.levels[static_cast<std::size_t>(l)];
      const std::int64_t r = cfg.resolutions[static_cast<std::size_t>(l)];
      const std::int64_t j = sched::source_index(t, r, cfg.T);
      check_state(j < lv.rows_present(),
                  "decode_upto: code row for frame not yet emitted");
      for (std::int64_t b = 0; b < cfg.p; ++b)
        fhat.at(0, b) += lv.bit(j, b) ? mag : -mag;
    }
    TensorF x = nn::affine_rows(fhat, in_w, in_b);
    for (std::int64_t j = 0; j < x.cols(); ++j)
      x.at(0, j) += model_.posenc().at(t, j);
    const TensorF h = session_.step(x);
    nn::append_rows(decoded, nn::affine_rows(h, out_w, out_b));
  }
  frames_ = upto_frame;
  if (decoded.rows() == 0) return TensorF(0, kMotionDim);
  return decoded;
}

}  // namespace cs::codec
