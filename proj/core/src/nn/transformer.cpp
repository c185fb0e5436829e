#include "cscore/nn/transformer.hpp"

#include <cmath>

namespace cs::nn {

TensorF sinusoidal_posenc(std::int64_t n, std::int64_t d) {
  // Rows are scaled to unit norm. The raw sin/cos table has row norm
  // sqrt(d/2), which buries any O(1) content row added to it; pre-LN
  // blocks then normalize position, not signal.
  const double scale = std::sqrt(2.0 / static_cast<double>(d));
  TensorF pe(n, d);
  for (std::int64_t t = 0; t < n; ++t)
    for (std::int64_t i = 0; i < d; i += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(t) * freq;
      pe.at(t, i) = static_cast<float>(scale * std::sin(angle));
      if (i + 1 < d) pe.at(t, i + 1) = static_cast<float>(scale * std::cos(angle));
    }
  return pe;
}

namespace {

void register_attention(ParameterStore& store, const std::string& prefix,
                        std::int64_t width, cs::rng::Rng& rng) {
  const double std = 0.02;
  store.add(prefix + ".wq", init_normal(rng, width, width, std));
  store.add(prefix + ".bq", init_zeros(1, width));
  store.add(prefix + ".wk", init_normal(rng, width, width, std));
  store.add(prefix + ".bk", init_zeros(1, width));
  store.add(prefix + ".wv", init_normal(rng, width, width, std));
  store.add(prefix + ".bv", init_zeros(1, width));
  store.add(prefix + ".wo", init_normal(rng, width, width, std));
  store.add(prefix + ".bo", init_zeros(1, width));
}

void register_ln(ParameterStore& store, const std::string& prefix,
                 std::int64_t width) {
  store.add(prefix + ".g", init_constant(1, width, 1.0f));
  store.add(prefix + ".b", init_zeros(1, width));
}

}  // namespace

void register_transformer(ParameterStore& store, const std::string& prefix,
                          const TransformerConfig& cfg, cs::rng::Rng& rng) {
  cfg.validate();
  const std::int64_t w = cfg.width;
  const std::int64_t mlp = w * cfg.mlp_mult;
  for (std::int64_t i = 0; i < cfg.depth; ++i) {
    const std::string lp = prefix + ".l" + std::to_string(i);
    register_ln(store, lp + ".ln1", w);
    register_attention(store, lp + ".self", w, rng);
    for (const std::string& s : cfg.cross_streams) {
      register_ln(store, lp + ".x." + s + ".ln", w);
      register_attention(store, lp + ".x." + s, w, rng);
    }
    register_ln(store, lp + ".ln2", w);
    store.add(lp + ".mlp.w1", init_normal(rng, w, mlp, 0.02));
    store.add(lp + ".mlp.b1", init_zeros(1, mlp));
    store.add(lp + ".mlp.w2", init_normal(rng, mlp, w, 0.02));
    store.add(lp + ".mlp.b2", init_zeros(1, w));
  }
  register_ln(store, prefix + ".lnf", w);
}

template <typename S>
typename Tape<S>::Id masked_attention(Tape<S>& tape, typename Tape<S>::Id q,
                                      typename Tape<S>::Id k,
                                      typename Tape<S>::Id v,
                                      const AttentionMask& mask,
                                      std::int64_t heads) {
  using Id = typename Tape<S>::Id;
  const std::int64_t d = tape.value(q).cols();
  const std::int64_t dv = tape.value(v).cols();
  check_shape(tape.value(k).cols() == d, "attention: q/k width mismatch");
  check_shape(tape.value(k).rows() == tape.value(v).rows(),
              "attention: k/v row mismatch");
  check_config(d % heads == 0 && dv % heads == 0,
               "attention: dims divisible by heads");
  const std::int64_t dh = d / heads;
  const std::int64_t dvh = dv / heads;
  const S inv_sqrt = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));
  std::vector<Id> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (std::int64_t h = 0; h < heads; ++h) {
    const Id qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
    const Id kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
    const Id vh = tape.slice_cols(v, h * dvh, (h + 1) * dvh);
    const Id scores = tape.scale(tape.matmul(qh, kh, false, true), inv_sqrt);
    const Id probs = tape.row_softmax(scores, mask);
    outs.push_back(tape.matmul(probs, vh));
  }
  return heads == 1 ? outs[0] : tape.concat_cols(outs);
}

template <typename S>
typename Tape<S>::Id apply_transformer(
    Tape<S>& tape, const ParameterStore& store, const AttachedParams<S>& att,
    const std::string& prefix, const TransformerConfig& cfg,
    typename Tape<S>::Id x, const AttentionMask& self_mask,
    const std::vector<std::pair<std::string, CrossStream<S>>>& crosses) {
  using Id = typename Tape<S>::Id;
  cfg.validate();
  check_config(crosses.size() == cfg.cross_streams.size(),
               "apply_transformer: cross stream count mismatch");
  for (std::size_t i = 0; i < crosses.size(); ++i)
    check_config(crosses[i].first == cfg.cross_streams[i],
                 "apply_transformer: cross stream order mismatch");

  auto pid = [&](const std::string& n) { return att.id(store, prefix + n); };

  for (std::int64_t i = 0; i < cfg.depth; ++i) {
    const std::string lp = ".l" + std::to_string(i);
    {
      const Id xn = tape.layer_norm(x, pid(lp + ".ln1.g"), pid(lp + ".ln1.b"));
      const Id qq = tape.affine(xn, pid(lp + ".self.wq"), pid(lp + ".self.bq"));
      const Id kk = tape.affine(xn, pid(lp + ".self.wk"), pid(lp + ".self.bk"));
      const Id vv = tape.affine(xn, pid(lp + ".self.wv"), pid(lp + ".self.bv"));
      const Id at = masked_attention(tape, qq, kk, vv, self_mask, cfg.heads);
      x = tape.add(
          x, tape.affine(at, pid(lp + ".self.wo"), pid(lp + ".self.bo")));
    }
    for (const auto& [name, cs] : crosses) {
      const std::string cp = lp + ".x." + name;
      const Id xn = tape.layer_norm(x, pid(cp + ".ln.g"), pid(cp + ".ln.b"));
      const Id qq = tape.affine(xn, pid(cp + ".wq"), pid(cp + ".bq"));
      const Id kk = tape.affine(cs.source, pid(cp + ".wk"), pid(cp + ".bk"));
      const Id vv = tape.affine(cs.source, pid(cp + ".wv"), pid(cp + ".bv"));
      const Id at = masked_attention(tape, qq, kk, vv, cs.mask, cfg.heads);
      x = tape.add(x, tape.affine(at, pid(cp + ".wo"), pid(cp + ".bo")));
    }
    {
      const Id xn = tape.layer_norm(x, pid(lp + ".ln2.g"), pid(lp + ".ln2.b"));
      const Id h =
          tape.gelu(tape.affine(xn, pid(lp + ".mlp.w1"), pid(lp + ".mlp.b1")));
      x = tape.add(
          x, tape.affine(h, pid(lp + ".mlp.w2"), pid(lp + ".mlp.b2")));
    }
  }
  return tape.layer_norm(x, pid(".lnf.g"), pid(".lnf.b"));
}

template typename Tape<float>::Id masked_attention<float>(
    Tape<float>&, Tape<float>::Id, Tape<float>::Id, Tape<float>::Id,
    const AttentionMask&, std::int64_t);
template typename Tape<double>::Id masked_attention<double>(
    Tape<double>&, Tape<double>::Id, Tape<double>::Id, Tape<double>::Id,
    const AttentionMask&, std::int64_t);
template typename Tape<float>::Id apply_transformer<float>(
    Tape<float>&, const ParameterStore&, const AttachedParams<float>&,
    const std::string&, const TransformerConfig&, Tape<float>::Id,
    const AttentionMask&,
    const std::vector<std::pair<std::string, CrossStream<float>>>&);
template typename Tape<double>::Id apply_transformer<double>(
    Tape<double>&, const ParameterStore&, const AttachedParams<double>&,
    const std::string&, const TransformerConfig&, Tape<double>::Id,
    const AttentionMask&,
    const std::vector<std::pair<std::string, CrossStream<double>>>&);

}  // namespace cs::nn
