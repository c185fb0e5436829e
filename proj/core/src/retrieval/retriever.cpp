#include "cscore/retrieval/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cscore/data/synthetic.hpp"
#include "cscore/errors.hpp"
#include "cscore/nn/infer.hpp"
#include "cscore/nn/rng.hpp"

namespace cs::retrieval {
namespace {

constexpr std::int64_t kMemoryFeat = codec::kAudioDim + codec::kMotionDim;
constexpr std::int64_t kQueryFeat = kMemoryFeat + 2;  // pad + summary flags

// Content-determined template order; insertion order must never matter.
bool template_before(const StyleTemplate& a, const StyleTemplate& b) {
  if (a.identity_tag != b.identity_tag) return a.identity_tag < b.identity_tag;
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  if (a.motion.data != b.motion.data) return a.motion.data < b.motion.data;
  return a.audio.data < b.audio.data;
}

TensorF template_features(const StyleTemplate& t) {
  check_shape(t.audio.rows() == t.motion.rows() && t.rows() >= 1,
              "template audio and motion must be aligned and non-empty");
  check_shape(t.audio.cols() == codec::kAudioDim &&
                  t.motion.cols() == codec::kMotionDim,
              "template feature dims");
  TensorF f(t.rows(), kMemoryFeat);
  for (std::int64_t i = 0; i < t.rows(); ++i) {
    for (std::int64_t c = 0; c < codec::kAudioDim; ++c)
      f.at(i, c) = t.audio.at(i, c);
    for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
      f.at(i, codec::kAudioDim + c) = t.motion.at(i, c);
  }
  return f;
}

}  // namespace

void RetrieverConfig::validate() const {
  check_config(width >= 1 && heads >= 1 && width % heads == 0,
               "retriever width/heads");
  check_config(query_tail >= 1 && slots >= 1 && head_hidden >= 1,
               "retriever query/slot sizes");
  check_config(max_window >= 1, "retriever max_window");
}

void StyleLibrary::add(StyleTemplate t) {
  check_shape(t.audio.rows() == t.motion.rows() && t.rows() >= 1,
              "template audio and motion must be aligned and non-empty");
  auto it = std::upper_bound(templates_.begin(), templates_.end(), t,
                             template_before);
  templates_.insert(it, std::move(t));
}

std::int64_t StyleLibrary::total_rows() const {
  std::int64_t n = 0;
  for (const auto& t : templates_) n += t.rows();
  return n;
}

StyleLibrary load_library(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in.good()) throw IoError("cannot open library manifest " + manifest_path);
  const std::string root =
      std::filesystem::path(manifest_path).parent_path().string();

  StyleLibrary lib;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag, path;
    if (!(ls >> tag >> path))
      throw IoError("malformed library manifest line: " + line);
    const std::string full =
        root.empty() ? path
                     : (std::filesystem::path(root) / path).string();
    data::SyntheticClip clip = data::read_clip(full);
    lib.add(StyleTemplate{std::move(clip.audio), std::move(clip.motion), tag});
  }
  return lib;
}

RetrieverModel::RetrieverModel(RetrieverConfig cfg, nn::ParameterStore& store,
                               std::uint64_t seed)
    : cfg_(cfg), store_(store) {
  cfg_.validate();
  rng::Rng rng(rng::derive_seed(seed, 0x726574));
  const std::int64_t w = cfg_.width;

  store_.add("ret.mem.wk", nn::init_normal(rng, kMemoryFeat, w, 0.02));
  store_.add("ret.mem.bk", nn::init_zeros(1, w));
  store_.add("ret.mem.wv", nn::init_normal(rng, kMemoryFeat, w, 0.02));
  store_.add("ret.mem.bv", nn::init_zeros(1, w));
  store_.add("ret.null.k", nn::init_normal(rng, 1, w, 0.02));
  store_.add("ret.null.v", nn::init_normal(rng, 1, w, 0.02));
  store_.add("ret.q.in.w", nn::init_normal(rng, kQueryFeat, w, 0.02));
  store_.add("ret.q.in.b", nn::init_zeros(1, w));
  nn::register_transformer(store_, "ret.q", query_tf_config(), rng);
  store_.add("ret.slots", nn::init_normal(rng, cfg_.slots, w, 0.02));
  store_.add("ret.head.w1",
             nn::init_normal(rng, (cfg_.slots + 1) * w, cfg_.head_hidden, 0.02));
  store_.add("ret.head.b1", nn::init_zeros(1, cfg_.head_hidden));
  // zero output projection: the untrained prior is exactly the bias
  store_.add("ret.head.w2",
             nn::init_zeros(cfg_.head_hidden + w, codec::kMotionDim));
  store_.add("ret.head.b2", nn::init_zeros(1, codec::kMotionDim));

  query_posenc_ = nn::sinusoidal_posenc(cfg_.query_tail + 1, w);
  prior_posenc_ = nn::sinusoidal_posenc(2 * cfg_.max_window, w);
}

LibraryMemory RetrieverModel::encode_library(const StyleLibrary& lib) const {
  LibraryMemory mem;
  if (lib.empty()) {
    mem.null_memory = true;
    mem.keys = store_.param("ret.null.k").value;
    mem.values = store_.param("ret.null.v").value;
    return mem;
  }
  const TensorF& wk = store_.param("ret.mem.wk").value;
  const TensorF& bk = store_.param("ret.mem.bk").value;
  const TensorF& wv = store_.param("ret.mem.wv").value;
  const TensorF& bv = store_.param("ret.mem.bv").value;
  for (const StyleTemplate& t : lib.templates()) {
    const TensorF feats = template_features(t);
    TensorF keys = nn::affine_rows(feats, wk, bk);
    const TensorF pos = nn::sinusoidal_posenc(t.rows(), cfg_.width);
    for (std::int64_t i = 0; i < keys.size(); ++i)
      keys.data[static_cast<std::size_t>(i)] +=
          pos.data[static_cast<std::size_t>(i)];
    const TensorF values = nn::affine_rows(feats, wv, bv);
    nn::append_rows(mem.keys, keys);
    nn::append_rows(mem.values, values);
  }
  return mem;
}

QueryInputs RetrieverModel::build_query(const QueryHistory& hist,
                                        std::int64_t n_prior) const {
  const std::int64_t n = hist.motion.rows();
  check_shape(hist.audio.rows() == n &&
                  static_cast<std::int64_t>(hist.pad.size()) == n,
              "query history misaligned");
  check_shape(hist.audio.cols() == codec::kAudioDim &&
                  hist.motion.cols() == codec::kMotionDim,
              "query history dims");
  check(n >= 1, "query history empty");
  check(n_prior >= 1 && n_prior <= 2 * cfg_.max_window,
        "prior length out of range");

  const std::int64_t m = std::min(cfg_.query_tail, n);
  const std::int64_t older = n - m;

  QueryInputs q;
  q.n_prior = n_prior;
  q.rows = TensorF(m + 1, kQueryFeat);

  // row 0: mean of everything older than the tail, flagged as summary
  if (older > 0) {
    for (std::int64_t i = 0; i < older; ++i) {
      for (std::int64_t c = 0; c < codec::kAudioDim; ++c)
        q.rows.at(0, c) += hist.audio.at(i, c);
      for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
        q.rows.at(0, codec::kAudioDim + c) += hist.motion.at(i, c);
      q.rows.at(0, kMemoryFeat) += static_cast<float>(hist.pad[i]);
    }
    const float inv = 1.0f / static_cast<float>(older);
    for (std::int64_t c = 0; c <= kMemoryFeat; ++c) q.rows.at(0, c) *= inv;
  }
  q.rows.at(0, kMemoryFeat + 1) = 1.0f;

  for (std::int64_t r = 0; r < m; ++r) {
    const std::int64_t i = older + r;
    for (std::int64_t c = 0; c < codec::kAudioDim; ++c)
      q.rows.at(r + 1, c) = hist.audio.at(i, c);
    for (std::int64_t c = 0; c < codec::kMotionDim; ++c)
      q.rows.at(r + 1, codec::kAudioDim + c) = hist.motion.at(i, c);
    q.rows.at(r + 1, kMemoryFeat) = static_cast<float>(hist.pad[i]);
  }
  return q;
}

TensorF RetrieverModel::prior_posenc(std::int64_t n) const {
  check(n >= 1 && n <= prior_posenc_.rows(), "prior length out of range");
  TensorF out(n, prior_posenc_.cols());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < out.cols(); ++c)
      out.at(i, c) = prior_posenc_.at(i, c);
  return out;
}

nn::TransformerConfig RetrieverModel::query_tf_config() const {
  nn::TransformerConfig tf;
  tf.depth = 1;
  tf.width = cfg_.width;
  tf.heads = cfg_.heads;
  tf.cross_streams = {};
  return tf;
}

template <typename S>
std::pair<typename nn::Tape<S>::Id, typename nn::Tape<S>::Id>
RetrieverModel::encode_library_graph(nn::Tape<S>& tape,
                                     const nn::AttachedParams<S>& att,
                                     const StyleLibrary& lib) const {
  if (lib.empty())
    return {att.id(store_, "ret.null.k"), att.id(store_, "ret.null.v")};

  const auto wk = att.id(store_, "ret.mem.wk");
  const auto bk = att.id(store_, "ret.mem.bk");
  const auto wv = att.id(store_, "ret.mem.wv");
  const auto bv = att.id(store_, "ret.mem.bv");

  std::vector<typename nn::Tape<S>::Id> keys, values;
  for (const StyleTemplate& t : lib.templates()) {
    const auto feats =
        tape.constant(template_features(t).template cast<S>());
    const auto pos = tape.constant(
        nn::sinusoidal_posenc(t.rows(), cfg_.width).template cast<S>());
    keys.push_back(tape.add(tape.affine(feats, wk, bk), pos));
    values.push_back(tape.affine(feats, wv, bv));
  }
  return {tape.concat_rows(keys), tape.concat_rows(values)};
}

template <typename S>
typename nn::Tape<S>::Id RetrieverModel::retrieve_graph(
    nn::Tape<S>& tape, const nn::AttachedParams<S>& att,
    typename nn::Tape<S>::Id mem_keys, typename nn::Tape<S>::Id mem_values,
    const QueryInputs& q) const {
  const std::int64_t w = cfg_.width;
  const std::int64_t m1 = q.rows.rows();  // summary + tail

  const auto rows = tape.constant(q.rows.template cast<S>());
  auto x = tape.affine(rows, att.id(store_, "ret.q.in.w"),
                       att.id(store_, "ret.q.in.b"));
  TensorF pos(m1, w);
  for (std::int64_t i = 0; i < m1; ++i)
    for (std::int64_t c = 0; c < w; ++c) pos.at(i, c) = query_posenc_.at(i, c);
  x = tape.add(x, tape.constant(pos.template cast<S>()));

  const auto enc =
      nn::apply_transformer<S>(tape, store_, att, "ret.q", query_tf_config(),
                               x, nn::AttentionMask::dense());
  const auto q_s = tape.mean_rows(enc);

  const auto queries = tape.add_row(att.id(store_, "ret.slots"), q_s);
  const auto scores =
      tape.scale(tape.matmul(queries, mem_keys, false, true),
                 static_cast<S>(1.0 / std::sqrt(static_cast<double>(w))));
  const auto probs = tape.row_softmax(scores, nn::AttentionMask::dense());
  const auto ctx = tape.matmul(probs, mem_values);

  std::vector<typename nn::Tape<S>::Id> slot_rows;
  for (std::int64_t s = 0; s < cfg_.slots; ++s)
    slot_rows.push_back(tape.slice_rows(ctx, s, s + 1));
  slot_rows.push_back(q_s);
  const auto hq = tape.concat_cols(slot_rows);

  const auto base = tape.gelu(tape.affine(hq, att.id(store_, "ret.head.w1"),
                                          att.id(store_, "ret.head.b1")));
  const auto base_rows = tape.gather_rows(
      base, std::vector<std::int64_t>(static_cast<std::size_t>(q.n_prior), 0));
  const auto pin = tape.concat_cols(
      {base_rows,
       tape.constant(prior_posenc(q.n_prior).template cast<S>())});
  return tape.affine(pin, att.id(store_, "ret.head.w2"),
                     att.id(store_, "ret.head.b2"));
}

TensorF RetrieverModel::retrieve(const LibraryMemory& memory,
                                 const QueryHistory& hist,
                                 std::int64_t n_prior) const {
  const QueryInputs q = build_query(hist, n_prior);
  nn::Tape<float> tape;
  const auto att = nn::attach_params<float>(tape, store_);
  const auto keys = tape.constant(memory.keys);
  const auto values = tape.constant(memory.values);
  const auto prior = retrieve_graph<float>(tape, att, keys, values, q);
  return tape.value(prior);
}

template <typename S>
typename nn::Tape<S>::Id prior_loss(nn::Tape<S>& tape,
                                    typename nn::Tape<S>::Id prior,
                                    const TensorF& target) {
  check_shape(tape.value(prior).rows() == target.rows() &&
                  tape.value(prior).cols() == target.cols(),
              "prior/target shape mismatch");
  const auto gt = tape.constant(target.template cast<S>());
  return tape.reduce_mean_all(tape.square(tape.sub(prior, gt)));
}

double prior_loss_value(const TensorF& prior, const TensorF& target) {
  check_shape(prior.same_shape(target), "prior/target shape mismatch");
  double s = 0.0;
  for (std::int64_t i = 0; i < prior.size(); ++i) {
    const double d = static_cast<double>(prior.data[static_cast<std::size_t>(i)]) -
                     static_cast<double>(target.data[static_cast<std::size_t>(i)]);
    s += d * d;
  }
  return s / static_cast<double>(prior.size());
}

template std::pair<nn::Tape<float>::Id, nn::Tape<float>::Id>
RetrieverModel::encode_library_graph<float>(nn::Tape<float>&,
                                            const nn::AttachedParams<float>&,
                                            const StyleLibrary&) const;
template std::pair<nn::Tape<double>::Id, nn::Tape<double>::Id>
RetrieverModel::encode_library_graph<double>(nn::Tape<double>&,
                                             const nn::AttachedParams<double>&,
                                             const StyleLibrary&) const;
template nn::Tape<float>::Id RetrieverModel::retrieve_graph<float>(
    nn::Tape<float>&, const nn::AttachedParams<float>&, nn::Tape<float>::Id,
    nn::Tape<float>::Id, const QueryInputs&) const;
template nn::Tape<double>::Id RetrieverModel::retrieve_graph<double>(
    nn::Tape<double>&, const nn::AttachedParams<double>&,
    nn::Tape<double>::Id, nn::Tape<double>::Id, const QueryInputs&) const;
template nn::Tape<float>::Id prior_loss<float>(nn::Tape<float>&,
                                               nn::Tape<float>::Id,
                                               const TensorF&);
template nn::Tape<double>::Id prior_loss<double>(nn::Tape<double>&,
                                                 nn::Tape<double>::Id,
                                                 const TensorF&);

}  // namespace cs::retrieval
