#include "cscore/nn/infer.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "cscore/nn/blas.hpp"

namespace cs::nn {

TensorF affine_rows(const TensorF& x, const TensorF& w, const TensorF& b) {
  check_shape(b.rows() == 1 && b.cols() == w.cols(), "affine_rows: bias shape");
  TensorF out = matmul_product(x, w);
  for (std::int64_t i = 0; i < out.rows(); ++i)
    for (std::int64_t j = 0; j < out.cols(); ++j) out.at(i, j) += b.at(0, j);
  return out;
}

TensorF layer_norm_rows(const TensorF& x, const TensorF& g, const TensorF& b) {
  const std::int64_t n = x.rows(), d = x.cols();
  check_shape(g.rows() == 1 && g.cols() == d && b.rows() == 1 && b.cols() == d,
              "layer_norm_rows: gain/offset shape");
  const float eps = 1e-5f;
  TensorF out(n, d);
  for (std::int64_t i = 0; i < n; ++i) {
    float mean = 0.0f;
    for (std::int64_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (std::int64_t j = 0; j < d; ++j) {
      const float c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (std::int64_t j = 0; j < d; ++j)
      out.at(i, j) = (x.at(i, j) - mean) * inv * g.at(0, j) + b.at(0, j);
  }
  return out;
}

void gelu_inplace(TensorF& x) {
  const float k0 = 0.7978845608028654f;
  const float k1 = 0.044715f;
  for (float& v : x.data) {
    const float u = k0 * (v + k1 * v * v * v);
    v = 0.5f * v * (1.0f + std::tanh(u));
  }
}

void append_rows(TensorF& dst, const TensorF& rows) {
  if (dst.size() == 0 && dst.rows() == 0) {
    dst = rows;
    return;
  }
  check_shape(dst.cols() == rows.cols(), "append_rows: column mismatch");
  dst.data.insert(dst.data.end(), rows.data.begin(), rows.data.end());
  dst.n_rows += rows.rows();
}

TransformerSession::TransformerSession(const ParameterStore& store,
                                       std::string prefix,
                                       TransformerConfig cfg)
    : store_(store), prefix_(std::move(prefix)), cfg_(std::move(cfg)) {
  cfg_.validate();
  self_.resize(static_cast<std::size_t>(cfg_.depth));
  streams_.resize(cfg_.cross_streams.size());
  for (auto& s : streams_) s.resize(static_cast<std::size_t>(cfg_.depth));
}

std::int64_t TransformerSession::stream_index(const std::string& name) const {
  for (std::size_t i = 0; i < cfg_.cross_streams.size(); ++i)
    if (cfg_.cross_streams[i] == name) return static_cast<std::int64_t>(i);
  throw ConfigError("unknown stream: " + name);
}

const TensorF& TransformerSession::weight(const std::string& suffix) const {
  return store_.param(prefix_ + suffix).value;
}

void TransformerSession::set_stream(const std::string& name,
                                    const TensorF& rows) {
  auto& layers = streams_[static_cast<std::size_t>(stream_index(name))];
  for (std::int64_t l = 0; l < cfg_.depth; ++l) {
    const std::string cp = ".l" + std::to_string(l) + ".x." + name;
    auto& kv = layers[static_cast<std::size_t>(l)];
    kv.k = affine_rows(rows, weight(cp + ".wk"), weight(cp + ".bk"));
    kv.v = affine_rows(rows, weight(cp + ".wv"), weight(cp + ".bv"));
  }
}

void TransformerSession::append_stream(const std::string& name,
                                       const TensorF& rows) {
  auto& layers = streams_[static_cast<std::size_t>(stream_index(name))];
  for (std::int64_t l = 0; l < cfg_.depth; ++l) {
    const std::string cp = ".l" + std::to_string(l) + ".x." + name;
    auto& kv = layers[static_cast<std::size_t>(l)];
    append_rows(kv.k, affine_rows(rows, weight(cp + ".wk"), weight(cp + ".bk")));
    append_rows(kv.v, affine_rows(rows, weight(cp + ".wv"), weight(cp + ".bv")));
  }
}

std::int64_t TransformerSession::stream_rows(const std::string& name) const {
  const auto& layers = streams_[static_cast<std::size_t>(stream_index(name))];
  return layers.empty() ? 0 : layers[0].k.rows();
}

namespace {

// one multi-head pass of nq query rows against a full key/value cache;
// query row i may see keys [0, visible[i])
TensorF attend(const TensorF& q, const TensorF& k, const TensorF& v,
               const std::vector<std::int64_t>& visible, std::int64_t heads) {
  const std::int64_t nq = q.rows(), d = q.cols();
  const std::int64_t dh = d / heads;
  const float inv_sqrt =
      1.0f / static_cast<float>(std::sqrt(static_cast<double>(dh)));
  TensorF out(nq, d);
  std::vector<float> scores;
  for (std::int64_t h = 0; h < heads; ++h) {
    const std::int64_t c0 = h * dh;
    for (std::int64_t i = 0; i < nq; ++i) {
      const std::int64_t nk = visible[static_cast<std::size_t>(i)];
      if (nk == 0) continue;  // empty context row stays zero
      scores.assign(static_cast<std::size_t>(nk), 0.0f);
      for (std::int64_t kk = 0; kk < nk; ++kk) {
        float dot = 0.0f;
        for (std::int64_t jj = 0; jj < dh; ++jj)
          dot += q.at(i, c0 + jj) * k.at(kk, c0 + jj);
        scores[static_cast<std::size_t>(kk)] = dot * inv_sqrt;
      }
      float mx = -std::numeric_limits<float>::infinity();
      for (float s : scores) mx = std::max(mx, s);
      float denom = 0.0f;
      for (float& s : scores) {
        s = std::exp(s - mx);
        denom += s;
      }
      for (float& s : scores) s /= denom;
      for (std::int64_t kk = 0; kk < nk; ++kk) {
        const float p = scores[static_cast<std::size_t>(kk)];
        for (std::int64_t jj = 0; jj < dh; ++jj)
          out.at(i, c0 + jj) += p * v.at(kk, c0 + jj);
      }
    }
  }
  return out;
}

void add_inplace(TensorF& x, const TensorF& y) {
  check_shape(x.same_shape(y), "add_inplace shape");
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += y.data[i];
}

}  // namespace

TensorF TransformerSession::step(const TensorF& x_rows) {
  check_shape(x_rows.cols() == cfg_.width, "session step: row width");
  const std::int64_t nb = x_rows.rows();
  TensorF x = x_rows;

  for (std::int64_t l = 0; l < cfg_.depth; ++l) {
    const std::string lp = ".l" + std::to_string(l);
    {
      const TensorF xn =
          layer_norm_rows(x, weight(lp + ".ln1.g"), weight(lp + ".ln1.b"));
      const TensorF q =
          affine_rows(xn, weight(lp + ".self.wq"), weight(lp + ".self.bq"));
      auto& kv = self_[static_cast<std::size_t>(l)];
      append_rows(kv.k, affine_rows(xn, weight(lp + ".self.wk"),
                                    weight(lp + ".self.bk")));
      append_rows(kv.v, affine_rows(xn, weight(lp + ".self.wv"),
                                    weight(lp + ".self.bv")));
      std::vector<std::int64_t> visible(static_cast<std::size_t>(nb));
      for (std::int64_t i = 0; i < nb; ++i)
        visible[static_cast<std::size_t>(i)] = self_rows_ + i + 1;
      const TensorF at = attend(q, kv.k, kv.v, visible, cfg_.heads);
      add_inplace(
          x, affine_rows(at, weight(lp + ".self.wo"), weight(lp + ".self.bo")));
    }
    for (std::size_t si = 0; si < cfg_.cross_streams.size(); ++si) {
      const std::string& name = cfg_.cross_streams[si];
      const std::string cp = lp + ".x." + name;
      const TensorF xn =
          layer_norm_rows(x, weight(cp + ".ln.g"), weight(cp + ".ln.b"));
      const TensorF q = affine_rows(xn, weight(cp + ".wq"), weight(cp + ".bq"));
      const auto& kv = streams_[si][static_cast<std::size_t>(l)];
      std::vector<std::int64_t> visible(static_cast<std::size_t>(nb),
                                        kv.k.rows());
      const TensorF at = attend(q, kv.k, kv.v, visible, cfg_.heads);
      add_inplace(x,
                  affine_rows(at, weight(cp + ".wo"), weight(cp + ".bo")));
    }
    {
      const TensorF xn =
          layer_norm_rows(x, weight(lp + ".ln2.g"), weight(lp + ".ln2.b"));
      TensorF h =
          affine_rows(xn, weight(lp + ".mlp.w1"), weight(lp + ".mlp.b1"));
      gelu_inplace(h);
      add_inplace(
          x, affine_rows(h, weight(lp + ".mlp.w2"), weight(lp + ".mlp.b2")));
    }
  }
  self_rows_ += nb;
  return layer_norm_rows(x, weight(".lnf.g"), weight(".lnf.b"));
}

void TransformerSession::reset_context() {
  for (auto& kv : self_) {
    kv.k = TensorF();
    kv.v = TensorF();
  }
  self_rows_ = 0;
}

}  // namespace cs::nn
