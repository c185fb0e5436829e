#include "cscore/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>

#include "cscore/nn/blas.hpp"

namespace cs::nn {
namespace {

template <typename S>
void acc(Tensor<S>& dst, const Tensor<S>& src) {
  check_shape(dst.same_shape(src), "gradient shape mismatch");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

template <typename S>
typename Tape<S>::Id Tape<S>::push(Tensor<S> value, std::function<void()> back) {
  check_state(nodes_.size() < static_cast<std::size_t>(
                                  std::numeric_limits<Id>::max()),
              "tape node limit exceeded");
  Node n;
  n.grad = Tensor<S>(value.rows(), value.cols(), S(0));
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <typename S>
typename Tape<S>::Id Tape<S>::leaf(Tensor<S> value) {
  return push(std::move(value), nullptr);
}

template <typename S>
typename Tape<S>::Id Tape<S>::add(Id a, Id b) {
  check_id(a);
  check_id(b);
  const Tensor<S>& va = nodes_[a].value;
  const Tensor<S>& vb = nodes_[b].value;
  check_shape(va.same_shape(vb),
              "add: " + va.shape_str() + " vs " + vb.shape_str());
  Tensor<S> out = va;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, a, b, y]() {
    acc(grad_mut(a), nodes_[y].grad);
    acc(grad_mut(b), nodes_[y].grad);
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::sub(Id a, Id b) {
  check_id(a);
  check_id(b);
  const Tensor<S>& va = nodes_[a].value;
  const Tensor<S>& vb = nodes_[b].value;
  check_shape(va.same_shape(vb),
              "sub: " + va.shape_str() + " vs " + vb.shape_str());
  Tensor<S> out = va;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, a, b, y]() {
    const Tensor<S>& g = nodes_[y].grad;
    acc(grad_mut(a), g);
    Tensor<S>& gb = grad_mut(b);
    for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::mul(Id a, Id b) {
  check_id(a);
  check_id(b);
  const Tensor<S>& va = nodes_[a].value;
  const Tensor<S>& vb = nodes_[b].value;
  check_shape(va.same_shape(vb),
              "mul: " + va.shape_str() + " vs " + vb.shape_str());
  Tensor<S> out = va;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, a, b, y]() {
    const Tensor<S>& g = nodes_[y].grad;
    const Tensor<S>& va = nodes_[a].value;
    const Tensor<S>& vb = nodes_[b].value;
    Tensor<S>& ga = grad_mut(a);
    Tensor<S>& gb = grad_mut(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i] * vb.data[i];
      gb.data[i] += g.data[i] * va.data[i];
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::affine_scalar(Id x, S mul, S addend) {
  check_id(x);
  Tensor<S> out = nodes_[x].value;
  for (S& v : out.data) v = mul * v + addend;
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, mul]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += mul * g.data[i];
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::square(Id x) {
  check_id(x);
  Tensor<S> out = nodes_[x].value;
  for (S& v : out.data) v = v * v;
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y]() {
    const Tensor<S>& g = nodes_[y].grad;
    const Tensor<S>& vx = nodes_[x].value;
    Tensor<S>& gx = grad_mut(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += S(2) * vx.data[i] * g.data[i];
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::abs(Id x) {
  check_id(x);
  Tensor<S> out = nodes_[x].value;
  for (S& v : out.data) v = v < S(0) ? -v : v;
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y]() {
    const Tensor<S>& g = nodes_[y].grad;
    const Tensor<S>& vx = nodes_[x].value;
    Tensor<S>& gx = grad_mut(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
      const S v = vx.data[i];
      // subgradient 0 at the kink
      const S s = v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0));
      gx.data[i] += s * g.data[i];
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::gelu(Id x) {
  check_id(x);
  // tanh form; smooth everywhere, which keeps finite differences honest
  const S k0 = S(0.7978845608028654);  // sqrt(2/pi)
  const S k1 = S(0.044715);
  Tensor<S> out = nodes_[x].value;
  for (S& v : out.data) {
    const S u = k0 * (v + k1 * v * v * v);
    v = S(0.5) * v * (S(1) + std::tanh(u));
  }
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, k0, k1]() {
    const Tensor<S>& g = nodes_[y].grad;
    const Tensor<S>& vx = nodes_[x].value;
    Tensor<S>& gx = grad_mut(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
      const S v = vx.data[i];
      const S u = k0 * (v + k1 * v * v * v);
      const S t = std::tanh(u);
      const S du = k0 * (S(1) + S(3) * k1 * v * v);
      const S d = S(0.5) * (S(1) + t) + S(0.5) * v * (S(1) - t * t) * du;
      gx.data[i] += d * g.data[i];
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::sigmoid(Id x) {
  check_id(x);
  Tensor<S> out = nodes_[x].value;
  for (S& v : out.data) v = S(1) / (S(1) + std::exp(-v));
  auto cached = std::make_shared<Tensor<S>>(out);
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, cached]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
      const S s = cached->data[i];
      gx.data[i] += s * (S(1) - s) * g.data[i];
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::log_clamped(Id x, S lo, S hi) {
  check_id(x);
  check_config(lo > S(0) && hi > lo, "log_clamped: need 0 < lo < hi");
  Tensor<S> out = nodes_[x].value;
  for (S& v : out.data) v = std::log(std::min(std::max(v, lo), hi));
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, lo, hi]() {
    const Tensor<S>& g = nodes_[y].grad;
    const Tensor<S>& vx = nodes_[x].value;
    Tensor<S>& gx = grad_mut(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
      const S v = vx.data[i];
      if (v >= lo && v <= hi) gx.data[i] += g.data[i] / v;
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::matmul(Id a, Id b, bool trans_a, bool trans_b) {
  check_id(a);
  check_id(b);
  Tensor<S> oa = trans_a ? transposed(nodes_[a].value) : nodes_[a].value;
  Tensor<S> ob = trans_b ? transposed(nodes_[b].value) : nodes_[b].value;
  check_shape(oa.cols() == ob.rows(), "matmul: inner dims " + oa.shape_str() +
                                          " x " + ob.shape_str());
  Tensor<S> out = matmul_product(oa, ob);
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, a, b, y, trans_a, trans_b]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S> oa = trans_a ? transposed(nodes_[a].value) : nodes_[a].value;
    Tensor<S> ob = trans_b ? transposed(nodes_[b].value) : nodes_[b].value;
    Tensor<S> da = matmul_product(g, transposed(ob));  // d(oa)
    Tensor<S> db = matmul_product(transposed(oa), g);  // d(ob)
    if (trans_a)
      acc(grad_mut(a), transposed(da));
    else
      acc(grad_mut(a), da);
    if (trans_b)
      acc(grad_mut(b), transposed(db));
    else
      acc(grad_mut(b), db);
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::add_row(Id x, Id row) {
  check_id(x);
  check_id(row);
  const Tensor<S>& vx = nodes_[x].value;
  const Tensor<S>& vr = nodes_[row].value;
  check_shape(vr.rows() == 1 && vr.cols() == vx.cols(),
              "add_row: " + vx.shape_str() + " + " + vr.shape_str());
  Tensor<S> out = vx;
  for (std::int64_t i = 0; i < out.rows(); ++i)
    for (std::int64_t j = 0; j < out.cols(); ++j) out.at(i, j) += vr.at(0, j);
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, row, y]() {
    const Tensor<S>& g = nodes_[y].grad;
    acc(grad_mut(x), g);
    Tensor<S>& gr = grad_mut(row);
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j) gr.at(0, j) += g.at(i, j);
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::layer_norm(Id x, Id gain, Id offset) {
  check_id(x);
  check_id(gain);
  check_id(offset);
  const Tensor<S>& vx = nodes_[x].value;
  const Tensor<S>& vg = nodes_[gain].value;
  const Tensor<S>& vo = nodes_[offset].value;
  const std::int64_t n = vx.rows(), d = vx.cols();
  check_shape(vg.rows() == 1 && vg.cols() == d, "layer_norm gain shape");
  check_shape(vo.rows() == 1 && vo.cols() == d, "layer_norm offset shape");
  check_shape(d > 0, "layer_norm on empty rows");

  const S eps = S(1e-5);
  auto xhat = std::make_shared<Tensor<S>>(n, d);
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(n));
  Tensor<S> out(n, d);
  for (std::int64_t i = 0; i < n; ++i) {
    S mean = S(0);
    for (std::int64_t j = 0; j < d; ++j) mean += vx.at(i, j);
    mean /= S(d);
    S var = S(0);
    for (std::int64_t j = 0; j < d; ++j) {
      const S c = vx.at(i, j) - mean;
      var += c * c;
    }
    var /= S(d);
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(i)] = inv;
    for (std::int64_t j = 0; j < d; ++j) {
      const S xh = (vx.at(i, j) - mean) * inv;
      xhat->at(i, j) = xh;
      out.at(i, j) = xh * vg.at(0, j) + vo.at(0, j);
    }
  }
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, gain, offset, y, xhat, inv_std]() {
    const Tensor<S>& g = nodes_[y].grad;
    const Tensor<S>& vg = nodes_[gain].value;
    Tensor<S>& gx = grad_mut(x);
    Tensor<S>& gg = grad_mut(gain);
    Tensor<S>& go = grad_mut(offset);
    const std::int64_t n = g.rows(), d = g.cols();
    for (std::int64_t i = 0; i < n; ++i) {
      const S inv = (*inv_std)[static_cast<std::size_t>(i)];
      S m1 = S(0), m2 = S(0);
      for (std::int64_t j = 0; j < d; ++j) {
        const S dxh = g.at(i, j) * vg.at(0, j);
        m1 += dxh;
        m2 += dxh * xhat->at(i, j);
      }
      m1 /= S(d);
      m2 /= S(d);
      for (std::int64_t j = 0; j < d; ++j) {
        const S dxh = g.at(i, j) * vg.at(0, j);
        gx.at(i, j) += (dxh - m1 - xhat->at(i, j) * m2) * inv;
        gg.at(0, j) += g.at(i, j) * xhat->at(i, j);
        go.at(0, j) += g.at(i, j);
      }
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::l2_normalize_rows(Id x) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  const std::int64_t n = vx.rows(), d = vx.cols();
  auto norms = std::make_shared<std::vector<S>>(static_cast<std::size_t>(n));
  Tensor<S> out(n, d);
  for (std::int64_t i = 0; i < n; ++i) {
    S sq = S(0);
    for (std::int64_t j = 0; j < d; ++j) sq += vx.at(i, j) * vx.at(i, j);
    const S nn = std::max(std::sqrt(sq), S(1e-12));
    (*norms)[static_cast<std::size_t>(i)] = nn;
    for (std::int64_t j = 0; j < d; ++j) out.at(i, j) = vx.at(i, j) / nn;
  }
  auto unit = std::make_shared<Tensor<S>>(out);
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, norms, unit]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    const std::int64_t n = g.rows(), d = g.cols();
    for (std::int64_t i = 0; i < n; ++i) {
      S dot = S(0);
      for (std::int64_t j = 0; j < d; ++j) dot += g.at(i, j) * unit->at(i, j);
      const S nn = (*norms)[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < d; ++j)
        gx.at(i, j) += (g.at(i, j) - unit->at(i, j) * dot) / nn;
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::binarize_ste(Id x, S magnitude,
                                           bool relaxed_forward) {
  check_id(x);
  check_config(magnitude > S(0), "binarize_ste: magnitude must be positive");
  Tensor<S> out = nodes_[x].value;
  if (!relaxed_forward) {
    // x == 0 takes the positive codeword
    for (S& v : out.data) v = v >= S(0) ? magnitude : -magnitude;
  }
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y]() { acc(grad_mut(x), nodes_[y].grad); };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::slice_rows(Id x, std::int64_t r0,
                                         std::int64_t r1) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  check_index(0 <= r0 && r0 < r1 && r1 <= vx.rows(), "slice_rows range");
  const std::int64_t d = vx.cols();
  Tensor<S> out(r1 - r0, d);
  std::copy(vx.data.begin() + r0 * d, vx.data.begin() + r1 * d,
            out.data.begin());
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, r0]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    const std::int64_t d = g.cols();
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < d; ++j) gx.at(r0 + i, j) += g.at(i, j);
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::slice_cols(Id x, std::int64_t c0,
                                         std::int64_t c1) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  check_index(0 <= c0 && c0 < c1 && c1 <= vx.cols(), "slice_cols range");
  Tensor<S> out(vx.rows(), c1 - c0);
  for (std::int64_t i = 0; i < vx.rows(); ++i)
    for (std::int64_t j = c0; j < c1; ++j) out.at(i, j - c0) = vx.at(i, j);
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, c0]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j) gx.at(i, c0 + j) += g.at(i, j);
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::concat_rows(const std::vector<Id>& xs) {
  check_config(!xs.empty(), "concat_rows: empty input list");
  std::int64_t rows = 0;
  const std::int64_t d = nodes_[check_id(xs[0])].value.cols();
  for (Id x : xs) {
    const Tensor<S>& v = nodes_[check_id(x)].value;
    check_shape(v.cols() == d, "concat_rows: column mismatch");
    rows += v.rows();
  }
  Tensor<S> out(rows, d);
  std::int64_t r = 0;
  for (Id x : xs) {
    const Tensor<S>& v = nodes_[x].value;
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + r * d);
    r += v.rows();
  }
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, xs, y]() {
    const Tensor<S>& g = nodes_[y].grad;
    const std::int64_t d = g.cols();
    std::int64_t r = 0;
    for (Id x : xs) {
      Tensor<S>& gx = grad_mut(x);
      for (std::int64_t i = 0; i < gx.rows(); ++i)
        for (std::int64_t j = 0; j < d; ++j) gx.at(i, j) += g.at(r + i, j);
      r += gx.rows();
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::concat_cols(const std::vector<Id>& xs) {
  check_config(!xs.empty(), "concat_cols: empty input list");
  const std::int64_t rows = nodes_[check_id(xs[0])].value.rows();
  std::int64_t cols = 0;
  for (Id x : xs) {
    const Tensor<S>& v = nodes_[check_id(x)].value;
    check_shape(v.rows() == rows, "concat_cols: row mismatch");
    cols += v.cols();
  }
  Tensor<S> out(rows, cols);
  std::int64_t c = 0;
  for (Id x : xs) {
    const Tensor<S>& v = nodes_[x].value;
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < v.cols(); ++j) out.at(i, c + j) = v.at(i, j);
    c += v.cols();
  }
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, xs, y]() {
    const Tensor<S>& g = nodes_[y].grad;
    std::int64_t c = 0;
    for (Id x : xs) {
      Tensor<S>& gx = grad_mut(x);
      for (std::int64_t i = 0; i < gx.rows(); ++i)
        for (std::int64_t j = 0; j < gx.cols(); ++j)
          gx.at(i, j) += g.at(i, c + j);
      c += gx.cols();
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::gather_rows(Id x,
                                          std::vector<std::int64_t> indices) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  for (std::int64_t idx : indices)
    check_index(0 <= idx && idx < vx.rows(), "gather_rows index");
  const std::int64_t d = vx.cols();
  Tensor<S> out(static_cast<std::int64_t>(indices.size()), d);
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::int64_t j = 0; j < d; ++j)
      out.at(static_cast<std::int64_t>(i), j) = vx.at(indices[i], j);
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(indices));
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, idx]() {
    // scatter-add in ascending output order; duplicates accumulate
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j)
        gx.at((*idx)[i], j) += g.at(static_cast<std::int64_t>(i), j);
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::pool_rows_mean(Id x,
                                             std::vector<std::int64_t> starts) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  check_config(starts.size() >= 2, "pool_rows_mean: need at least one bin");
  const std::int64_t bins = static_cast<std::int64_t>(starts.size()) - 1;
  check_index(starts.front() >= 0 && starts.back() <= vx.rows(),
              "pool_rows_mean: bin range");
  for (std::int64_t b = 0; b < bins; ++b)
    check_index(starts[b] < starts[b + 1], "pool_rows_mean: empty bin");
  const std::int64_t d = vx.cols();
  Tensor<S> out(bins, d);
  for (std::int64_t b = 0; b < bins; ++b) {
    const std::int64_t lo = starts[b], hi = starts[b + 1];
    for (std::int64_t j = 0; j < d; ++j) {
      S s = S(0);
      for (std::int64_t i = lo; i < hi; ++i) s += vx.at(i, j);
      out.at(b, j) = s / S(hi - lo);
    }
  }
  auto st = std::make_shared<std::vector<std::int64_t>>(std::move(starts));
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, st]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    const std::int64_t bins = g.rows();
    for (std::int64_t b = 0; b < bins; ++b) {
      const std::int64_t lo = (*st)[b], hi = (*st)[b + 1];
      const S inv = S(1) / S(hi - lo);
      for (std::int64_t i = lo; i < hi; ++i)
        for (std::int64_t j = 0; j < g.cols(); ++j)
          gx.at(i, j) += g.at(b, j) * inv;
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::group_mean_scalar(
    Id x, std::vector<std::int64_t> row_group, std::int64_t n_groups) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  check_shape(static_cast<std::int64_t>(row_group.size()) == vx.rows(),
              "group_mean_scalar: one group id per row");
  check_config(n_groups > 0, "group_mean_scalar: n_groups");
  std::vector<std::int64_t> count(static_cast<std::size_t>(n_groups), 0);
  for (std::int64_t gid : row_group) {
    check_index(0 <= gid && gid < n_groups, "group_mean_scalar: group id");
    ++count[static_cast<std::size_t>(gid)];
  }
  for (std::int64_t c : count)
    check_config(c > 0, "group_mean_scalar: empty group");
  const std::int64_t d = vx.cols();
  Tensor<S> out(n_groups, 1);
  for (std::int64_t i = 0; i < vx.rows(); ++i) {
    const std::int64_t gid = row_group[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < d; ++j) out.at(gid, 0) += vx.at(i, j);
  }
  auto denom = std::make_shared<std::vector<S>>();
  denom->reserve(static_cast<std::size_t>(n_groups));
  for (std::int64_t gid = 0; gid < n_groups; ++gid) {
    const S dn = S(count[static_cast<std::size_t>(gid)]) * S(d);
    denom->push_back(dn);
    out.at(gid, 0) /= dn;
  }
  auto groups =
      std::make_shared<std::vector<std::int64_t>>(std::move(row_group));
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, groups, denom]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    for (std::int64_t i = 0; i < gx.rows(); ++i) {
      const std::int64_t gid = (*groups)[static_cast<std::size_t>(i)];
      const S w = g.at(gid, 0) / (*denom)[static_cast<std::size_t>(gid)];
      for (std::int64_t j = 0; j < gx.cols(); ++j) gx.at(i, j) += w;
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::diff_rows(Id x) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  check_shape(vx.rows() >= 2, "diff_rows: need at least two rows");
  const std::int64_t d = vx.cols();
  Tensor<S> out(vx.rows() - 1, d);
  for (std::int64_t i = 0; i + 1 < vx.rows(); ++i)
    for (std::int64_t j = 0; j < d; ++j)
      out.at(i, j) = vx.at(i + 1, j) - vx.at(i, j);
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    for (std::int64_t i = 0; i < g.rows(); ++i)
      for (std::int64_t j = 0; j < g.cols(); ++j) {
        gx.at(i + 1, j) += g.at(i, j);
        gx.at(i, j) -= g.at(i, j);
      }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::stop_gradient(Id x) {
  check_id(x);
  return push(nodes_[x].value, nullptr);
}

template <typename S>
typename Tape<S>::Id Tape<S>::reduce_sum_all(Id x) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  S s = S(0);
  for (S v : vx.data) s += v;
  Id y = push(Tensor<S>(1, 1, s), nullptr);
  nodes_[y].back = [this, x, y]() {
    const S g = nodes_[y].grad.at(0, 0);
    Tensor<S>& gx = grad_mut(x);
    for (S& v : gx.data) v += g;
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::reduce_mean_all(Id x) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  check_shape(vx.size() > 0, "reduce_mean_all: empty tensor");
  S s = S(0);
  for (S v : vx.data) s += v;
  const S inv = S(1) / S(vx.size());
  Id y = push(Tensor<S>(1, 1, s * inv), nullptr);
  nodes_[y].back = [this, x, y, inv]() {
    const S g = nodes_[y].grad.at(0, 0) * inv;
    Tensor<S>& gx = grad_mut(x);
    for (S& v : gx.data) v += g;
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::mean_rows(Id x) {
  check_id(x);
  const Tensor<S>& vx = nodes_[x].value;
  check_shape(vx.rows() > 0, "mean_rows: empty tensor");
  const std::int64_t n = vx.rows(), d = vx.cols();
  Tensor<S> out(1, d);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) out.at(0, j) += vx.at(i, j);
  const S inv = S(1) / S(n);
  for (S& v : out.data) v *= inv;
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, x, y, inv]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gx = grad_mut(x);
    for (std::int64_t i = 0; i < gx.rows(); ++i)
      for (std::int64_t j = 0; j < gx.cols(); ++j)
        gx.at(i, j) += g.at(0, j) * inv;
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::row_softmax(Id scores, const AttentionMask& mask) {
  check_id(scores);
  const Tensor<S>& vs = nodes_[scores].value;
  const std::int64_t nq = vs.rows(), nk = vs.cols();
  if (mask.kind == AttentionMask::Kind::custom)
    check_shape(mask.nq == nq && mask.nk == nk, "row_softmax: mask shape");
  Tensor<S> out(nq, nk);
  for (std::int64_t q = 0; q < nq; ++q) {
    S mx = -std::numeric_limits<S>::infinity();
    bool any = false;
    for (std::int64_t k = 0; k < nk; ++k)
      if (mask.allows(q, k)) {
        any = true;
        mx = std::max(mx, vs.at(q, k));
      }
    if (!any) continue;  // fully masked row stays zero and gets zero grad
    S denom = S(0);
    for (std::int64_t k = 0; k < nk; ++k)
      if (mask.allows(q, k)) {
        const S e = std::exp(vs.at(q, k) - mx);
        out.at(q, k) = e;
        denom += e;
      }
    for (std::int64_t k = 0; k < nk; ++k) out.at(q, k) /= denom;
  }
  auto probs = std::make_shared<Tensor<S>>(out);
  Id y = push(std::move(out), nullptr);
  nodes_[y].back = [this, scores, y, probs]() {
    const Tensor<S>& g = nodes_[y].grad;
    Tensor<S>& gs = grad_mut(scores);
    for (std::int64_t q = 0; q < g.rows(); ++q) {
      S dot = S(0);
      for (std::int64_t k = 0; k < g.cols(); ++k)
        dot += g.at(q, k) * probs->at(q, k);
      for (std::int64_t k = 0; k < g.cols(); ++k)
        gs.at(q, k) += probs->at(q, k) * (g.at(q, k) - dot);
    }
  };
  return y;
}

template <typename S>
typename Tape<S>::Id Tape<S>::softmax_cross_entropy(
    Id logits, std::vector<std::int64_t> targets) {
  check_id(logits);
  const Tensor<S>& vl = nodes_[logits].value;
  const std::int64_t n = vl.rows(), c = vl.cols();
  check_shape(static_cast<std::int64_t>(targets.size()) == n,
              "cross_entropy: one target per row");
  for (std::int64_t t : targets)
    check_index(0 <= t && t < c, "cross_entropy: target class");
  auto probs = std::make_shared<Tensor<S>>(n, c);
  S loss = S(0);
  for (std::int64_t i = 0; i < n; ++i) {
    S mx = vl.at(i, 0);
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, vl.at(i, j));
    S denom = S(0);
    for (std::int64_t j = 0; j < c; ++j) {
      const S e = std::exp(vl.at(i, j) - mx);
      probs->at(i, j) = e;
      denom += e;
    }
    for (std::int64_t j = 0; j < c; ++j) probs->at(i, j) /= denom;
    // -log softmax via logsumexp, avoids log of a tiny ratio
    loss += std::log(denom) + mx - vl.at(i, targets[static_cast<std::size_t>(i)]);
  }
  loss /= S(n);
  auto tgt = std::make_shared<std::vector<std::int64_t>>(std::move(targets));
  Id y = push(Tensor<S>(1, 1, loss), nullptr);
  nodes_[y].back = [this, logits, y, probs, tgt]() {
    const S g = nodes_[y].grad.at(0, 0);
    Tensor<S>& gl = grad_mut(logits);
    const std::int64_t n = gl.rows(), c = gl.cols();
    const S inv = g / S(n);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const S onehot =
            j == (*tgt)[static_cast<std::size_t>(i)] ? S(1) : S(0);
        gl.at(i, j) += (probs->at(i, j) - onehot) * inv;
      }
  };
  return y;
}

template <typename S>
void Tape<S>::backward(Id loss) {
  check_id(loss);
  check_state(!backward_done_, "tape backward already ran");
  const Tensor<S>& vl = nodes_[loss].value;
  check_shape(vl.rows() == 1 && vl.cols() == 1, "backward: loss must be 1x1");
  backward_done_ = true;
  nodes_[loss].grad.at(0, 0) = S(1);
  for (Id i = loss; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cs::nn
