#pragma once

#include "cscore/nn/tensor.hpp"

namespace cs::nn {

// The one matmul kernel in the repo. Fixed i-k-j order: the inner loop is
// scalar * contiguous row, so vectorization cannot reassociate any single
// accumulator and results are bit-stable across runs. Both the tape and
// the incremental inference path call this, which is what makes a cached
// streaming step bit-identical to a full-sequence replay.
template <typename S>
inline void matmul_accumulate(const Tensor<S>& a, const Tensor<S>& b,
                              Tensor<S>& c) {
  check_shape(a.cols() == b.rows() && c.rows() == a.rows() &&
                  c.cols() == b.cols(),
              "matmul_accumulate: " + a.shape_str() + " x " + b.shape_str() +
                  " -> " + c.shape_str());
  const std::int64_t n = a.rows(), inner = a.cols(), m = b.cols();
  for (std::int64_t i = 0; i < n; ++i) {
    S* crow = &c.data[static_cast<std::size_t>(i * m)];
    for (std::int64_t k = 0; k < inner; ++k) {
      const S av = a.data[static_cast<std::size_t>(i * inner + k)];
      const S* brow = &b.data[static_cast<std::size_t>(k * m)];
      for (std::int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename S>
inline Tensor<S> matmul_product(const Tensor<S>& a, const Tensor<S>& b) {
  Tensor<S> c(a.rows(), b.cols());
  matmul_accumulate(a, b, c);
  return c;
}

template <typename S>
inline Tensor<S> transposed(const Tensor<S>& a) {
  Tensor<S> t(a.cols(), a.rows());
  for (std::int64_t i = 0; i < a.rows(); ++i)
    for (std::int64_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

}  // namespace cs::nn
