#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cscore/errors.hpp"

namespace cs {

// Dense row-major 2-d matrix. Everything in the compute path is a matrix;
// sequences are rows, channels are columns.
template <typename S>
struct Tensor {
  std::int64_t n_rows = 0;
  std::int64_t n_cols = 0;
  std::vector<S> data;

  Tensor() = default;
  Tensor(std::int64_t r, std::int64_t c, S fill = S(0))
      : n_rows(r), n_cols(c), data(static_cast<std::size_t>(r * c), fill) {
    check(r >= 0 && c >= 0, "tensor dims must be non-negative");
  }

  static Tensor from_rows(std::int64_t r, std::int64_t c, std::vector<S> v) {
    check_shape(static_cast<std::int64_t>(v.size()) == r * c,
                "from_rows: size " + std::to_string(v.size()) + " != " +
                    std::to_string(r) + "x" + std::to_string(c));
    Tensor t;
    t.n_rows = r;
    t.n_cols = c;
    t.data = std::move(v);
    return t;
  }

  std::int64_t rows() const { return n_rows; }
  std::int64_t cols() const { return n_cols; }
  std::int64_t size() const { return n_rows * n_cols; }

  S& at(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * n_cols + c)];
  }
  S at(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * n_cols + c)];
  }

  bool same_shape(const Tensor& o) const {
    return n_rows == o.n_rows && n_cols == o.n_cols;
  }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.n_rows = n_rows;
    out.n_cols = n_cols;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<T>(data[i]);
    return out;
  }

  std::string shape_str() const {
    return "[" + std::to_string(n_rows) + "," + std::to_string(n_cols) + "]";
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace cs
