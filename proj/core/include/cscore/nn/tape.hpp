#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cscore/nn/mask.hpp"
#include "cscore/nn/tensor.hpp"

namespace cs::nn {

// Reverse-mode autodiff over 2-d tensors. Forward runs eagerly; each op
// records a closure that scatters the node's gradient into its inputs.
// backward() walks nodes in reverse creation order, which is a valid
// topological order because ops only consume already-created ids.
//
// Determinism contract: every reduction in forward and backward code runs
// as a sequential loop in a fixed order (matmul is i-k-j), so repeated
// runs with identical inputs produce byte-identical results.
template <typename S>
class Tape {
 public:
  using Id = std::int32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  const Tensor<S>& value(Id id) const { return nodes_[check_id(id)].value; }
  const Tensor<S>& grad(Id id) const { return nodes_[check_id(id)].grad; }

  Id leaf(Tensor<S> value);
  Id constant(Tensor<S> value) { return leaf(std::move(value)); }
  Id scalar(S value) { return leaf(Tensor<S>(1, 1, value)); }

  // elementwise
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id affine_scalar(Id x, S mul, S add);  // mul * x + add
  Id scale(Id x, S mul) { return affine_scalar(x, mul, S(0)); }
  Id square(Id x);
  Id abs(Id x);
  Id gelu(Id x);
  Id sigmoid(Id x);
  Id log_clamped(Id x, S lo, S hi);

  // linear algebra
  Id matmul(Id a, Id b, bool trans_a = false, bool trans_b = false);
  Id add_row(Id x, Id row);  // broadcast [1,d] across rows of [n,d]
  Id affine(Id x, Id w, Id b) { return add_row(matmul(x, w), b); }
  Id layer_norm(Id x, Id gain, Id offset);  // per-row, eps 1e-5
  Id l2_normalize_rows(Id x);

  // Straight-through sign binarizer. Hard forward maps each element to
  // +magnitude when x >= 0 and -magnitude otherwise; backward is identity
  // either way. relaxed_forward replaces the forward with identity so the
  // surrounding loss becomes differentiable end to end, which is what
  // finite-difference checks need.
  Id binarize_ste(Id x, S magnitude, bool relaxed_forward = false);

  // structure
  Id slice_rows(Id x, std::int64_t r0, std::int64_t r1);
  Id slice_cols(Id x, std::int64_t c0, std::int64_t c1);
  Id concat_rows(const std::vector<Id>& xs);
  Id concat_cols(const std::vector<Id>& xs);
  Id gather_rows(Id x, std::vector<std::int64_t> indices);
  // bin b covers rows [starts[b], starts[b+1]); starts.size() == bins + 1
  Id pool_rows_mean(Id x, std::vector<std::int64_t> starts);
  // mean over every element of the rows assigned to each group -> [groups,1]
  Id group_mean_scalar(Id x, std::vector<std::int64_t> row_group,
                       std::int64_t n_groups);
  Id diff_rows(Id x);  // out[i] = x[i+1] - x[i]
  Id stop_gradient(Id x);

  // reductions
  Id reduce_sum_all(Id x);
  Id reduce_mean_all(Id x);
  Id mean_rows(Id x);  // [n,d] -> [1,d]

  // attention / losses
  Id row_softmax(Id scores, const AttentionMask& mask);
  Id softmax_cross_entropy(Id logits, std::vector<std::int64_t> targets);

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1. A tape can
  // run backward once; build a fresh tape per step.
  void backward(Id loss);

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    std::function<void()> back;
  };

  Id check_id(Id id) const {
    check_index(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(),
                "tape id out of range");
    return id;
  }

  Id push(Tensor<S> value, std::function<void()> back);
  Tensor<S>& grad_mut(Id id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace cs::nn
