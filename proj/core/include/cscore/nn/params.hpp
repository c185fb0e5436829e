#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cscore/nn/rng.hpp"
#include "cscore/nn/tape.hpp"
#include "cscore/nn/tensor.hpp"

namespace cs::nn {

struct Parameter {
  std::string name;
  TensorF value;
  TensorF gradient;   // same shape, accumulated across backward passes
  TensorF ema_value;  // shadow weights for evaluation
};

// Flat named parameter container. Iteration follows registration order,
// which fixes the serialization layout and the optimizer update order.
class ParameterStore {
 public:
  std::int64_t add(const std::string& name, TensorF init);
  bool has(const std::string& name) const;
  std::int64_t index_of(const std::string& name) const;
  Parameter& param(const std::string& name) { return at(index_of(name)); }
  const Parameter& param(const std::string& name) const {
    return at(index_of(name));
  }
  Parameter& at(std::int64_t i) { return params_[static_cast<std::size_t>(i)]; }
  const Parameter& at(std::int64_t i) const {
    return params_[static_cast<std::size_t>(i)];
  }
  std::int64_t count() const {
    return static_cast<std::int64_t>(params_.size());
  }
  std::int64_t scalar_count() const;

  void zero_gradients();
  void ema_update(double decay);
  // evaluation path: expose EMA weights as the live values (and back)
  void swap_ema();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::int64_t> index_;
};

// Leaf ids of one store's parameters on one tape, registration order.
template <typename S>
struct AttachedParams {
  std::vector<typename Tape<S>::Id> ids;
  typename Tape<S>::Id id(const ParameterStore& store,
                          const std::string& name) const {
    return ids[static_cast<std::size_t>(store.index_of(name))];
  }
};

template <typename S>
AttachedParams<S> attach_params(Tape<S>& tape, const ParameterStore& store,
                                bool use_ema = false);

// Adds tape leaf gradients into Parameter::gradient (cast to float).
template <typename S>
void accumulate_gradients(const Tape<S>& tape, const AttachedParams<S>& att,
                          ParameterStore& store);

// init helpers
TensorF init_zeros(std::int64_t r, std::int64_t c);
TensorF init_constant(std::int64_t r, std::int64_t c, float v);
TensorF init_normal(cs::rng::Rng& rng, std::int64_t r, std::int64_t c,
                    double stddev);
// identity with small noise, for square projections that should start
// close to a pass-through
TensorF init_near_identity(cs::rng::Rng& rng, std::int64_t n, double noise);

}  // namespace cs::nn
