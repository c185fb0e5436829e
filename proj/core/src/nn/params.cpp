#include "cscore/nn/params.hpp"

#include <utility>

namespace cs::nn {

std::int64_t ParameterStore::add(const std::string& name, TensorF init) {
  check_config(!name.empty(), "parameter name must be non-empty");
  check_config(index_.find(name) == index_.end(),
               "duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.gradient = TensorF(init.rows(), init.cols(), 0.0f);
  p.ema_value = init;
  p.value = std::move(init);
  const std::int64_t idx = count();
  index_.emplace(name, idx);
  params_.push_back(std::move(p));
  return idx;
}

bool ParameterStore::has(const std::string& name) const {
  return index_.find(name) != index_.end();
}

std::int64_t ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  check_config(it != index_.end(), "unknown parameter: " + name);
  return it->second;
}

std::int64_t ParameterStore::scalar_count() const {
  std::int64_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_gradients() {
  for (Parameter& p : params_)
    std::fill(p.gradient.data.begin(), p.gradient.data.end(), 0.0f);
}

void ParameterStore::ema_update(double decay) {
  check_config(decay >= 0.0 && decay <= 1.0, "ema decay out of [0,1]");
  const float d = static_cast<float>(decay);
  const float c = 1.0f - d;
  for (Parameter& p : params_)
    for (std::size_t i = 0; i < p.value.data.size(); ++i)
      p.ema_value.data[i] = d * p.ema_value.data[i] + c * p.value.data[i];
}

void ParameterStore::swap_ema() {
  for (Parameter& p : params_) std::swap(p.value.data, p.ema_value.data);
}

template <typename S>
AttachedParams<S> attach_params(Tape<S>& tape, const ParameterStore& store,
                                bool use_ema) {
  AttachedParams<S> att;
  att.ids.reserve(static_cast<std::size_t>(store.count()));
  for (std::int64_t i = 0; i < store.count(); ++i) {
    const Parameter& p = store.at(i);
    const TensorF& src = use_ema ? p.ema_value : p.value;
    att.ids.push_back(tape.leaf(src.template cast<S>()));
  }
  return att;
}

template <typename S>
void accumulate_gradients(const Tape<S>& tape, const AttachedParams<S>& att,
                          ParameterStore& store) {
  check_shape(static_cast<std::int64_t>(att.ids.size()) == store.count(),
              "attached ids do not match store");
  for (std::int64_t i = 0; i < store.count(); ++i) {
    Parameter& p = store.at(i);
    const Tensor<S>& g = tape.grad(att.ids[static_cast<std::size_t>(i)]);
    check_shape(g.rows() == p.value.rows() && g.cols() == p.value.cols(),
                "gradient shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.gradient.data.size(); ++k)
      p.gradient.data[k] += static_cast<float>(g.data[k]);
  }
}

template AttachedParams<float> attach_params<float>(Tape<float>&,
                                                    const ParameterStore&,
                                                    bool);
template AttachedParams<double> attach_params<double>(Tape<double>&,
                                                      const ParameterStore&,
                                                      bool);
template void accumulate_gradients<float>(const Tape<float>&,
                                          const AttachedParams<float>&,
                                          ParameterStore&);
template void accumulate_gradients<double>(const Tape<double>&,
                                           const AttachedParams<double>&,
                                           ParameterStore&);

TensorF init_zeros(std::int64_t r, std::int64_t c) { return TensorF(r, c, 0.0f); }

TensorF init_constant(std::int64_t r, std::int64_t c, float v) {
  return TensorF(r, c, v);
}

TensorF init_normal(cs::rng::Rng& rng, std::int64_t r, std::int64_t c,
                    double stddev) {
  TensorF t(r, c);
  for (float& v : t.data) v = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

TensorF init_near_identity(cs::rng::Rng& rng, std::int64_t n, double noise) {
  TensorF t(n, n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      t.at(i, j) = static_cast<float>((i == j ? 1.0 : 0.0) +
                                      noise * rng.normal(0.0, 1.0));
  return t;
}

}  // namespace cs::nn
