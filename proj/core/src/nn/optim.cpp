#include "cscore/nn/optim.hpp"

#include <cmath>

namespace cs::nn {

void Adam::step(ParameterStore& store) {
  if (m_.empty()) {
    m_.reserve(static_cast<std::size_t>(store.count()));
    v_.reserve(static_cast<std::size_t>(store.count()));
    for (std::int64_t i = 0; i < store.count(); ++i) {
      const Parameter& p = store.at(i);
      m_.emplace_back(p.value.rows(), p.value.cols(), 0.0f);
      v_.emplace_back(p.value.rows(), p.value.cols(), 0.0f);
    }
  }
  check_state(static_cast<std::int64_t>(m_.size()) == store.count(),
              "adam: store size changed after first step");

  ++step_count_;
  const double lr = lr_at(step_count_);
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));

  for (std::int64_t i = 0; i < store.count(); ++i) {
    Parameter& p = store.at(i);
    TensorF& m = m_[static_cast<std::size_t>(i)];
    TensorF& v = v_[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < p.value.data.size(); ++k) {
      const double g = static_cast<double>(p.gradient.data[k]);
      const double mk = b1 * static_cast<double>(m.data[k]) + (1.0 - b1) * g;
      const double vk =
          b2 * static_cast<double>(v.data[k]) + (1.0 - b2) * g * g;
      m.data[k] = static_cast<float>(mk);
      v.data[k] = static_cast<float>(vk);
      const double update =
          lr * (mk / bc1) / (std::sqrt(vk / bc2) + cfg_.eps);
      p.value.data[k] = static_cast<float>(
          static_cast<double>(p.value.data[k]) - update);
    }
  }
  store.zero_gradients();
}

}  // namespace cs::nn
