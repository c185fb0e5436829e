#include "cscore/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

namespace cs::nn {

GradCheckResult finite_diff_check(const LossBuilder& build,
                                  ParameterStore& store, double step,
                                  cs::rng::Rng& rng, std::int64_t min_coords,
                                  double rel_bound) {
  GradCheckResult res;
  check_config(step > 0.0, "finite_diff_check: step > 0");

  // analytic pass
  std::vector<TensorD> analytic;
  double base_loss = 0.0;
  {
    TapeD tape;
    AttachedParams<double> att = attach_params(tape, store);
    const TapeD::Id loss = build(tape, att);
    base_loss = tape.value(loss).at(0, 0);
    if (!std::isfinite(base_loss)) return res;
    tape.backward(loss);
    analytic.reserve(att.ids.size());
    for (TapeD::Id id : att.ids) analytic.push_back(tape.grad(id));
  }

  auto eval = [&]() -> double {
    TapeD tape;
    AttachedParams<double> att = attach_params(tape, store);
    return tape.value(build(tape, att)).at(0, 0);
  };

  // coordinate universe: (param index, flat offset) via prefix sums
  std::vector<std::int64_t> prefix(1, 0);
  for (std::int64_t i = 0; i < store.count(); ++i)
    prefix.push_back(prefix.back() + store.at(i).value.size());
  const std::int64_t total = prefix.back();
  check_config(total > 0, "finite_diff_check: empty parameter store");

  std::vector<std::int64_t> coords;
  if (total <= 2 * min_coords) {
    coords.resize(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) coords[static_cast<std::size_t>(i)] = i;
  } else {
    std::set<std::int64_t> picked;
    while (static_cast<std::int64_t>(picked.size()) < min_coords)
      picked.insert(rng.uniform_int(0, total - 1));
    coords.assign(picked.begin(), picked.end());
  }

  bool all_finite = true;
  for (std::int64_t flat : coords) {
    const auto pi = static_cast<std::int64_t>(
        std::upper_bound(prefix.begin(), prefix.end(), flat) - prefix.begin() -
        1);
    const auto off = static_cast<std::size_t>(flat - prefix[static_cast<std::size_t>(pi)]);
    float& slot = store.at(pi).value.data[off];
    const float orig = slot;
    const double x = static_cast<double>(orig);

    // perturbations round to float storage; divide by the realized width
    const float xp = static_cast<float>(x + step);
    const float xm = static_cast<float>(x - step);
    slot = xp;
    const double lp = eval();
    slot = xm;
    const double lm = eval();
    slot = orig;
    if (!std::isfinite(lp) || !std::isfinite(lm)) {
      all_finite = false;
      break;
    }
    const double width = static_cast<double>(xp) - static_cast<double>(xm);
    const double fd = (lp - lm) / width;
    const double a = analytic[static_cast<std::size_t>(pi)].data[off];
    // floor keeps difference noise on near-zero gradients from
    // masquerading as relative error
    const double rel =
        std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 0.1});
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.coords_checked;
  }

  res.ok = all_finite && res.coords_checked >= std::min(min_coords, total) &&
           res.max_rel_error < rel_bound;
  return res;
}

}  // namespace cs::nn
