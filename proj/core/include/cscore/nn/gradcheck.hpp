#pragma once

#include <cstdint>
#include <functional>

#include "cscore/nn/params.hpp"
#include "cscore/nn/rng.hpp"

namespace cs::nn {

// Builds a fresh tape around the current store values and returns the loss
// node. The same functor is used for the analytic pass and for every
// perturbed forward evaluation.
using LossBuilder =
    std::function<TapeD::Id(TapeD&, const AttachedParams<double>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::int64_t coords_checked = 0;
  bool ok = false;  // loss finite everywhere and max_rel_error below bound
};

// Central differences on a random subset of at least min_coords parameter
// coordinates (all of them when the store is smaller). Runs in 64-bit so
// the difference quotient has headroom below the 1e-3 acceptance bound.
GradCheckResult finite_diff_check(const LossBuilder& build,
                                  ParameterStore& store, double step,
                                  cs::rng::Rng& rng,
                                  std::int64_t min_coords = 32,
                                  double rel_bound = 1e-3);

}  // namespace cs::nn
