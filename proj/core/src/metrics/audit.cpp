#include "cscore/metrics/audit.hpp"

#include <algorithm>
#include <cstring>

#include "cscore/errors.hpp"
#include "cscore/nn/rng.hpp"

namespace cs::metrics {
namespace {

TensorF head_rows(const TensorF& x, std::int64_t rows) {
  TensorF out(rows, x.cols());
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t c = 0; c < x.cols(); ++c) out.at(i, c) = x.at(i, c);
  return out;
}

// bit equality of the first `rows` rows of two outputs
bool rows_match(const TensorF& a, const TensorF& b, std::int64_t rows) {
  if (rows == 0) return true;
  return std::memcmp(a.data.data(), b.data.data(),
                     static_cast<std::size_t>(rows * a.cols()) *
                         sizeof(float)) == 0;
}

}  // namespace

AuditResult causality_audit(const PrefixRunner& runner, const TensorF& input,
                            std::int64_t trials, std::uint64_t seed,
                            std::int64_t lookahead_rows) {
  check_config(trials >= 1, "causality_audit: trials >= 1");
  check_config(input.rows() >= 1, "causality_audit: empty input");
  check_config(lookahead_rows >= 0, "causality_audit: lookahead >= 0");

  const TensorF full = runner(input);
  const TensorF again = runner(input);
  check_state(full.same_shape(again) &&
                  rows_match(full, again, full.rows()),
              "causality audit invalid: runner is not deterministic");

  rng::Rng rng(rng::derive_seed(seed, 0x61756474));
  AuditResult res;
  res.trials = trials;
  for (std::int64_t trial = 0; trial < trials; ++trial) {
    const std::int64_t t = rng.uniform_int(1, input.rows());
    const TensorF out = runner(head_rows(input, t));
    check_shape(out.cols() == full.cols(),
                "causality_audit: output width changed across runs");
    const std::int64_t cmp = std::max<std::int64_t>(
        0, std::min(full.rows(), out.rows()) - lookahead_rows);
    if (!rows_match(full, out, cmp)) ++res.violations;
  }
  return res;
}

}  // namespace cs::metrics
