#pragma once

#include <cstdint>
#include <functional>

#include "cscore/nn/tensor.hpp"

namespace cs::metrics {

// A causal system under audit, reduced to one shape: feed a prefix of the
// input timeline, get back the rows it emits. Used with three adapters:
// the streaming generator (audio rows in, motion frames out), the codec
// decoder (schedule-ordered token rows in, decodable frames out), and the
// retriever (aligned history rows in, the concatenation of every per-step
// prior out).
using PrefixRunner = std::function<TensorF(const TensorF& input_prefix)>;

struct AuditResult {
  std::int64_t trials = 0;
  std::int64_t violations = 0;
};

// For each trial: pick a random cut t in [1, rows], run the full input and
// the prefix [0, t), and require the common emitted rows to match bit for
// bit. lookahead_rows output rows before the cut are exempt (they were
// computed with audio the truncated run never saw). Runs the full input
// twice first; any difference means the runner is not deterministic and
// the audit is invalid (StateError).
AuditResult causality_audit(const PrefixRunner& runner, const TensorF& input,
                            std::int64_t trials, std::uint64_t seed,
                            std::int64_t lookahead_rows = 0);

}  // namespace cs::metrics
