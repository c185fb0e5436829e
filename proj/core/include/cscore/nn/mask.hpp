#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cscore/errors.hpp"

namespace cs::nn {

// Attention visibility pattern. "causal" admits keys with
// k <= q + query_offset, which covers both full-sequence training
// (offset 0) and incremental decoding where the query block starts
// mid-sequence (offset = number of cached keys before the block).
struct AttentionMask {
  enum class Kind { none, causal, custom };

  Kind kind = Kind::none;
  std::int64_t query_offset = 0;
  std::int64_t nq = 0, nk = 0;  // custom only
  std::shared_ptr<const std::vector<std::uint8_t>> allow;

  static AttentionMask dense() { return {}; }

  static AttentionMask causal(std::int64_t query_offset = 0) {
    AttentionMask m;
    m.kind = Kind::causal;
    m.query_offset = query_offset;
    return m;
  }

  static AttentionMask custom(std::int64_t nq, std::int64_t nk,
                              std::vector<std::uint8_t> allow) {
    check_shape(static_cast<std::int64_t>(allow.size()) == nq * nk,
                "custom mask size mismatch");
    AttentionMask m;
    m.kind = Kind::custom;
    m.nq = nq;
    m.nk = nk;
    m.allow =
        std::make_shared<const std::vector<std::uint8_t>>(std::move(allow));
    return m;
  }

  bool allows(std::int64_t q, std::int64_t k) const {
    switch (kind) {
      case Kind::none:
        return true;
      case Kind::causal:
        return k <= q + query_offset;
      case Kind::custom:
        return (*allow)[static_cast<std::size_t>(q * nk + k)] != 0;
    }
    return true;
  }
};

}  // namespace cs::nn
