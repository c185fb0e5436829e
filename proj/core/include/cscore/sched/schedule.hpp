#pragma once

#include <cstdint>
#include <vector>

#include "cscore/errors.hpp"

namespace cs::sched {

// Floor mapping between frames and code rows at one temporal resolution.
// The upsampler, the scheduler, and the decoder all call these three
// functions; keeping a single definition is what guarantees they agree on
// which code row covers which frame. r is the row count at the level, T
// the window length, both with 1 <= r <= T.

// code row feeding frame t
inline std::int64_t source_index(std::int64_t t, std::int64_t r,
                                 std::int64_t T) {
  return t * r / T;
}

// first frame covered by row j (smallest t with source_index(t) == j)
inline std::int64_t span_start(std::int64_t j, std::int64_t r,
                               std::int64_t T) {
  return (j * T + r - 1) / r;
}

// exclusive end of row j's coverage
inline std::int64_t span_end(std::int64_t j, std::int64_t r, std::int64_t T) {
  return span_start(j + 1, r, T);
}

// level is 1-based (level 1 = coarsest), matching the dump format;
// index is the row within the level.
struct TokenAddress {
  std::int64_t level = 0;
  std::int64_t index = 0;
  std::int64_t span_start = 0;
  std::int64_t span_end = 0;

  bool operator==(const TokenAddress&) const = default;
};

// Interleaved coarse-to-fine emission order: walking frames 0..T-1 and
// levels coarse to fine, a token is appended the first time a frame lands
// in its span. The result is a permutation of all sum(r_l) addresses in
// which every token becomes due exactly at its span_start, so after frame
// t's slice every code row covering frames <= t has been emitted.
class EmissionSchedule {
 public:
  std::int64_t window_len() const { return T_; }
  const std::vector<std::int64_t>& resolutions() const { return res_; }
  std::int64_t total_tokens() const {
    return static_cast<std::int64_t>(order_.size());
  }
  const std::vector<TokenAddress>& order() const { return order_; }
  const TokenAddress& at(std::int64_t i) const {
    return order_[static_cast<std::size_t>(i)];
  }
  // frame t's slice as [begin, end) positions into order()
  std::pair<std::int64_t, std::int64_t> slice(std::int64_t t) const;
  std::vector<TokenAddress> tokens_due(std::int64_t t) const;

  friend EmissionSchedule build_schedule(std::int64_t T,
                                         const std::vector<std::int64_t>& res);

 private:
  std::int64_t T_ = 0;
  std::vector<std::int64_t> res_;
  std::vector<TokenAddress> order_;
  std::vector<std::int64_t> frame_offset_;  // size T+1
};

EmissionSchedule build_schedule(std::int64_t T,
                                const std::vector<std::int64_t>& resolutions);

// Emission bookkeeping for one window: rows[l][j] set once level l+1's
// row j has been emitted.
struct EmittedSet {
  std::vector<std::vector<std::uint8_t>> rows;

  static EmittedSet empty_for(const std::vector<std::int64_t>& resolutions);
  void mark(const TokenAddress& a);
  bool has(std::int64_t level, std::int64_t index) const;
};

// Largest t such that every code row covering frames < t is present.
// The set must equal some prefix of the schedule's order (mid-frame
// prefixes included); anything else is a StateError.
std::int64_t decodable_frames(const EmittedSet& emitted,
                              const EmissionSchedule& schedule);

}  // namespace cs::sched
