#include "cscore/sched/schedule.hpp"

#include <algorithm>

namespace cs::sched {

std::pair<std::int64_t, std::int64_t> EmissionSchedule::slice(
    std::int64_t t) const {
  check_index(t >= 0 && t < T_, "schedule slice: frame out of range");
  return {frame_offset_[static_cast<std::size_t>(t)],
          frame_offset_[static_cast<std::size_t>(t + 1)]};
}

std::vector<TokenAddress> EmissionSchedule::tokens_due(std::int64_t t) const {
  const auto [b, e] = slice(t);
  return {order_.begin() + b, order_.begin() + e};
}

EmissionSchedule build_schedule(std::int64_t T,
                                const std::vector<std::int64_t>& resolutions) {
  check_config(T >= 1, "schedule: window length >= 1");
  check_config(!resolutions.empty(), "schedule: at least one level");
  for (std::size_t l = 0; l + 1 < resolutions.size(); ++l)
    check_config(resolutions[l] <= resolutions[l + 1],
                 "schedule: resolutions must be non-decreasing");
  for (std::int64_t r : resolutions) {
    check_config(r >= 1, "schedule: resolution >= 1");
    check_config(r <= T, "schedule: resolution exceeds window length");
  }

  EmissionSchedule s;
  s.T_ = T;
  s.res_ = resolutions;
  const auto L = static_cast<std::int64_t>(resolutions.size());
  std::vector<std::int64_t> next_index(static_cast<std::size_t>(L), 0);
  s.frame_offset_.assign(static_cast<std::size_t>(T + 1), 0);
  for (std::int64_t t = 0; t < T; ++t) {
    s.frame_offset_[static_cast<std::size_t>(t)] =
        static_cast<std::int64_t>(s.order_.size());
    for (std::int64_t l = 0; l < L; ++l) {
      const std::int64_t r = resolutions[static_cast<std::size_t>(l)];
      const std::int64_t j = source_index(t, r, T);
      if (j == next_index[static_cast<std::size_t>(l)]) {
        s.order_.push_back(
            {l + 1, j, span_start(j, r, T), span_end(j, r, T)});
        ++next_index[static_cast<std::size_t>(l)];
      }
    }
  }
  s.frame_offset_[static_cast<std::size_t>(T)] =
      static_cast<std::int64_t>(s.order_.size());
  return s;
}

EmittedSet EmittedSet::empty_for(const std::vector<std::int64_t>& resolutions) {
  EmittedSet e;
  e.rows.reserve(resolutions.size());
  for (std::int64_t r : resolutions)
    e.rows.emplace_back(static_cast<std::size_t>(r), std::uint8_t{0});
  return e;
}

void EmittedSet::mark(const TokenAddress& a) {
  check_index(a.level >= 1 &&
                  a.level <= static_cast<std::int64_t>(rows.size()),
              "emitted set: level out of range");
  auto& lv = rows[static_cast<std::size_t>(a.level - 1)];
  check_index(a.index >= 0 &&
                  a.index < static_cast<std::int64_t>(lv.size()),
              "emitted set: index out of range");
  lv[static_cast<std::size_t>(a.index)] = 1;
}

bool EmittedSet::has(std::int64_t level, std::int64_t index) const {
  return rows[static_cast<std::size_t>(level - 1)]
             [static_cast<std::size_t>(index)] != 0;
}

std::int64_t decodable_frames(const EmittedSet& emitted,
                              const EmissionSchedule& schedule) {
  check_state(emitted.rows.size() == schedule.resolutions().size(),
              "decodable_frames: level count mismatch");
  // the emitted set must be a prefix of the emission order
  std::int64_t emitted_count = 0;
  for (const auto& lv : emitted.rows)
    emitted_count += static_cast<std::int64_t>(
        std::count(lv.begin(), lv.end(), std::uint8_t{1}));
  for (std::int64_t i = 0; i < schedule.total_tokens(); ++i) {
    const TokenAddress& a = schedule.at(i);
    const bool present = emitted.has(a.level, a.index);
    check_state(present == (i < emitted_count),
                "decodable_frames: emitted set is not a schedule prefix");
  }

  const std::int64_t T = schedule.window_len();
  const auto& res = schedule.resolutions();
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::size_t l = 0; l < res.size(); ++l) {
      const std::int64_t j = source_index(t, res[l], T);
      if (!emitted.has(static_cast<std::int64_t>(l) + 1, j)) return t;
    }
  }
  return T;
}

}  // namespace cs::sched
