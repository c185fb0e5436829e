#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>
#include <vector>

#include "cscore/nn/rng.hpp"
#include "cscore/sched/schedule.hpp"

using namespace cs::sched;

TEST_CASE("floor mapping basics") {
  // r = T: identity
  for (std::int64_t t = 0; t < 10; ++t) CHECK(source_index(t, 10, 10) == t);
  // r = 1: everything reads row 0
  for (std::int64_t t = 0; t < 10; ++t) CHECK(source_index(t, 1, 10) == 0);
  // r=5, T=25: row floor(t/5); changing row 4 affects only t >= 20
  for (std::int64_t t = 0; t < 25; ++t)
    CHECK(source_index(t, 5, 25) == t / 5);
  CHECK(span_start(4, 5, 25) == 20);

  // span_start is the smallest t mapping to the row, span_end exclusive
  for (std::int64_t r : {1, 3, 7, 25, 100})
    for (std::int64_t j = 0; j < r; ++j) {
      const std::int64_t s = span_start(j, r, 100);
      CHECK(source_index(s, r, 100) == j);
      if (s > 0) CHECK(source_index(s - 1, r, 100) == j - 1);
      const std::int64_t e = span_end(j, r, 100);
      CHECK((e == 100 || source_index(e, r, 100) == j + 1));
    }
}

TEST_CASE("reference schedule 176 tokens") {
  const auto sched = build_schedule(100, {1, 25, 50, 100});
  CHECK(sched.total_tokens() == 176);

  // permutation: every (level, index) appears exactly once
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (const TokenAddress& a : sched.order()) {
    CHECK(seen.insert({a.level, a.index}).second);
    CHECK(a.span_start <= a.span_end);
  }
  CHECK(seen.size() == 176);

  // every token due exactly at its span start
  for (std::int64_t t = 0; t < 100; ++t)
    for (const TokenAddress& a : sched.tokens_due(t))
      CHECK(a.span_start == t);

  // frame 0 emits one token per level, frame 1 only the finest
  CHECK(sched.tokens_due(0).size() == 4);
  const auto due1 = sched.tokens_due(1);
  REQUIRE(due1.size() == 1);
  CHECK(due1[0].level == 4);
  CHECK(due1[0].index == 1);
}

TEST_CASE("T=4 r=[1,2,4] enumerated order") {
  const auto sched = build_schedule(4, {1, 2, 4});
  CHECK(sched.total_tokens() == 7);
  const std::vector<std::pair<std::int64_t, std::int64_t>> want = {
      {1, 0}, {2, 0}, {3, 0}, {3, 1}, {2, 1}, {3, 2}, {3, 3}};
  REQUIRE(sched.order().size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(sched.at(static_cast<std::int64_t>(i)).level == want[i].first);
    CHECK(sched.at(static_cast<std::int64_t>(i)).index == want[i].second);
  }
}

TEST_CASE("single level r=[T] is frame order") {
  const auto sched = build_schedule(8, {8});
  CHECK(sched.total_tokens() == 8);
  for (std::int64_t i = 0; i < 8; ++i) {
    CHECK(sched.at(i).level == 1);
    CHECK(sched.at(i).index == i);
    CHECK(sched.at(i).span_start == i);
  }
}

TEST_CASE("decodable_frames over the reference schedule") {
  const auto sched = build_schedule(100, {1, 25, 50, 100});
  auto emitted = EmittedSet::empty_for({1, 25, 50, 100});
  CHECK(decodable_frames(emitted, sched) == 0);
  for (std::int64_t t = 0; t < 100; ++t) {
    for (const TokenAddress& a : sched.tokens_due(t)) emitted.mark(a);
    CHECK(decodable_frames(emitted, sched) == t + 1);
  }
}

TEST_CASE("mid-frame prefixes decode to the frame boundary") {
  const auto sched = build_schedule(100, {1, 25, 50, 100});
  auto emitted = EmittedSet::empty_for({1, 25, 50, 100});
  // frame 0's slice is 4 tokens; after 2 of them nothing is decodable
  const auto due0 = sched.tokens_due(0);
  emitted.mark(due0[0]);
  emitted.mark(due0[1]);
  CHECK(decodable_frames(emitted, sched) == 0);
  emitted.mark(due0[2]);
  emitted.mark(due0[3]);
  CHECK(decodable_frames(emitted, sched) == 1);
}

TEST_CASE("non-prefix emitted set is a state error") {
  const auto sched = build_schedule(100, {1, 25, 50, 100});
  auto emitted = EmittedSet::empty_for({1, 25, 50, 100});
  emitted.mark(sched.at(5));  // skipped the first five
  CHECK_THROWS_AS(decodable_frames(emitted, sched), cs::StateError);
}

TEST_CASE("random configs keep the schedule invariants") {
  cs::rng::Rng rng(20240817);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t T = rng.uniform_int(3, 60);
    const std::int64_t levels = rng.uniform_int(1, 4);
    std::vector<std::int64_t> res;
    for (std::int64_t l = 0; l < levels; ++l)
      res.push_back(rng.uniform_int(1, T));
    std::sort(res.begin(), res.end());

    const auto sched = build_schedule(T, res);
    std::int64_t want_total = 0;
    for (std::int64_t r : res) want_total += r;
    REQUIRE(sched.total_tokens() == want_total);

    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    for (const TokenAddress& a : sched.order()) {
      CHECK(seen.insert({a.level, a.index}).second);
      const std::int64_t r = res[static_cast<std::size_t>(a.level - 1)];
      CHECK(a.span_start == span_start(a.index, r, T));
      CHECK(a.span_end == span_end(a.index, r, T));
    }

    auto emitted = EmittedSet::empty_for(res);
    for (std::int64_t t = 0; t < T; ++t) {
      for (const TokenAddress& a : sched.tokens_due(t)) {
        CHECK(a.span_start == t);
        emitted.mark(a);
      }
      CHECK(decodable_frames(emitted, sched) == t + 1);
    }
  }
}
