#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cscore/errors.hpp"
#include "cscore/metrics/audit.hpp"
#include "cscore/metrics/metrics.hpp"
#include "cscore/nn/rng.hpp"

using namespace cs;
using namespace cs::metrics;

namespace {

TensorF random_frames(std::int64_t n, std::int64_t d, std::uint64_t seed) {
  rng::Rng rng(seed);
  TensorF out(n, d);
  for (float& v : out.data) v = static_cast<float>(rng.normal());
  return out;
}

GaussianStats gauss1(double mean, double var) {
  GaussianStats g;
  g.mean = TensorD(1, 1);
  g.mean.at(0, 0) = mean;
  g.covariance = TensorD(1, 1);
  g.covariance.at(0, 0) = var;
  return g;
}

// rows are frames: X -> X R for an orthogonal R built from plane rotations
TensorF rotate_frames(const TensorF& x,
                      const std::vector<std::array<double, 3>>& givens) {
  TensorF out = x;
  for (const auto& [ai, bi, theta] : givens) {
    const auto a = static_cast<std::int64_t>(ai);
    const auto b = static_cast<std::int64_t>(bi);
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::int64_t i = 0; i < out.rows(); ++i) {
      const double va = out.at(i, a), vb = out.at(i, b);
      out.at(i, a) = static_cast<float>(c * va - s * vb);
      out.at(i, b) = static_cast<float>(s * va + c * vb);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("gaussian fit on degenerate and tiny inputs") {
  // constant frames: mean is the constant, covariance all zero
  TensorF constant(10, 3);
  for (std::int64_t i = 0; i < 10; ++i)
    for (std::int64_t c = 0; c < 3; ++c) constant.at(i, c) = 2.5f;
  const GaussianStats g = fit_gaussian(constant, 0, 3);
  for (std::int64_t c = 0; c < 3; ++c)
    CHECK(g.mean.at(0, c) == doctest::Approx(2.5).epsilon(1e-12));
  for (const double v : g.covariance.data) CHECK(v == 0.0);

  // two frames -1, +1 in one channel: mean 0, population variance 1 + eps
  TensorF pm(2, 1);
  pm.at(0, 0) = -1.0f;
  pm.at(1, 0) = 1.0f;
  const GaussianStats h = fit_gaussian(pm, 0, 1);
  CHECK(h.mean.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(h.covariance.at(0, 0) == doctest::Approx(1.0 + 1e-4).epsilon(1e-12));

  // fewer than d + 1 frames is rejected
  CHECK_THROWS_AS(fit_gaussian(random_frames(3, 3, 1), 0, 3), Error);
}

TEST_CASE("fitted covariance is symmetric") {
  const GaussianStats g = fit_gaussian(random_frames(64, 5, 7), 0, 5);
  for (std::int64_t a = 0; a < 5; ++a)
    for (std::int64_t b = 0; b < 5; ++b)
      CHECK(std::abs(g.covariance.at(a, b) - g.covariance.at(b, a)) < 1e-8);
}

TEST_CASE("frechet distance closed forms") {
  CHECK(frechet_distance(gauss1(0, 1), gauss1(1, 1)) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(frechet_distance(gauss1(0, 1), gauss1(0, 4)) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(frechet_distance(gauss1(3, 2), gauss1(3, 2)) == 0.0);

  // 2-d diagonal: |dmu|^2 + (1-3)^2 + (2-1)^2 = 1 + 4 + 1
  GaussianStats a, b;
  a.mean = TensorD(1, 2);
  b.mean = TensorD(1, 2);
  b.mean.at(0, 0) = 1.0;
  a.covariance = TensorD(2, 2);
  a.covariance.at(0, 0) = 1.0;
  a.covariance.at(1, 1) = 4.0;
  b.covariance = TensorD(2, 2);
  b.covariance.at(0, 0) = 9.0;
  b.covariance.at(1, 1) = 1.0;
  CHECK(frechet_distance(a, b) == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("self distance vanishes on fitted stats") {
  const GaussianStats g = fit_gaussian(random_frames(200, 8, 11), 0, 8);
  CHECK(frechet_distance(g, g) <= 1e-6);
}

TEST_CASE("frechet distance is invariant under rotation of both sets") {
  const TensorF xa = random_frames(300, 4, 21);
  TensorF xb = random_frames(300, 4, 22);
  for (std::int64_t i = 0; i < xb.rows(); ++i) {
    xb.at(i, 0) += 0.8f;
    xb.at(i, 2) *= 1.5f;
  }
  const double base = frechet_distance(fit_gaussian(xa, 0, 4),
                                       fit_gaussian(xb, 0, 4));
  const std::vector<std::array<double, 3>> rot = {
      {0, 1, 0.7}, {1, 2, -0.4}, {2, 3, 1.1}, {0, 3, 0.3}};
  const double rotated = frechet_distance(
      fit_gaussian(rotate_frames(xa, rot), 0, 4),
      fit_gaussian(rotate_frames(xb, rot), 0, 4));
  CHECK(std::abs(base - rotated) < 1e-5);
  CHECK(base > 0.5);  // the offset and scale must actually register
}

TEST_CASE("identity-wise distance") {
  std::vector<TaggedClip> ref;
  ref.push_back({"a", random_frames(150, 6, 31)});
  ref.push_back({"b", random_frames(150, 6, 32)});

  SUBCASE("identical sets give zero") {
    const IdWiseResult r = id_wise_frechet(ref, ref, 0, 6);
    REQUIRE(r.per_identity.size() == 2);
    double sum = 0.0;
    for (const IdentityValue& v : r.per_identity) {
      CHECK(v.value <= 1e-6);
      sum += v.value;
    }
    CHECK(r.mean == doctest::Approx(sum / 2.0).epsilon(1e-12));
  }

  SUBCASE("constant offset shows up as squared mean shift") {
    std::vector<TaggedClip> gen;
    TensorF shifted = ref[0].motion;
    for (float& v : shifted.data) v += 1.0f;
    gen.push_back({"a", shifted});
    std::vector<TaggedClip> ref_a = {ref[0]};
    const IdWiseResult r = id_wise_frechet(gen, ref_a, 0, 6);
    // same covariance, mean moved by 1 in all 6 channels
    CHECK(r.mean == doctest::Approx(6.0).epsilon(1e-5));
  }

  SUBCASE("uncovered identity is rejected") {
    std::vector<TaggedClip> gen = {{"a", random_frames(150, 6, 33)}};
    CHECK_THROWS_AS(id_wise_frechet(gen, ref, 0, 6), ConfigError);
    std::vector<TaggedClip> gen2 = {{"c", random_frames(150, 6, 34)}};
    std::vector<TaggedClip> ref_a = {ref[0]};
    CHECK_THROWS_AS(id_wise_frechet(gen2, ref_a, 0, 6), ConfigError);
  }
}

TEST_CASE("sync proxy") {
  const TensorF motion = random_frames(200, 4, 41);

  SUBCASE("perfectly synced drive scores one") {
    CHECK(sync_proxy(motion, motion, 0, 4) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("noisy copy stays high, shuffled copy falls off") {
    rng::Rng rng(42);
    TensorF noisy = motion;
    for (float& v : noisy.data) v += static_cast<float>(0.1 * rng.normal());
    CHECK(sync_proxy(motion, noisy, 0, 4) > 0.9);

    TensorF shuffled = motion;
    for (std::int64_t i = shuffled.rows() - 1; i > 0; --i) {
      const std::int64_t j = rng.uniform_int(0, i);
      for (std::int64_t c = 0; c < 4; ++c)
        std::swap(shuffled.at(i, c), shuffled.at(j, c));
    }
    CHECK(std::abs(sync_proxy(motion, shuffled, 0, 4)) < 0.3);
  }

  SUBCASE("degenerate inputs return zero") {
    TensorF constant(50, 4);
    CHECK(sync_proxy(constant, motion, 0, 4) == 0.0);
    CHECK(sync_proxy(TensorF(1, 4), TensorF(1, 4), 0, 4) == 0.0);
  }
}

TEST_CASE("motion statistics are channel means then stds") {
  TensorF clip(2, 2);
  clip.at(0, 0) = 0.0f;
  clip.at(1, 0) = 2.0f;
  clip.at(0, 1) = 5.0f;
  clip.at(1, 1) = 5.0f;
  const std::vector<double> f = motion_statistics(clip);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == doctest::Approx(1.0));
  CHECK(f[1] == doctest::Approx(5.0));
  CHECK(f[2] == doctest::Approx(1.0));  // population std
  CHECK(f[3] == doctest::Approx(0.0));
}

TEST_CASE("similarity margin on separable identities") {
  // identity a: silent channel; identity b: unit-variance channel
  TensorF za(40, 1);
  TensorF zb(40, 1);
  for (std::int64_t i = 0; i < 40; ++i) zb.at(i, 0) = (i % 2) ? 1.0f : -1.0f;
  std::vector<TaggedClip> ref = {{"a", za}, {"b", zb}};

  std::vector<TaggedClip> gen = {{"a", za}, {"b", zb}};
  CHECK(sim_proxy(gen, ref) == doctest::Approx(1.0).epsilon(1e-12));

  // swapping the tags flips the sign
  std::vector<TaggedClip> swapped = {{"b", za}, {"a", zb}};
  CHECK(sim_proxy(swapped, ref) == doctest::Approx(-1.0).epsilon(1e-12));

  std::vector<TaggedClip> one_id = {{"a", za}};
  CHECK_THROWS_AS(sim_proxy(gen, one_id), ConfigError);
}

TEST_CASE("latency percentiles use nearest rank") {
  std::vector<std::int64_t> ns;
  for (std::int64_t i = 100; i >= 1; --i) ns.push_back(i);
  const LatencyStats s = latency_stats(std::move(ns));
  CHECK(s.p50_ns == 50);
  CHECK(s.p95_ns == 95);
  CHECK(s.max_ns == 100);

  const LatencyStats one = latency_stats({7});
  CHECK(one.p50_ns == 7);
  CHECK(one.p95_ns == 7);
  CHECK(one.max_ns == 7);
}

TEST_CASE("causality audit accepts causal maps and flags leaks") {
  const TensorF input = random_frames(40, 3, 51);

  SUBCASE("running prefix sum is clean") {
    const PrefixRunner causal = [](const TensorF& in) {
      TensorF out(in.rows(), in.cols());
      for (std::int64_t c = 0; c < in.cols(); ++c) {
        float acc = 0.0f;
        for (std::int64_t i = 0; i < in.rows(); ++i) {
          acc += in.at(i, c);
          out.at(i, c) = acc;
        }
      }
      return out;
    };
    const AuditResult r = causality_audit(causal, input, 50, 9);
    CHECK(r.trials == 50);
    CHECK(r.violations == 0);
  }

  SUBCASE("one-frame peek is flagged, then exempted by the lookahead allowance") {
    const PrefixRunner peek = [](const TensorF& in) {
      TensorF out(in.rows(), in.cols());
      for (std::int64_t i = 0; i < in.rows(); ++i) {
        const std::int64_t j = std::min(i + 1, in.rows() - 1);
        for (std::int64_t c = 0; c < in.cols(); ++c)
          out.at(i, c) = in.at(i, c) + in.at(j, c);
      }
      return out;
    };
    const AuditResult flagged = causality_audit(peek, input, 50, 9);
    CHECK(flagged.violations >= 1);
    const AuditResult allowed = causality_audit(peek, input, 50, 9, 1);
    CHECK(allowed.violations == 0);
  }

  SUBCASE("nondeterministic runner invalidates the audit") {
    int calls = 0;
    const PrefixRunner jitter = [&calls](const TensorF& in) {
      TensorF out = in;
      out.at(0, 0) += 0.001f * static_cast<float>(calls++);
      return out;
    };
    CHECK_THROWS_AS(causality_audit(jitter, input, 10, 9), StateError);
  }
}

TEST_CASE("report csv carries per-identity rows and the config hash") {
  MetricReport rep;
  rep.id_fed.per_identity = {{"a", 1.5}, {"b", 2.5}};
  rep.id_fed.mean = 2.0;
  rep.id_fpd.per_identity = {{"a", 0.5}, {"b", 1.0}};
  rep.id_fpd.mean = 0.75;
  rep.sync_proxy = 0.9;
  rep.sim_proxy = 0.4;
  rep.latency = {1000, 2000, 3000};
  rep.causality_violations = 0;

  const std::string path = "report_test.csv";
  write_report_csv(path, rep, "deadbeef");
  std::FILE* f = std::fopen(path.c_str(), "rb");
  REQUIRE(f != nullptr);
  std::string text(1 << 12, '\0');
  text.resize(std::fread(text.data(), 1, text.size(), f));
  std::fclose(f);
  std::remove(path.c_str());

  CHECK(text.find("# config_hash=deadbeef") != std::string::npos);
  CHECK(text.find("metric,identity,value") != std::string::npos);
  CHECK(text.find("id_fed,a,1.5") != std::string::npos);
  CHECK(text.find("id_fed,all,2") != std::string::npos);
  CHECK(text.find("latency_p95_ns,all,2000") != std::string::npos);

  const std::string summary = report_summary(rep);
  CHECK(summary.find("id_fed") != std::string::npos);
  CHECK(summary.find("p95") != std::string::npos);
}
