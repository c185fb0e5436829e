#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscore/nn/tensor.hpp"

namespace cs::metrics {

// expression/pose channel split of the 137-d motion rows
inline constexpr std::int64_t kExpressionLo = 0;
inline constexpr std::int64_t kExpressionHi = 128;
inline constexpr std::int64_t kPoseLo = 128;
inline constexpr std::int64_t kPoseHi = 137;

struct GaussianStats {
  TensorD mean;        // 1 x d
  TensorD covariance;  // d x d, symmetric, shrinkage-regularized

  std::int64_t dim() const { return mean.cols(); }
};

// Sample mean and population covariance of frames over channels [c0, c1),
// with eps = 1e-4 * trace/d added to the diagonal. Requires at least d+1
// frames.
GaussianStats fit_gaussian(const TensorF& frames, std::int64_t c0,
                           std::int64_t c1);

// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}); the square root comes
// from the eigendecomposition of the symmetrized product with negative
// eigenvalues clamped to zero. Never returns a negative value.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct TaggedClip {
  std::string identity_tag;
  TensorF motion;  // n x 137
};

struct IdentityValue {
  std::string identity_tag;
  double value = 0.0;
};

struct IdWiseResult {
  std::vector<IdentityValue> per_identity;  // identity-sorted
  double mean = 0.0;
};

// Pool frames per identity on both sides, fit Gaussians over [c0, c1),
// report per-identity Frechet distances plus their unweighted mean.
// An identity present on only one side is a hard error naming it.
IdWiseResult id_wise_frechet(const std::vector<TaggedClip>& generated,
                             const std::vector<TaggedClip>& reference,
                             std::int64_t c0, std::int64_t c1);

// Pearson correlation between the first-principal-axis projection of the
// generated motion over channels [c0, c1) and the ground-truth drive
// projected onto the same axis, lag 0. Zero-variance inputs give 0.
double sync_proxy(const TensorF& generated_motion, const TensorF& drive,
                  std::int64_t c0, std::int64_t c1);

// Nearest-centroid margin in per-clip motion-statistics space: reference
// clips define one centroid per identity; each generated clip scores
// (d_other - d_own) / (d_other + d_own). Returns the mean margin, positive
// when generated clips sit closest to their own identity.
double sim_proxy(const std::vector<TaggedClip>& generated,
                 const std::vector<TaggedClip>& reference);

// per-clip feature the margin works in: channel means then channel stds
std::vector<double> motion_statistics(const TensorF& motion);

struct LatencyStats {
  std::int64_t p50_ns = 0;
  std::int64_t p95_ns = 0;
  std::int64_t max_ns = 0;
};

// nearest-rank percentiles over per-frame compute times
LatencyStats latency_stats(std::vector<std::int64_t> per_frame_ns);

struct MetricReport {
  IdWiseResult id_fed;
  IdWiseResult id_fpd;
  double sync_proxy = 0.0;
  double sim_proxy = 0.0;
  LatencyStats latency;
  std::int64_t causality_violations = 0;
};

// CSV rows of (metric, identity, value); summary rows use identity "all".
// config_hash lands in a leading comment line.
void write_report_csv(const std::string& path, const MetricReport& report,
                      const std::string& config_hash);

std::string report_summary(const MetricReport& report);

}  // namespace cs::metrics
