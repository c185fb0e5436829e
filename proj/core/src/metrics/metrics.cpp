#include "cscore/metrics/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>

#include "cscore/errors.hpp"
#include "cscore/io_util.hpp"

namespace cs::metrics {
namespace {

Eigen::MatrixXd to_eigen(const TensorD& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::int64_t i = 0; i < t.rows(); ++i)
    for (std::int64_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

TensorF concat_motion(const std::vector<const TensorF*>& parts) {
  std::int64_t rows = 0;
  for (const TensorF* p : parts) rows += p->rows();
  TensorF out(rows, parts.front()->cols());
  std::int64_t r = 0;
  for (const TensorF* p : parts) {
    for (std::int64_t i = 0; i < p->rows(); ++i, ++r)
      for (std::int64_t c = 0; c < p->cols(); ++c)
        out.at(r, c) = p->at(i, c);
  }
  return out;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

GaussianStats fit_gaussian(const TensorF& frames, std::int64_t c0,
                           std::int64_t c1) {
  const std::int64_t d = c1 - c0;
  check_config(c0 >= 0 && d >= 1 && c1 <= frames.cols(),
               "fit_gaussian: bad channel range");
  const std::int64_t n = frames.rows();
  check(n >= d + 1, "fit_gaussian: need at least " + std::to_string(d + 1) +
                        " frames for " + std::to_string(d) +
                        " channels, got " + std::to_string(n));

  GaussianStats g;
  g.mean = TensorD(1, d);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < d; ++c)
      g.mean.at(0, c) += static_cast<double>(frames.at(i, c0 + c));
  for (std::int64_t c = 0; c < d; ++c)
    g.mean.at(0, c) /= static_cast<double>(n);

  g.covariance = TensorD(d, d);
  std::vector<double> cd(static_cast<std::size_t>(d));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t c = 0; c < d; ++c)
      cd[static_cast<std::size_t>(c)] =
          static_cast<double>(frames.at(i, c0 + c)) - g.mean.at(0, c);
    for (std::int64_t a = 0; a < d; ++a)
      for (std::int64_t b = 0; b < d; ++b)
        g.covariance.at(a, b) += cd[static_cast<std::size_t>(a)] *
                                 cd[static_cast<std::size_t>(b)];
  }
  for (double& v : g.covariance.data) v /= static_cast<double>(n);

  double trace = 0.0;
  for (std::int64_t a = 0; a < d; ++a) trace += g.covariance.at(a, a);
  const double eps = 1e-4 * trace / static_cast<double>(d);
  for (std::int64_t a = 0; a < d; ++a) g.covariance.at(a, a) += eps;
  return g;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const std::int64_t d = a.dim();
  check_shape(d == b.dim(), "frechet_distance: dimension mismatch");

  double dmu = 0.0;
  for (std::int64_t c = 0; c < d; ++c) {
    const double m = a.mean.at(0, c) - b.mean.at(0, c);
    dmu += m * m;
  }

  const Eigen::MatrixXd sa = to_eigen(a.covariance);
  const Eigen::MatrixXd sb = to_eigen(b.covariance);
  const Eigen::MatrixXd prod = sa * sb;
  const Eigen::MatrixXd sym = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  check(es.info() == Eigen::Success, "frechet_distance: eigensolver failed");
  double tr_sqrt = 0.0;
  for (std::int64_t i = 0; i < d; ++i)
    tr_sqrt += std::sqrt(std::max(0.0, es.eigenvalues()(i)));

  const double val = dmu + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, val);
}

IdWiseResult id_wise_frechet(const std::vector<TaggedClip>& generated,
                             const std::vector<TaggedClip>& reference,
                             std::int64_t c0, std::int64_t c1) {
  std::map<std::string, std::vector<const TensorF*>> gen, ref;
  for (const TaggedClip& c : generated) gen[c.identity_tag].push_back(&c.motion);
  for (const TaggedClip& c : reference) ref[c.identity_tag].push_back(&c.motion);

  std::string missing;
  for (const auto& [tag, _] : gen)
    if (ref.find(tag) == ref.end()) missing += " " + tag + "(no reference)";
  for (const auto& [tag, _] : ref)
    if (gen.find(tag) == gen.end()) missing += " " + tag + "(no generated)";
  check_config(missing.empty(),
               "id_wise_frechet: identity coverage mismatch:" + missing);
  check_config(!gen.empty(), "id_wise_frechet: no clips");

  IdWiseResult res;
  for (const auto& [tag, parts] : gen) {
    const GaussianStats g = fit_gaussian(concat_motion(parts), c0, c1);
    const GaussianStats r = fit_gaussian(concat_motion(ref.at(tag)), c0, c1);
    res.per_identity.push_back({tag, frechet_distance(g, r)});
  }
  for (const IdentityValue& v : res.per_identity) res.mean += v.value;
  res.mean /= static_cast<double>(res.per_identity.size());
  return res;
}

double sync_proxy(const TensorF& generated_motion, const TensorF& drive,
                  std::int64_t c0, std::int64_t c1) {
  check_shape(generated_motion.rows() == drive.rows(),
              "sync_proxy: length mismatch");
  const std::int64_t d = c1 - c0;
  check_config(c0 >= 0 && d >= 1 && c1 <= generated_motion.cols() &&
                   c1 <= drive.cols(),
               "sync_proxy: bad channel range");
  const std::int64_t n = generated_motion.rows();
  if (n < 2) return 0.0;

  // first principal axis of the generated block
  Eigen::MatrixXd g(n, d);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < d; ++c)
      g(i, c) = static_cast<double>(generated_motion.at(i, c0 + c));
  const Eigen::RowVectorXd gm = g.colwise().mean();
  g.rowwise() -= gm;
  const Eigen::MatrixXd cov = (g.transpose() * g) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  check(es.info() == Eigen::Success, "sync_proxy: eigensolver failed");
  if (!(es.eigenvalues()(d - 1) > 0.0)) return 0.0;  // constant motion
  const Eigen::VectorXd axis = es.eigenvectors().col(d - 1);

  Eigen::MatrixXd dr(n, d);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < d; ++c)
      dr(i, c) = static_cast<double>(drive.at(i, c0 + c));
  dr.rowwise() -= dr.colwise().mean().eval();

  const Eigen::VectorXd sg = g * axis;
  const Eigen::VectorXd sd = dr * axis;
  const double den = std::sqrt(sg.squaredNorm() * sd.squaredNorm());
  if (!(den > 0.0)) return 0.0;
  return sg.dot(sd) / den;
}

std::vector<double> motion_statistics(const TensorF& motion) {
  const std::int64_t n = motion.rows(), d = motion.cols();
  check(n >= 1, "motion_statistics: empty clip");
  std::vector<double> f(static_cast<std::size_t>(2 * d), 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < d; ++c)
      f[static_cast<std::size_t>(c)] += static_cast<double>(motion.at(i, c));
  for (std::int64_t c = 0; c < d; ++c)
    f[static_cast<std::size_t>(c)] /= static_cast<double>(n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < d; ++c) {
      const double v =
          static_cast<double>(motion.at(i, c)) - f[static_cast<std::size_t>(c)];
      f[static_cast<std::size_t>(d + c)] += v * v;
    }
  for (std::int64_t c = 0; c < d; ++c)
    f[static_cast<std::size_t>(d + c)] =
        std::sqrt(f[static_cast<std::size_t>(d + c)] / static_cast<double>(n));
  return f;
}

double sim_proxy(const std::vector<TaggedClip>& generated,
                 const std::vector<TaggedClip>& reference) {
  std::map<std::string, std::pair<std::vector<double>, std::int64_t>> sums;
  for (const TaggedClip& c : reference) {
    const std::vector<double> f = motion_statistics(c.motion);
    auto& [sum, count] = sums[c.identity_tag];
    if (sum.empty()) sum.assign(f.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) sum[i] += f[i];
    ++count;
  }
  check_config(sums.size() >= 2,
               "sim_proxy: need at least two reference identities");
  std::map<std::string, std::vector<double>> centroids;
  for (auto& [tag, sc] : sums) {
    for (double& v : sc.first) v /= static_cast<double>(sc.second);
    centroids[tag] = std::move(sc.first);
  }

  check_config(!generated.empty(), "sim_proxy: no generated clips");
  double total = 0.0;
  for (const TaggedClip& c : generated) {
    const auto own = centroids.find(c.identity_tag);
    check_config(own != centroids.end(),
                 "sim_proxy: no reference centroid for " + c.identity_tag);
    const std::vector<double> f = motion_statistics(c.motion);
    const double d_own = euclidean(f, own->second);
    double d_other = -1.0;
    for (const auto& [tag, cen] : centroids) {
      if (tag == c.identity_tag) continue;
      const double dd = euclidean(f, cen);
      if (d_other < 0.0 || dd < d_other) d_other = dd;
    }
    const double den = d_other + d_own;
    total += den > 0.0 ? (d_other - d_own) / den : 0.0;
  }
  return total / static_cast<double>(generated.size());
}

LatencyStats latency_stats(std::vector<std::int64_t> per_frame_ns) {
  check(!per_frame_ns.empty(), "latency_stats: no samples");
  std::sort(per_frame_ns.begin(), per_frame_ns.end());
  const std::int64_t n = static_cast<std::int64_t>(per_frame_ns.size());
  const auto rank = [&](double q) {
    const std::int64_t r = static_cast<std::int64_t>(
        std::ceil(q * static_cast<double>(n)));
    return per_frame_ns[static_cast<std::size_t>(std::max<std::int64_t>(
        0, std::min(n - 1, r - 1)))];
  };
  LatencyStats s;
  s.p50_ns = rank(0.50);
  s.p95_ns = rank(0.95);
  s.max_ns = per_frame_ns.back();
  return s;
}

void write_report_csv(const std::string& path, const MetricReport& report,
                      const std::string& config_hash) {
  ioutil::FilePtr f = ioutil::open_file(path, "wb");
  std::fprintf(f.get(), "# config_hash=%s\n", config_hash.c_str());
  std::fprintf(f.get(), "metric,identity,value\n");
  const auto put_idwise = [&](const char* name, const IdWiseResult& r) {
    for (const IdentityValue& v : r.per_identity)
      std::fprintf(f.get(), "%s,%s,%.9g\n", name, v.identity_tag.c_str(),
                   v.value);
    std::fprintf(f.get(), "%s,all,%.9g\n", name, r.mean);
  };
  put_idwise("id_fed", report.id_fed);
  put_idwise("id_fpd", report.id_fpd);
  std::fprintf(f.get(), "sync_proxy,all,%.9g\n", report.sync_proxy);
  std::fprintf(f.get(), "sim_proxy,all,%.9g\n", report.sim_proxy);
  std::fprintf(f.get(), "latency_p50_ns,all,%lld\n",
               static_cast<long long>(report.latency.p50_ns));
  std::fprintf(f.get(), "latency_p95_ns,all,%lld\n",
               static_cast<long long>(report.latency.p95_ns));
  std::fprintf(f.get(), "latency_max_ns,all,%lld\n",
               static_cast<long long>(report.latency.max_ns));
  std::fprintf(f.get(), "causality_violations,all,%lld\n",
               static_cast<long long>(report.causality_violations));
}

std::string report_summary(const MetricReport& report) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof(buf), "id_fed mean %.6g over %zu identities\n",
                report.id_fed.mean, report.id_fed.per_identity.size());
  out += buf;
  std::snprintf(buf, sizeof(buf), "id_fpd mean %.6g over %zu identities\n",
                report.id_fpd.mean, report.id_fpd.per_identity.size());
  out += buf;
  std::snprintf(buf, sizeof(buf), "sync_proxy %.4f (correlation)\n",
                report.sync_proxy);
  out += buf;
  std::snprintf(buf, sizeof(buf), "sim_proxy %.4f (centroid margin)\n",
                report.sim_proxy);
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "latency p50 %.3f ms, p95 %.3f ms, max %.3f ms\n",
                1e-6 * static_cast<double>(report.latency.p50_ns),
                1e-6 * static_cast<double>(report.latency.p95_ns),
                1e-6 * static_cast<double>(report.latency.max_ns));
  out += buf;
  std::snprintf(buf, sizeof(buf), "causality violations %lld\n",
                static_cast<long long>(report.causality_violations));
  out += buf;
  return out;
}

}  // namespace cs::metrics
