#include "cofi/metrics.hpp"

#include <cmath>

namespace cofi {

double registration_recall(std::span<const RegistrationResult> results, double rre_thresh,
                           double rte_thresh) {
  if (results.empty()) fail(ErrorKind::kUndefinedMetric, "registration recall of zero frames");
  std::size_t ok = 0;
  for (const auto& r : results) ok += r.succeeded(rre_thresh, rte_thresh) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

double inlier_ratio(const Points3<double>& points,
                    const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>& pixels,
                    const Pose& gt_pose, const CameraIntrinsics& intr, double tau) {
  if (points.rows() == 0) fail(ErrorKind::kUndefinedMetric, "inlier ratio of zero pairs");
  if (pixels.rows() != points.rows()) fail(ErrorKind::kDimension, "inlier ratio: pair count mismatch");
  std::size_t inliers = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Projection pr =
        project(intr, Eigen::Vector3d(gt_pose * Eigen::Vector3d(points.row(i).transpose())));
    if (pr.in_front && std::hypot(pr.u - pixels(i, 0), pr.v - pixels(i, 1)) < tau) ++inliers;
  }
  return static_cast<double>(inliers) / static_cast<double>(points.rows());
}

SummaryStats summarize(std::span<const double> values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  double total = 0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  double sq = 0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

}  // namespace cofi
