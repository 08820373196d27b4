#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "cofi/geometry.hpp"

namespace cofi {

using Pixels2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

// 2D-3D correspondences: row i of `points` (point-cloud frame, meters)
// observed at row i of `pixels` (image pixels).
struct PnPProblem {
  Points3<double> points;
  Pixels2 pixels;

  Eigen::Index size() const { return points.rows(); }
  PnPProblem subset(const std::vector<Eigen::Index>& ids) const;
};

// Closed-form EPnP. Throws kInsufficientData below four pairs and
// kDegenerateConfiguration when the points do not span three dimensions.
Pose epnp(const PnPProblem& problem, const CameraIntrinsics& intr);

// Per-pair reprojection distance in pixels; +inf for points behind the camera.
Eigen::VectorXd reprojection_errors(const PnPProblem& problem, const CameraIntrinsics& intr,
                                    const Pose& pose);

struct RansacConfig {
  int max_iterations = 1000;
  double inlier_threshold = 3.0;  // pixels, inclusive
  int min_sample = 4;
  double confidence = 0.999;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PoseEstimate {
  Pose pose;
  std::vector<Eigen::Index> inlier_ids;
  double mean_reprojection_error = 0;
  int iterations = 0;
};

// RANSAC over minimal EPnP samples, then EPnP refits on the consensus set
// until it stops growing. Iteration i draws its sample from a generator seeded
// by hash(seed, i), so results do not depend on evaluation order.
PoseEstimate ransac_epnp(const PnPProblem& problem, const CameraIntrinsics& intr,
                         const RansacConfig& cfg);

}  // namespace cofi
