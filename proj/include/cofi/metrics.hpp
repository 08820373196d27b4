#pragma once

#include <span>
#include <string>
#include <vector>

#include "cofi/geometry.hpp"

namespace cofi {

template <typename Scalar>
struct BasicRegistrationError {
  Scalar rre = 0;  // degrees, sum of absolute residual Euler angles
  Scalar rte = 0;  // meters
};

using RegistrationError = BasicRegistrationError<double>;

// Residual rotation R_gt^-1 * R_e decomposed with euler_angles (XYZ intrinsic).
template <typename Scalar>
BasicRegistrationError<Scalar> rre_rte(const BasicPose<Scalar>& gt, const BasicPose<Scalar>& est) {
  const Scalar rte = (gt.translation - est.translation).norm();
  if (gt.rotation == est.rotation) return {Scalar(0), rte};
  const Matrix3<Scalar> residual = gt.rotation.transpose() * est.rotation;
  return {euler_angles(residual).cwiseAbs().sum(), rte};
}

struct RegistrationResult {
  std::string frame;
  double rre = 0;
  double rte = 0;

  // Strict on both thresholds.
  bool succeeded(double rre_thresh, double rte_thresh) const {
    return rre < rre_thresh && rte < rte_thresh;
  }
};

// Fraction of frames whose RRE and RTE are both below the thresholds.
double registration_recall(std::span<const RegistrationResult> results, double rre_thresh,
                           double rte_thresh);

// Fraction of pairs whose ground-truth reprojection lands strictly within
// tau pixels of the matched pixel. Points behind the camera count as outliers.
double inlier_ratio(const Points3<double>& points, const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>& pixels,
                    const Pose& gt_pose, const CameraIntrinsics& intr, double tau);

struct SummaryStats {
  double mean = 0;
  double stddev = 0;  // population
  std::size_t count = 0;
};

SummaryStats summarize(std::span<const double> values);

}  // namespace cofi
