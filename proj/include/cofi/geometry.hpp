#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "cofi/error.hpp"

namespace cofi {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

template <typename Scalar>
constexpr Scalar deg2rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}
template <typename Scalar>
constexpr Scalar rad2deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

// Rigid transform from the point-cloud frame to the camera frame:
// p_cam = rotation * p + translation.
template <typename Scalar>
struct BasicPose {
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  static BasicPose identity() { return {}; }

  static BasicPose from_matrix(const Eigen::Matrix<Scalar, 3, 4>& m) {
    return {m.template leftCols<3>(), m.col(3)};
  }
  static BasicPose from_matrix(const Matrix4<Scalar>& m) {
    return {m.template topLeftCorner<3, 3>(), m.template topRightCorner<3, 1>()};
  }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  BasicPose inverse() const {
    Matrix3<Scalar> rt = rotation.transpose();
    return {rt, -rt * translation};
  }

  // (this * other)(p) == this(other(p))
  BasicPose operator*(const BasicPose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return rotation * p + translation; }

  bool is_valid(Scalar tol = Scalar(1e-9)) const {
    const Matrix3<Scalar> rtr = rotation.transpose() * rotation;
    return (rtr - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - Scalar(1)) <= tol && translation.allFinite();
  }

  template <typename Other>
  BasicPose<Other> cast() const {
    return {rotation.template cast<Other>(), translation.template cast<Other>()};
  }
};

using Pose = BasicPose<double>;

// Pinhole camera. Pixel (col, row) covers [col, col+1) x [row, row+1).
template <typename Scalar>
struct BasicCameraIntrinsics {
  Scalar fx = 1;
  Scalar fy = 1;
  Scalar cx = 0;
  Scalar cy = 0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) fail(ErrorKind::kConfig, "focal lengths must be positive");
    if (width <= 0 || height <= 0) fail(ErrorKind::kConfig, "image extent must be positive");
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
      fail(ErrorKind::kConfig, "principal point outside the image");
    }
  }

  Matrix3<Scalar> matrix() const {
    Matrix3<Scalar> k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  // Anisotropic resize of the image to new_width x new_height.
  BasicCameraIntrinsics resized(int new_width, int new_height) const {
    const Scalar sx = Scalar(new_width) / Scalar(width);
    const Scalar sy = Scalar(new_height) / Scalar(height);
    return {fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height};
  }
};

using CameraIntrinsics = BasicCameraIntrinsics<double>;

template <typename Scalar>
struct BasicProjection {
  Scalar u = 0;
  Scalar v = 0;
  Scalar depth = 0;
  bool in_front = false;  // false when depth <= 0; u and v are then meaningless
};

using Projection = BasicProjection<double>;

template <typename Scalar>
BasicProjection<Scalar> project(const BasicCameraIntrinsics<Scalar>& intr,
                                const Vector3<Scalar>& p_cam) {
  const Scalar z = p_cam.z();
  if (!(z > 0)) return {0, 0, z, false};
  return {intr.fx * p_cam.x() / z + intr.cx, intr.fy * p_cam.y() / z + intr.cy, z, true};
}

template <typename Scalar>
Vector3<Scalar> unproject(const BasicCameraIntrinsics<Scalar>& intr, Scalar u, Scalar v,
                          Scalar depth) {
  return {(u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth};
}

template <typename Scalar>
bool inside_image(const BasicCameraIntrinsics<Scalar>& intr, const BasicProjection<Scalar>& pr) {
  return pr.in_front && pr.u >= 0 && pr.u < intr.width && pr.v >= 0 && pr.v < intr.height;
}

template <typename Scalar>
bool in_frustum(const BasicCameraIntrinsics<Scalar>& intr, const BasicPose<Scalar>& pose,
                const Vector3<Scalar>& p) {
  return inside_image(intr, project(intr, Vector3<Scalar>(pose * p)));
}

template <typename Scalar>
struct BasicPointCloud {
  Points3<Scalar> points;
  std::optional<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> intensity;

  Eigen::Index size() const { return points.rows(); }
  Vector3<Scalar> point(Eigen::Index i) const { return points.row(i).transpose(); }

  void validate() const {
    if (points.rows() == 0) fail(ErrorKind::kContract, "point cloud is empty");
    if (!points.allFinite()) fail(ErrorKind::kNumeric, "point cloud has non-finite coordinates");
    if (intensity && intensity->size() != points.rows()) {
      fail(ErrorKind::kDimension, "intensity length differs from point count");
    }
  }
};

using PointCloud = BasicPointCloud<double>;

template <typename Scalar>
BasicPointCloud<Scalar> transform_points(const BasicPose<Scalar>& pose,
                                         const BasicPointCloud<Scalar>& cloud) {
  BasicPointCloud<Scalar> out = cloud;
  out.points = (cloud.points * pose.rotation.transpose()).rowwise() + pose.translation.transpose();
  return out;
}

template <typename Scalar>
Matrix3<Scalar> rotation_x(Scalar rad) {
  return Eigen::AngleAxis<Scalar>(rad, Vector3<Scalar>::UnitX()).toRotationMatrix();
}
template <typename Scalar>
Matrix3<Scalar> rotation_y(Scalar rad) {
  return Eigen::AngleAxis<Scalar>(rad, Vector3<Scalar>::UnitY()).toRotationMatrix();
}
template <typename Scalar>
Matrix3<Scalar> rotation_z(Scalar rad) {
  return Eigen::AngleAxis<Scalar>(rad, Vector3<Scalar>::UnitZ()).toRotationMatrix();
}

// XYZ-intrinsic composition R = Rx(a) * Ry(b) * Rz(c), angles in degrees.
template <typename Scalar>
Matrix3<Scalar> rotation_from_euler(const Vector3<Scalar>& deg) {
  return rotation_x(deg2rad(deg.x())) * rotation_y(deg2rad(deg.y())) * rotation_z(deg2rad(deg.z()));
}

// Inverse of rotation_from_euler, in degrees. In gimbal lock (|R(0,2)| == 1,
// b = +-90 deg) the third angle is fixed to 0 and the first absorbs the
// remaining rotation.
template <typename Scalar>
Vector3<Scalar> euler_angles(const Matrix3<Scalar>& r) {
  using std::asin, std::atan2, std::abs;
  const Scalar s = std::clamp(r(0, 2), Scalar(-1), Scalar(1));
  const Scalar b = asin(s);
  Scalar a, c;
  if (abs(s) < Scalar(1) - Scalar(1e-12)) {
    a = atan2(-r(1, 2), r(2, 2));
    c = atan2(-r(0, 1), r(0, 0));
  } else {
    c = 0;
    a = atan2(s * r(1, 0), r(1, 1));
  }
  return {rad2deg(a), rad2deg(b), rad2deg(c)};
}

}  // namespace cofi
