#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cofi/geometry.hpp"
#include "cofi/image.hpp"

namespace cofi {

using Index = Eigen::Index;

struct ScenePair {
  Image image;
  PointCloud cloud;
  Pose gt_pose;  // LiDAR frame -> camera frame
  CameraIntrinsics intrinsics;
  std::string id;

  // Fraction of cloud points inside the camera frustum under gt_pose.
  double overlap() const;
  // Throws kInsufficientData when overlap() < 5%.
  void validate() const;
};

// ---- KITTI odometry ---------------------------------------------------------

// Raw float32 (x, y, z, reflectance) records, 16 bytes each, no header.
PointCloud read_velodyne(const std::filesystem::path& path);
void write_velodyne(const std::filesystem::path& path, const PointCloud& cloud);

struct KittiCalib {
  Eigen::Matrix<double, 3, 4> p2;
  Eigen::Matrix<double, 3, 4> tr;  // velodyne -> cam0

  // Intrinsics of P2 and the cam0 -> cam2 offset t = K^-1 P2[:,3].
  CameraIntrinsics intrinsics(int width, int height) const;
  Pose cam0_to_cam2() const;
};

KittiCalib parse_calib(std::istream& in);
KittiCalib read_calib(const std::filesystem::path& path);
std::vector<Pose> parse_poses(std::istream& in);
std::vector<Pose> read_poses(const std::filesystem::path& path);

struct KittiFrameSpec {
  std::filesystem::path velodyne;
  std::filesystem::path calib;
  std::filesystem::path poses;
  std::filesystem::path image;  // empty: image left blank
  std::size_t frame = 0;
  std::optional<std::size_t> camera_frame;  // defaults to `frame`
  Index n_points = 20480;
  int width = 512;
  int height = 160;
  std::uint64_t seed = 0;
};

// gt_pose = cam0->cam2 * inv(pose[camera_frame]) * pose[frame] * Tr.
ScenePair load_kitti_frame(const KittiFrameSpec& spec);

// Sequences 0-8 train, 9-10 test.
std::string kitti_split(int sequence);
std::vector<int> kitti_sequences(const std::string& split);

// Uniform subsample without replacement; returns the cloud unchanged when it
// already has at most n points.
PointCloud subsample(const PointCloud& cloud, Index n, std::uint64_t seed);

// ---- images -----------------------------------------------------------------

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
Image resize_bilinear(const Image& image, int width, int height);

// ---- synthetic scenes ---------------------------------------------------------

struct SyntheticSceneConfig {
  Index n_points = 2048;
  int n_primitives = 24;
  double jitter_rotation_deg = 5.0;
  double jitter_translation_m = 0.5;
  int width = 128;
  int height = 64;
  double focal = 64.0;
  double min_range = 5.0;   // primitive placement ring, metres
  double max_range = 20.0;
  double lidar_fov_deg = 360.0;  // horizontal scan sector centred on the forward axis
  int max_retries = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

// Box primitives (yawed about z) standing on a ground plane. Primitive 0 is
// the ground; the rest are boxes.
struct SyntheticWorld {
  struct Box {
    Eigen::Vector3d center;
    Eigen::Vector3d half;  // half extents along the box axes
    double yaw = 0;
  };
  struct Material {
    Eigen::Vector3d base;
    Eigen::Vector2d frequency;  // cycles per metre along the two surface axes
    Eigen::Vector2d phase;
  };
  double ground_z = -1.73;
  double ground_radius = 40.0;
  std::vector<Box> boxes;
  std::vector<Material> materials;  // ground first, then one per box

  struct Hit {
    double t = 0;
    int primitive = -1;  // -1: nothing hit
    Eigen::Vector3d albedo = Eigen::Vector3d::Zero();
  };
  // Nearest intersection with t > 1e-9 along origin + t * dir.
  Hit trace(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  Eigen::Vector3d albedo(int primitive, const Eigen::Vector3d& p) const;
};

SyntheticWorld make_world(const SyntheticSceneConfig& cfg, std::uint64_t seed);
// Per-pixel ray cast through pixel centres; `ids` receives the primitive hit
// per pixel (-1 for sky) when given.
Image render(const SyntheticWorld& world, const Pose& pose, const CameraIntrinsics& intr,
             std::vector<int>* ids = nullptr);
// 64-beam scan from the LiDAR origin over a horizontal sector of fov_deg
// centred on +x, at 0.2 degree azimuth steps; intensity = albedo luminance.
PointCloud scan(const SyntheticWorld& world, double fov_deg = 360.0, double step_deg = 0.2);

// Canonical LiDAR -> camera pose (x forward, y left, z up -> z forward,
// x right, y down), camera 0.1 m above the LiDAR origin.
Pose canonical_camera_pose();

// Boxes on a ground plane, scanned by a simulated 64-beam LiDAR and rendered
// with per-pixel nearest-hit ray casting. Point intensity is the luminance of
// the surface albedo.
ScenePair generate_synthetic(const SyntheticSceneConfig& cfg);

// Dump: <stem>.tensors (image, points, intensity, pose, intrinsics) and a
// <stem>.manifest.txt with id, seed and configuration.
void write_scene_dump(const std::filesystem::path& stem, const ScenePair& scene,
                      const std::string& manifest);
ScenePair read_scene_dump(const std::filesystem::path& stem);

}  // namespace cofi
