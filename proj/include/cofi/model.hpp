#pragma once

#include <cstdint>
#include <vector>

#include "cofi/data.hpp"
#include "cofi/i2p_transformer.hpp"
#include "cofi/losses.hpp"
#include "cofi/matching.hpp"

namespace cofi {

struct ModelConfig {
  BackboneConfig backbone;
  TransformerConfig transformer;
  int width = 128;
  int height = 64;
  int patch = 8;                // fine cells per side of a superpixel's window
  Index superpoints = 64;
  Index node_points = 8;
  double group_radius = 0.5;    // metres
  double frustum_threshold = 0.5;
  // Superpoints are position-encoded by (azimuth, elevation, log range) in
  // the LiDAR frame, mapped from these fixed bounds (degrees, degrees, log m)
  // to [-1, 1]. With polar_positions off, raw xyz with per-scene min-max.
  bool polar_positions = true;
  Eigen::Vector3d polar_lo{-90.0, -30.0, 0.0};
  Eigen::Vector3d polar_hi{90.0, 30.0, 4.0};
  // Fine descriptors re-read the attended coarse descriptor of their parent.
  bool fuse_fine = true;

  void validate() const;
};

struct Model {
  ModelConfig cfg;
  nn::ParameterSet params;
  ImageEncoder image;
  PointEncoder point;
  TransformerParams transformer;
  FrustumHead frustum;
  nn::Mlp fuse_points, fuse_pixels;

  static Model create(const ModelConfig& cfg, std::uint64_t seed);
  ImagePyramid pyramid() const;
};

// Input-only preprocessing of a scene, reusable across epochs.
struct PreparedScene {
  const ScenePair* scene = nullptr;
  PointHierarchy hierarchy;
  nn::Matrix windows;  // image_windows() of the scene image
  SupervisionBatch truth;
};

PreparedScene prepare_scene(const ScenePair& scene, const ModelConfig& cfg, std::uint64_t seed);

struct ForwardResult {
  FeatureMap coarse_points, coarse_pixels;  // after the attention stack
  FeatureMap fine_points, fine_pixels;
  FrustumScores frustum;
};

ForwardResult forward(const Model& model, const PreparedScene& prep);

// Rows (x, y, z) to (azimuth deg, elevation deg, log range).
nn::Matrix polar_coords(const nn::Matrix& xyz);

// Each column shifted to zero mean and scaled to unit variance over the rows.
nn::Tensor instance_norm(const nn::Tensor& x, double eps = 1e-5);

}  // namespace cofi
