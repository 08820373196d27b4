#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cofi/hierarchy.hpp"
#include "cofi/image.hpp"
#include "cofi/nn/layers.hpp"

namespace cofi {

enum class Level { kCoarse, kFine };
enum class Modality { kImage, kPoint };

// Feature rows keyed by element id: grid cell ids for images, cloud indices
// for points.
struct FeatureMap {
  std::vector<Index> ids;
  nn::Tensor features;
  Level level = Level::kCoarse;
  Modality modality = Modality::kImage;

  Index size() const { return static_cast<Index>(ids.size()); }
  Index channels() const { return features.cols(); }
  void validate() const;
};

struct BackboneConfig {
  Index coarse_channels = 64;
  Index fine_channels = 32;
  Index image_stage1 = 32;
  Index image_stage2 = 48;
  Index point_local = 64;
  Index hidden = 64;
  bool use_intensity = true;
};

// Strided patch pyramid: a 4x4 window per fine cell, then two 2x2 merges down
// to the coarse grid. The fine decoder sees the stage-1 feature, its coarse
// parent and the cell's position inside that parent.
struct ImageEncoder {
  nn::Mlp stage1, stage2, stage3, decoder;

  static ImageEncoder create(nn::ParameterSet& params, const BackboneConfig& cfg, nn::Rng& rng);
  Index macs(const ImagePyramid& pyramid) const;
};

// Set abstraction over the point-to-node groups. Member encodings use
// coordinates relative to the superpoint, scaled by the group radius.
struct PointEncoder {
  nn::Mlp local, super, fine_local, fine_head;
  nn::Linear fine_from_coarse;
  bool use_intensity = true;

  static PointEncoder create(nn::ParameterSet& params, const BackboneConfig& cfg, nn::Rng& rng);
  Index macs(const PointHierarchy& h) const;
};

// Per fine cell: the 4x4 pixel window around it (edge-replicated), 48 values.
nn::Matrix image_windows(const Image& image, const ImagePyramid& pyramid);

std::pair<FeatureMap, FeatureMap> encode_image(const Image& image, const ImagePyramid& pyramid,
                                               const ImageEncoder& enc);
// Same, reusing precomputed image_windows().
std::pair<FeatureMap, FeatureMap> encode_image_windows(const nn::Matrix& windows,
                                                       const ImagePyramid& pyramid,
                                                       const ImageEncoder& enc);

// Fine rows follow PointHierarchy::grouped_points().
std::pair<FeatureMap, FeatureMap> encode_points(const PointCloud& cloud, const PointHierarchy& h,
                                                const PointEncoder& enc);

// Row of each fine cell's coarse parent and its 4x4 phase one-hot.
std::vector<Index> fine_parents(const ImagePyramid& pyramid);
nn::Matrix fine_phase(const ImagePyramid& pyramid);

}  // namespace cofi
