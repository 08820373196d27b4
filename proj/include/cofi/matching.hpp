#pragma once

#include <iosfwd>
#include <vector>

#include "cofi/backbone.hpp"

namespace cofi {

enum class PairLevel { kCoarse, kFine, kGroundTruth };
std::string_view to_string(PairLevel level);

struct Correspondence {
  Index point;   // cloud index
  Index pixel;   // cell id at the set's level
  double score;  // cosine similarity, NaN when not computed
};

struct CorrespondenceSet {
  PairLevel level = PairLevel::kCoarse;
  std::vector<Correspondence> pairs;

  Index size() const { return static_cast<Index>(pairs.size()); }
  bool empty() const { return pairs.empty(); }
};

struct FrustumHead {
  nn::Linear linear;
  static FrustumHead create(nn::ParameterSet& params, Index channels, nn::Rng& rng);
};

struct FrustumScores {
  nn::Tensor scores;  // [n x 1] probabilities, row order of the coarse point map
  double threshold = 0.5;

  Index size() const { return scores.rows(); }
  bool inside(Index row) const { return scores(row, 0) >= threshold; }
};

FrustumScores classify_frustum(const FeatureMap& coarse_points, const FrustumHead& head,
                               double threshold = 0.5);

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);
inline double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                              const Eigen::Ref<const Eigen::VectorXd>& b) {
  return 1.0 - cosine_similarity(a, b);
}
// Rows scaled to unit length; a zero row is a degenerate feature.
nn::Matrix unit_rows(const nn::Matrix& m);

// Every in-frustum superpoint paired with its nearest superpixel under cosine
// distance, lowest id on ties. Sorted by point id. With `mutual`, a pair is
// kept only if the superpoint is also the superpixel's nearest in-frustum
// superpoint.
CorrespondenceSet coarse_match(const FeatureMap& points, const FeatureMap& pixels,
                               const FrustumScores& frustum, bool mutual = false);

// For each coarse pair, every node point of the superpoint's group paired with
// its nearest fine pixel inside the superpixel's patch.
CorrespondenceSet fine_match(const CorrespondenceSet& coarse, const FeatureMap& fine_points,
                             const FeatureMap& fine_pixels, const PointHierarchy& h,
                             const ImagePyramid& pyramid, bool mutual = false);

// Unconstrained variant: each listed point against every fine pixel.
CorrespondenceSet fine_match_global(const std::vector<Index>& point_ids,
                                    const FeatureMap& fine_points, const FeatureMap& fine_pixels);

// Coarse pairs expressed at fine resolution: the fine cell at the centre of
// each superpixel.
CorrespondenceSet coarse_to_fine_cells(const CorrespondenceSet& coarse, const ImagePyramid& pyramid);

// Header plus one row per pair: level,point_id,pixel_u,pixel_v,similarity.
// Pixel coordinates are cell centres in image pixels; fine sets use fine
// cells, the others superpixels.
void write_correspondence_csv(std::ostream& out, const std::vector<const CorrespondenceSet*>& sets,
                              const ImagePyramid& pyramid, bool header = true);

}  // namespace cofi
