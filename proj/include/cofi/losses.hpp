#pragma once

#include <vector>

#include "cofi/matching.hpp"

namespace cofi {

enum class FineLossForm {
  kSimilarity,         // circle loss on s(p, i_neg) with the similarity margins
  kPrintedSimilarity,  // negative exponent uses s(p, i_pos)
  kDistance,           // circle loss on cosine distance, margins read as distances
};
std::string_view to_string(FineLossForm form);
FineLossForm parse_fine_loss_form(std::string_view s);

struct LossConfig {
  double delta_pos = 0.2;
  double delta_neg = 1.8;
  double gamma = 10.0;
  double safe_radius = 1.0;       // coarse grid cells
  double fine_safe_radius = 1.0;  // fine grid cells
  double lambda_coarse = 1.0;
  double lambda_fine = 1.0;
  double lambda_classify = 1.0;
  Index n_fine_samples = 64;
  FineLossForm fine_form = FineLossForm::kDistance;

  void validate() const;
};

// Row indices into a point feature matrix and a pixel feature matrix.
struct Triplet {
  Index point;
  Index pos;
  Index neg;
};

// A node point whose projection lands inside its superpoint's patch.
struct FinePositive {
  Index point;         // cloud index
  Index slot;          // superpoint slot in the hierarchy
  Index coarse_pixel;  // superpixel the superpoint projects into
  Index fine_pixel;    // fine cell the node point projects into
};

struct SupervisionBatch {
  CorrespondenceSet gt_coarse{PairLevel::kGroundTruth, {}};  // superpoint id -> superpixel
  std::vector<double> labels;                                // per superpoint slot
  std::vector<Index> gt_slots;                               // slot of each gt_coarse pair
  std::vector<FinePositive> fine_positives;
  std::vector<Triplet> fine_triplets;                        // filled by the training step

  bool empty() const { return gt_coarse.empty(); }
};

SupervisionBatch make_ground_truth(const Pose& pose, const CameraIntrinsics& intr,
                                   const PointHierarchy& h, const PointCloud& cloud,
                                   const ImagePyramid& pyramid);

// Hardest negative: the candidate closest to the anchor in cosine distance
// among those more than r grid cells (Euclidean) from the positive cell.
// Lowest position wins ties. Throws kNoNegative when nothing qualifies.
Index mine_negative(const Eigen::Ref<const Eigen::VectorXd>& anchor, const nn::Matrix& candidates,
                    const std::vector<Eigen::Vector2i>& grid, const Eigen::Vector2i& pos, double r);
// Over a whole coarse pixel map; returns the negative's row.
Index mine_negative(const Eigen::Ref<const Eigen::VectorXd>& anchor, const FeatureMap& pixels,
                    const ImagePyramid& pyramid, Index pos_id, double r);

// Cosine distances of the triplets' positive and negative pairs, [n x 1] each.
std::pair<nn::Tensor, nn::Tensor> triplet_distances(const std::vector<Triplet>& triplets,
                                                    const nn::Tensor& point_feats,
                                                    const nn::Tensor& pixel_feats);

nn::Tensor coarse_loss(const std::vector<Triplet>& triplets, const nn::Tensor& point_feats,
                       const nn::Tensor& pixel_feats, const LossConfig& cfg);
// Mean over triplets of the per-anchor circle loss.
nn::Tensor fine_loss(const std::vector<Triplet>& triplets, const nn::Tensor& point_feats,
                     const nn::Tensor& pixel_feats, const LossConfig& cfg);
// Per-anchor circle loss from the similarities directly, for scalar checks.
nn::Tensor fine_loss_from_similarity(const nn::Tensor& s_pos, const nn::Tensor& s_neg,
                                     const LossConfig& cfg);
nn::Tensor frustum_loss(const nn::Tensor& scores, const std::vector<double>& labels,
                        double eps = 1e-7);
nn::Tensor joint_loss(const nn::Tensor& l_coarse, const nn::Tensor& l_fine,
                      const nn::Tensor& l_classify, const LossConfig& cfg);

}  // namespace cofi
