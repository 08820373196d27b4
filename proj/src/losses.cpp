#include "cofi/losses.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace cofi {

using nn::Matrix;
using nn::Tensor;

std::string_view to_string(FineLossForm form) {
  switch (form) {
    case FineLossForm::kSimilarity: return "similarity";
    case FineLossForm::kPrintedSimilarity: return "printed_similarity";
    case FineLossForm::kDistance: return "distance";
  }
  return "unknown";
}

FineLossForm parse_fine_loss_form(std::string_view s) {
  for (auto f : {FineLossForm::kSimilarity, FineLossForm::kPrintedSimilarity, FineLossForm::kDistance})
    if (s == to_string(f)) return f;
  fail(ErrorKind::kConfig, "unknown fine loss form '" + std::string(s) + "'");
}

void LossConfig::validate() const {
  if (!(0 < delta_pos && delta_pos < delta_neg)) fail(ErrorKind::kConfig, "need 0 < delta_pos < delta_neg");
  if (!(gamma > 0)) fail(ErrorKind::kConfig, "gamma must be positive");
  if (!(safe_radius >= 0 && fine_safe_radius >= 0)) fail(ErrorKind::kConfig, "safe radius must be >= 0");
  if (lambda_coarse < 0 || lambda_fine < 0 || lambda_classify < 0) {
    fail(ErrorKind::kConfig, "loss weights must be >= 0");
  }
  if (n_fine_samples < 1) fail(ErrorKind::kConfig, "n_fine_samples must be >= 1");
}

SupervisionBatch make_ground_truth(const Pose& pose, const CameraIntrinsics& intr,
                                   const PointHierarchy& h, const PointCloud& cloud,
                                   const ImagePyramid& pyramid) {
  SupervisionBatch b;
  b.labels.assign(h.superpoints.size(), 0.0);
  for (std::size_t s = 0; s < h.superpoints.size(); ++s) {
    const Projection pr = project(intr, Eigen::Vector3d(pose * cloud.point(h.superpoints[s])));
    if (!inside_image(intr, pr)) continue;
    b.labels[s] = 1.0;
    const Index cell = pyramid.coarse_cell_at(pr.u, pr.v);
    b.gt_coarse.pairs.push_back({h.superpoints[s], cell, std::numeric_limits<double>::quiet_NaN()});
    b.gt_slots.push_back(Index(s));
    const auto patch = pyramid.patch_of(cell);
    for (Index n : h.node_points[s]) {
      const Projection pn = project(intr, Eigen::Vector3d(pose * cloud.point(n)));
      if (!inside_image(intr, pn)) continue;
      const Index f = pyramid.fine_cell_at(pn.u, pn.v);
      if (std::find(patch.begin(), patch.end(), f) == patch.end()) continue;
      b.fine_positives.push_back({n, Index(s), cell, f});
    }
  }
  if (b.gt_coarse.empty()) std::cerr << "warning: no superpoint projects into the image\n";
  return b;
}

Index mine_negative(const Eigen::Ref<const Eigen::VectorXd>& anchor, const Matrix& candidates,
                    const std::vector<Eigen::Vector2i>& grid, const Eigen::Vector2i& pos, double r) {
  if (Index(grid.size()) != candidates.rows()) {
    fail(ErrorKind::kDimension, "grid positions do not match candidate rows");
  }
  const double na = anchor.norm();
  if (na == 0) fail(ErrorKind::kDegenerateFeature, "zero-norm anchor feature");
  Index best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < candidates.rows(); ++j) {
    if ((grid[j] - pos).cast<double>().norm() <= r) continue;
    const double nc = candidates.row(j).norm();
    if (nc == 0) fail(ErrorKind::kDegenerateFeature, "zero-norm candidate feature " + std::to_string(j));
    const double d = 1.0 - candidates.row(j).dot(anchor) / (na * nc);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (best < 0) fail(ErrorKind::kNoNegative, "every candidate lies within the safe radius");
  return best;
}

Index mine_negative(const Eigen::Ref<const Eigen::VectorXd>& anchor, const FeatureMap& pixels,
                    const ImagePyramid& pyramid, Index pos_id, double r) {
  std::vector<Eigen::Vector2i> grid;
  grid.reserve(pixels.ids.size());
  const bool coarse = pixels.level == Level::kCoarse;
  for (Index id : pixels.ids) grid.push_back(coarse ? pyramid.coarse_grid(id) : pyramid.fine_grid(id));
  const Eigen::Vector2i pos = coarse ? pyramid.coarse_grid(pos_id) : pyramid.fine_grid(pos_id);
  return mine_negative(anchor, pixels.features.value(), grid, pos, r);
}

std::pair<Tensor, Tensor> triplet_distances(const std::vector<Triplet>& triplets,
                                            const Tensor& point_feats, const Tensor& pixel_feats) {
  std::vector<Index> p, pos, neg;
  for (const auto& t : triplets) {
    p.push_back(t.point);
    pos.push_back(t.pos);
    neg.push_back(t.neg);
  }
  const Tensor a = nn::normalize_rows(nn::gather_rows(point_feats, p));
  const Tensor sp = nn::row_dot(a, nn::normalize_rows(nn::gather_rows(pixel_feats, pos)));
  const Tensor sn = nn::row_dot(a, nn::normalize_rows(nn::gather_rows(pixel_feats, neg)));
  return {nn::add_scalar(-sp, 1.0), nn::add_scalar(-sn, 1.0)};
}

Tensor coarse_loss(const std::vector<Triplet>& triplets, const Tensor& point_feats,
                   const Tensor& pixel_feats, const LossConfig& cfg) {
  if (triplets.empty()) return Tensor::scalar(0.0);
  const auto [dp, dn] = triplet_distances(triplets, point_feats, pixel_feats);
  return nn::add(nn::sum(nn::relu(nn::add_scalar(dp, -cfg.delta_pos))),
                 nn::sum(nn::relu(nn::add_scalar(-dn, cfg.delta_neg))));
}

namespace {

Tensor constant_like(const Tensor& t, const std::function<double(double)>& f) {
  return Tensor(t.value().unaryExpr(f));
}

}  // namespace

Tensor fine_loss_from_similarity(const Tensor& s_pos, const Tensor& s_neg, const LossConfig& cfg) {
  const double g = cfg.gamma, dp = cfg.delta_pos, dn = cfg.delta_neg;
  Tensor z;
  if (cfg.fine_form == FineLossForm::kDistance) {
    const Tensor d_pos = nn::add_scalar(-s_pos, 1.0);
    const Tensor d_neg = nn::add_scalar(-s_neg, 1.0);
    const Tensor a_pos = constant_like(d_pos, [&](double d) { return std::max(0.0, d - dp); });
    const Tensor a_neg = constant_like(d_neg, [&](double d) { return std::max(0.0, dn - d); });
    z = nn::add(nn::mul(a_pos, nn::add_scalar(d_pos, -dp)),
                nn::mul(a_neg, nn::add_scalar(-d_neg, dn)));
  } else {
    const Tensor a_pos = constant_like(s_pos, [&](double s) { return std::max(0.0, 1.0 + dp - s); });
    const Tensor a_neg = constant_like(s_neg, [&](double s) { return std::max(0.0, s + dn); });
    const Tensor& s_in_neg = cfg.fine_form == FineLossForm::kPrintedSimilarity ? s_pos : s_neg;
    z = nn::add(nn::mul(-a_pos, nn::add_scalar(s_pos, -dp)),
                nn::mul(a_neg, nn::add_scalar(s_in_neg, -dn)));
  }
  return nn::softplus(nn::scale(z, g));
}

Tensor fine_loss(const std::vector<Triplet>& triplets, const Tensor& point_feats,
                 const Tensor& pixel_feats, const LossConfig& cfg) {
  if (triplets.empty()) return Tensor::scalar(0.0);
  const auto [dp, dn] = triplet_distances(triplets, point_feats, pixel_feats);
  return nn::mean(
      fine_loss_from_similarity(nn::add_scalar(-dp, 1.0), nn::add_scalar(-dn, 1.0), cfg));
}

Tensor frustum_loss(const Tensor& scores, const std::vector<double>& labels, double eps) {
  if (scores.cols() != 1 || scores.rows() != Index(labels.size())) {
    fail(ErrorKind::kDimension, "frustum scores " + shape_string(scores) + " vs " +
                                    std::to_string(labels.size()) + " labels");
  }
  Matrix y(scores.rows(), 1), ny(scores.rows(), 1);
  for (Index i = 0; i < scores.rows(); ++i) {
    y(i, 0) = labels[i];
    ny(i, 0) = 1.0 - labels[i];
  }
  const Tensor s = nn::clamp(scores, eps, 1.0 - eps);
  const Tensor ll = nn::add(nn::mul(Tensor(y), nn::log(s)),
                            nn::mul(Tensor(ny), nn::log(nn::add_scalar(-s, 1.0))));
  return -nn::sum(ll);
}

Tensor joint_loss(const Tensor& l_coarse, const Tensor& l_fine, const Tensor& l_classify,
                  const LossConfig& cfg) {
  return nn::add(nn::add(nn::scale(l_coarse, cfg.lambda_coarse), nn::scale(l_fine, cfg.lambda_fine)),
                 nn::scale(l_classify, cfg.lambda_classify));
}

}  // namespace cofi
