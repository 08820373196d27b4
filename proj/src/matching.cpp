#include "cofi/matching.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <unordered_map>

namespace cofi {

using nn::Matrix;

std::string_view to_string(PairLevel level) {
  switch (level) {
    case PairLevel::kCoarse: return "coarse";
    case PairLevel::kFine: return "fine";
    case PairLevel::kGroundTruth: return "ground_truth";
  }
  return "unknown";
}

FrustumHead FrustumHead::create(nn::ParameterSet& params, Index channels, nn::Rng& rng) {
  return {nn::Linear::create(params, "frustum", channels, 1, rng)};
}

FrustumScores classify_frustum(const FeatureMap& coarse_points, const FrustumHead& head,
                               double threshold) {
  return {nn::sigmoid(head.linear(coarse_points.features)), threshold};
}

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) fail(ErrorKind::kDimension, "cosine similarity of unequal lengths");
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) fail(ErrorKind::kDegenerateFeature, "zero-norm feature row");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Matrix unit_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n == 0 || !std::isfinite(n)) {
      fail(ErrorKind::kDegenerateFeature, "feature row " + std::to_string(i) + " has norm " +
                                              std::to_string(n));
    }
    out.row(i) = m.row(i) / n;
  }
  return out;
}

namespace {

std::unordered_map<Index, Index> row_of(const std::vector<Index>& ids) {
  std::unordered_map<Index, Index> m;
  m.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) m.emplace(ids[i], Index(i));
  return m;
}

// Position of the smallest distance (largest similarity), first on ties.
Index argmax(const Eigen::Ref<const Eigen::VectorXd>& s) {
  Index best = 0;
  for (Index j = 1; j < s.size(); ++j)
    if (s(j) > s(best)) best = j;
  return best;
}

// Order of ids ascending, as positions into ids.
std::vector<Index> sorted_positions(const std::vector<Index>& ids) {
  std::vector<Index> pos(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) pos[i] = Index(i);
  std::sort(pos.begin(), pos.end(), [&](Index a, Index b) { return ids[a] < ids[b]; });
  return pos;
}

}  // namespace

CorrespondenceSet coarse_match(const FeatureMap& points, const FeatureMap& pixels,
                               const FrustumScores& frustum, bool mutual) {
  if (frustum.size() != points.size()) {
    fail(ErrorKind::kDimension, "frustum scores do not match the coarse point map");
  }
  CorrespondenceSet out{PairLevel::kCoarse, {}};
  std::vector<Index> inside;
  for (Index r : sorted_positions(points.ids))
    if (frustum.inside(r)) inside.push_back(r);
  if (inside.empty()) {
    std::cerr << "warning: no superpoint classified inside the frustum\n";
    return out;
  }
  if (pixels.size() == 0) fail(ErrorKind::kContract, "no superpixels to match against");
  // Visit pixels in ascending id so position order is id order.
  const auto pix_order = sorted_positions(pixels.ids);
  Matrix pu = unit_rows(pixels.features.value());
  Matrix sorted_pu(pu.rows(), pu.cols());
  for (std::size_t j = 0; j < pix_order.size(); ++j) sorted_pu.row(Index(j)) = pu.row(pix_order[j]);

  Matrix pp(Index(inside.size()), points.channels());
  const Matrix all_pp = unit_rows(points.features.value());
  for (std::size_t i = 0; i < inside.size(); ++i) pp.row(Index(i)) = all_pp.row(inside[i]);
  const Matrix sim = pp * sorted_pu.transpose();

  std::vector<Index> best_point;
  if (mutual) {
    best_point.resize(std::size_t(sim.cols()));
    for (Index j = 0; j < sim.cols(); ++j) best_point[j] = argmax(sim.col(j));
  }
  for (Index i = 0; i < sim.rows(); ++i) {
    const Index j = argmax(sim.row(i).transpose());
    if (mutual && best_point[j] != i) continue;
    out.pairs.push_back({points.ids[inside[i]], pixels.ids[pix_order[j]], std::clamp(sim(i, j), -1.0, 1.0)});
  }
  return out;
}

CorrespondenceSet fine_match(const CorrespondenceSet& coarse, const FeatureMap& fine_points,
                             const FeatureMap& fine_pixels, const PointHierarchy& h,
                             const ImagePyramid& pyramid, bool mutual) {
  CorrespondenceSet out{PairLevel::kFine, {}};
  const auto point_row = row_of(fine_points.ids);
  const auto pixel_row = row_of(fine_pixels.ids);
  const auto slot_of = row_of(h.superpoints);
  const Matrix pt = unit_rows(fine_points.features.value());
  const Matrix px = unit_rows(fine_pixels.features.value());

  for (const auto& c : coarse.pairs) {
    const auto slot = slot_of.find(c.point);
    if (slot == slot_of.end()) {
      fail(ErrorKind::kContract, "coarse pair references unknown superpoint " + std::to_string(c.point));
    }
    std::vector<Index> patch_rows;
    std::vector<Index> patch_ids;
    for (Index f : pyramid.patch_of(c.pixel)) {
      const auto r = pixel_row.find(f);
      if (r == pixel_row.end()) continue;
      patch_rows.push_back(r->second);
      patch_ids.push_back(f);
    }
    if (patch_rows.empty()) continue;
    const auto& nodes = h.node_points[slot->second];
    Matrix a(Index(nodes.size()), pt.cols());
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const auto r = point_row.find(nodes[n]);
      if (r == point_row.end()) {
        fail(ErrorKind::kContract, "node point " + std::to_string(nodes[n]) + " has no fine feature");
      }
      a.row(Index(n)) = pt.row(r->second);
    }
    Matrix b(Index(patch_rows.size()), px.cols());
    for (std::size_t k = 0; k < patch_rows.size(); ++k) b.row(Index(k)) = px.row(patch_rows[k]);
    const Matrix sim = a * b.transpose();
    for (Index n = 0; n < sim.rows(); ++n) {
      const Index k = argmax(sim.row(n).transpose());
      if (mutual && argmax(sim.col(k)) != n) continue;
      out.pairs.push_back({nodes[n], patch_ids[k], std::clamp(sim(n, k), -1.0, 1.0)});
    }
  }
  return out;
}

CorrespondenceSet fine_match_global(const std::vector<Index>& point_ids,
                                    const FeatureMap& fine_points, const FeatureMap& fine_pixels) {
  CorrespondenceSet out{PairLevel::kFine, {}};
  const auto point_row = row_of(fine_points.ids);
  const auto pix_order = sorted_positions(fine_pixels.ids);
  const Matrix px = unit_rows(fine_pixels.features.value());
  Matrix b(px.rows(), px.cols());
  for (std::size_t j = 0; j < pix_order.size(); ++j) b.row(Index(j)) = px.row(pix_order[j]);
  const Matrix pt = unit_rows(fine_points.features.value());
  for (Index id : point_ids) {
    const auto r = point_row.find(id);
    if (r == point_row.end()) fail(ErrorKind::kContract, "point " + std::to_string(id) + " has no fine feature");
    const Eigen::VectorXd s = b * pt.row(r->second).transpose();
    const Index k = argmax(s);
    out.pairs.push_back({id, fine_pixels.ids[pix_order[k]], std::clamp(s(k), -1.0, 1.0)});
  }
  return out;
}

CorrespondenceSet coarse_to_fine_cells(const CorrespondenceSet& coarse, const ImagePyramid& pyramid) {
  CorrespondenceSet out{PairLevel::kFine, {}};
  for (const auto& c : coarse.pairs) {
    const Eigen::Vector2d center = pyramid.coarse_center(c.pixel);
    out.pairs.push_back({c.point, pyramid.fine_cell_at(center.x(), center.y()), c.score});
  }
  return out;
}

void write_correspondence_csv(std::ostream& out, const std::vector<const CorrespondenceSet*>& sets,
                              const ImagePyramid& pyramid, bool header) {
  if (header) out << "level,point_id,pixel_u,pixel_v,similarity\n";
  for (const auto* set : sets) {
    for (const auto& p : set->pairs) {
      const Eigen::Vector2d uv =
          set->level == PairLevel::kFine ? pyramid.fine_center(p.pixel) : pyramid.coarse_center(p.pixel);
      out << to_string(set->level) << ',' << p.point << ',' << uv.x() << ',' << uv.y() << ',';
      if (!std::isnan(p.score)) out << p.score;
      out << '\n';
    }
  }
}

}  // namespace cofi
