#include "cofi/hierarchy.hpp"

#include <algorithm>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

namespace cofi {

Eigen::Vector2d ImagePyramid::fine_center(Index id) const {
  const Eigen::Vector2i g = fine_grid(id);
  return {2.0 * g.x() + 1.0, 2.0 * g.y() + 1.0};
}

Eigen::Vector2d ImagePyramid::coarse_center(Index id) const {
  const Eigen::Vector2i g = coarse_grid(id);
  return {8.0 * g.x() + 4.0, 8.0 * g.y() + 4.0};
}

Index ImagePyramid::fine_cell_at(double u, double v) const {
  if (!(u >= 0 && u < width && v >= 0 && v < height)) return -1;
  const int c = std::min(static_cast<int>(u / 2.0), fine_cols() - 1);
  const int r = std::min(static_cast<int>(v / 2.0), fine_rows() - 1);
  return Index(r) * fine_cols() + c;
}

Index ImagePyramid::coarse_cell_at(double u, double v) const {
  if (!(u >= 0 && u < width && v >= 0 && v < height)) return -1;
  const int c = std::min(static_cast<int>(u / 8.0), coarse_cols() - 1);
  const int r = std::min(static_cast<int>(v / 8.0), coarse_rows() - 1);
  return Index(r) * coarse_cols() + c;
}

Index ImagePyramid::coarse_of_fine(Index fine_id) const {
  const Eigen::Vector2i g = fine_grid(fine_id);
  return Index(g.y() / 4) * coarse_cols() + g.x() / 4;
}

std::vector<Index> ImagePyramid::patch_of(Index coarse_id) const {
  const Eigen::Vector2i g = coarse_grid(coarse_id);
  const int wx = std::min(patch, fine_cols());
  const int wy = std::min(patch, fine_rows());
  const int x0 = std::clamp(4 * g.x() + 2 - patch / 2, 0, fine_cols() - wx);
  const int y0 = std::clamp(4 * g.y() + 2 - patch / 2, 0, fine_rows() - wy);
  std::vector<Index> ids;
  ids.reserve(static_cast<std::size_t>(wx * wy));
  for (int r = y0; r < y0 + wy; ++r) {
    for (int c = x0; c < x0 + wx; ++c) ids.push_back(Index(r) * fine_cols() + c);
  }
  return ids;
}

ImagePyramid build_image_pyramid(int width, int height, int patch) {
  if (width <= 0 || height <= 0 || width % 8 != 0 || height % 8 != 0) {
    fail(ErrorKind::kConfig, "image size " + std::to_string(width) + "x" + std::to_string(height) +
                                 " is not a positive multiple of 8");
  }
  if (patch < 1) fail(ErrorKind::kConfig, "patch size must be >= 1");
  return {width, height, patch};
}

std::vector<Index> PointHierarchy::grouped_points() const {
  std::vector<Index> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

std::vector<Index> PointHierarchy::group_slots() const {
  std::vector<Index> out;
  for (std::size_t s = 0; s < groups.size(); ++s) out.insert(out.end(), groups[s].size(), Index(s));
  return out;
}

std::vector<Index> farthest_point_sample(const Points3<double>& points,
                                         const std::vector<Index>& candidates, Index count,
                                         Index start) {
  const Index n = static_cast<Index>(candidates.size());
  count = std::min(count, n);
  std::vector<Index> picked;
  if (count <= 0) return picked;
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Index current = start;
  for (Index k = 0; k < count; ++k) {
    picked.push_back(candidates[current]);
    const auto p = points.row(candidates[current]);
    Index next = -1;
    double best = -1;
    for (Index i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], (points.row(candidates[i]) - p).squaredNorm());
      if (dist[i] > best) {
        best = dist[i];
        next = i;
      }
    }
    current = next;
  }
  return picked;
}

PointHierarchy build_point_hierarchy(const PointCloud& cloud, Index n_super, double r_g,
                                     std::uint64_t seed) {
  cloud.validate();
  if (!(r_g > 0)) fail(ErrorKind::kConfig, "group radius must be positive");
  const Index n = cloud.size();
  const Index n_fine = (n + 1) / 2;
  if (n_super < 1 || n_super > n_fine) {
    fail(ErrorKind::kConfig, "superpoint count " + std::to_string(n_super) + " outside [1, " +
                                 std::to_string(n_fine) + "]");
  }
  std::mt19937_64 rng(seed);
  PointHierarchy h;
  h.group_radius = r_g;

  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index(0));
  std::shuffle(all.begin(), all.end(), rng);
  h.fine_points.assign(all.begin(), all.begin() + n_fine);
  std::sort(h.fine_points.begin(), h.fine_points.end());

  std::uniform_int_distribution<Index> pick(0, n_fine - 1);
  std::vector<Index> supers = farthest_point_sample(cloud.points, h.fine_points, n_super, pick(rng));

  // Point-to-node grouping: nearest superpoint strictly inside r_g.
  std::vector<std::vector<Index>> groups(supers.size());
  const double r2 = r_g * r_g;
  for (Index f : h.fine_points) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < supers.size(); ++s) {
      const double d = (cloud.points.row(f) - cloud.points.row(supers[s])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<Index>(s);
      }
    }
    if (best >= 0 && best_d < r2) groups[static_cast<std::size_t>(best)].push_back(f);
  }
  for (std::size_t s = 0; s < supers.size(); ++s) {
    if (groups[s].empty()) {
      std::cerr << "warning: dropping superpoint " << supers[s] << " with an empty group\n";
      continue;
    }
    h.superpoints.push_back(supers[s]);
    h.groups.push_back(std::move(groups[s]));
  }
  h.node_points = h.groups;
  return h;
}

namespace {

double min_pairwise(const Points3<double>& pts, const std::vector<Index>& ids) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      best = std::min(best, (pts.row(ids[i]) - pts.row(ids[j])).squaredNorm());
    }
  }
  return best;
}

double binomial(Index n, Index k) {
  double c = 1;
  for (Index i = 1; i <= k; ++i) c = c * double(n - k + i) / double(i);
  return c;
}

constexpr double kExhaustiveLimit = 4096;

// Lexicographically first subset of size k with the largest minimum
// pairwise distance.
std::vector<Index> exhaustive_max_min(const Points3<double>& pts, const std::vector<Index>& group,
                                      Index k) {
  const Index n = static_cast<Index>(group.size());
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::vector<Index> best;
  double best_score = -1;
  std::vector<Index> subset(static_cast<std::size_t>(k));
  while (true) {
    for (Index i = 0; i < k; ++i) subset[i] = group[idx[i]];
    const double score = min_pairwise(pts, subset);
    if (score > best_score) {
      best_score = score;
      best = subset;
    }
    Index i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (Index j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

}  // namespace

PointHierarchy select_node_points(PointHierarchy h, const PointCloud& cloud, Index k,
                                  std::uint64_t seed) {
  if (k < 1) fail(ErrorKind::kConfig, "node points per group must be >= 1");
  std::mt19937_64 rng(seed);
  h.node_points.clear();
  for (const auto& g : h.groups) {
    const Index n = static_cast<Index>(g.size());
    if (n <= k) {
      h.node_points.push_back(g);
    } else if (binomial(n, k) <= kExhaustiveLimit) {
      h.node_points.push_back(exhaustive_max_min(cloud.points, g, k));
    } else {
      std::uniform_int_distribution<Index> pick(0, n - 1);
      h.node_points.push_back(farthest_point_sample(cloud.points, g, k, pick(rng)));
    }
  }
  return h;
}

}  // namespace cofi
