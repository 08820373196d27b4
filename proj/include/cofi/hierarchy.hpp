#pragma once

#include <cstdint>
#include <vector>

#include "cofi/geometry.hpp"

namespace cofi {

using Index = Eigen::Index;

// Two-level pixel grid: fine cells at 1/2 and coarse cells (superpixels) at
// 1/8 of the image resolution. Cell ids are row-major. Each superpixel owns a
// patch x patch window on the fine grid, centred on the cell and clamped
// inside the fine grid.
struct ImagePyramid {
  int width = 0;   // image pixels
  int height = 0;
  int patch = 8;   // fine-grid pixels

  int fine_cols() const { return width / 2; }
  int fine_rows() const { return height / 2; }
  int coarse_cols() const { return width / 8; }
  int coarse_rows() const { return height / 8; }
  Index fine_count() const { return Index(fine_cols()) * fine_rows(); }
  Index coarse_count() const { return Index(coarse_cols()) * coarse_rows(); }

  // Centre of a cell in image pixel coordinates.
  Eigen::Vector2d fine_center(Index id) const;
  Eigen::Vector2d coarse_center(Index id) const;
  // Cell containing an image-plane location, or -1 outside the image.
  Index fine_cell_at(double u, double v) const;
  Index coarse_cell_at(double u, double v) const;
  // Coarse cell covering a fine cell (exact x4 scaling).
  Index coarse_of_fine(Index fine_id) const;
  // Fine cells in the superpixel's window, row-major.
  std::vector<Index> patch_of(Index coarse_id) const;
  // Integer grid coordinates (col, row).
  Eigen::Vector2i fine_grid(Index id) const { return {int(id % fine_cols()), int(id / fine_cols())}; }
  Eigen::Vector2i coarse_grid(Index id) const {
    return {int(id % coarse_cols()), int(id / coarse_cols())};
  }
};

// Throws kConfig unless width and height are positive multiples of 8.
ImagePyramid build_image_pyramid(int width, int height, int patch);

struct PointHierarchy {
  std::vector<Index> fine_points;               // cloud indices, 1/2 subsample
  std::vector<Index> superpoints;               // cloud indices, farthest-point sampled
  std::vector<std::vector<Index>> groups;       // cloud indices per superpoint
  std::vector<std::vector<Index>> node_points;  // subset of each group
  double group_radius = 0;

  Index size() const { return static_cast<Index>(superpoints.size()); }
  // Groups concatenated in superpoint order; the fine-level point ids.
  std::vector<Index> grouped_points() const;
  // Superpoint slot of each entry of grouped_points().
  std::vector<Index> group_slots() const;
};

// Farthest-point sampling over `candidates` (cloud indices). Starts at
// candidates[start] and breaks distance ties towards the lower position.
std::vector<Index> farthest_point_sample(const Points3<double>& points,
                                         const std::vector<Index>& candidates, Index count,
                                         Index start = 0);

// Subsamples the cloud to ceil(N/2) fine points, farthest-point samples
// n_super superpoints from them and assigns each fine point to its nearest
// superpoint within r_g (ties to the lower superpoint slot). Superpoints whose
// group ends up empty are dropped.
PointHierarchy build_point_hierarchy(const PointCloud& cloud, Index n_super, double r_g,
                                     std::uint64_t seed);

// Picks k node points per group. Small groups get the exact max-min-distance
// subset; larger ones fall back to farthest-point sampling.
PointHierarchy select_node_points(PointHierarchy h, const PointCloud& cloud, Index k,
                                  std::uint64_t seed);

}  // namespace cofi
