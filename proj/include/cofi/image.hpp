#pragma once

#include <Eigen/Core>

#include "cofi/error.hpp"

namespace cofi {

// RGB image with channels in [0,1]. Pixel (u, v) lives in row v * width + u.
struct Image {
  int width = 0;
  int height = 0;
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> rgb;

  static Image filled(int width, int height, const Eigen::Vector3d& color) {
    Image im{width, height, {}};
    im.rgb.resize(Eigen::Index(width) * height, 3);
    im.rgb.rowwise() = color.transpose();
    return im;
  }
  Eigen::Index index(int u, int v) const { return Eigen::Index(v) * width + u; }
  auto pixel(int u, int v) { return rgb.row(index(u, v)); }
  auto pixel(int u, int v) const { return rgb.row(index(u, v)); }
  void validate() const {
    if (width <= 0 || height <= 0 || rgb.rows() != Eigen::Index(width) * height) {
      fail(ErrorKind::kDimension, "image buffer does not match " + std::to_string(width) + "x" +
                                      std::to_string(height));
    }
  }
};

}  // namespace cofi
