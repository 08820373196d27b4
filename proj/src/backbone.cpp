#include "cofi/backbone.hpp"

#include <algorithm>

namespace cofi {

using nn::Matrix;
using nn::Tensor;

void FeatureMap::validate() const {
  if (!features.defined() || features.rows() != size()) {
    fail(ErrorKind::kDimension, "feature map has " + std::to_string(size()) + " ids but " +
                                    (features.defined() ? std::to_string(features.rows()) : "no") +
                                    " rows");
  }
  if (!features.value().allFinite()) fail(ErrorKind::kNumeric, "non-finite feature values");
}

ImageEncoder ImageEncoder::create(nn::ParameterSet& params, const BackboneConfig& cfg,
                                  nn::Rng& rng) {
  ImageEncoder e;
  e.stage1 = nn::Mlp::create(params, "image.stage1", {48, cfg.hidden, cfg.image_stage1}, rng);
  e.stage2 = nn::Mlp::create(params, "image.stage2",
                             {4 * cfg.image_stage1, cfg.hidden, cfg.image_stage2}, rng);
  e.stage3 = nn::Mlp::create(params, "image.stage3",
                             {4 * cfg.image_stage2, cfg.hidden, cfg.coarse_channels}, rng);
  e.decoder = nn::Mlp::create(
      params, "image.decoder",
      {cfg.image_stage1 + cfg.coarse_channels + 16, cfg.hidden, cfg.fine_channels}, rng);
  return e;
}

Index ImageEncoder::macs(const ImagePyramid& p) const {
  return p.fine_count() * (stage1.macs_per_row() + decoder.macs_per_row()) +
         p.fine_count() / 4 * stage2.macs_per_row() + p.coarse_count() * stage3.macs_per_row();
}

PointEncoder PointEncoder::create(nn::ParameterSet& params, const BackboneConfig& cfg,
                                  nn::Rng& rng) {
  PointEncoder e;
  e.use_intensity = cfg.use_intensity;
  e.local = nn::Mlp::create(params, "point.local", {4, cfg.hidden, cfg.point_local}, rng);
  e.super = nn::Mlp::create(params, "point.super",
                            {cfg.point_local, cfg.hidden, cfg.coarse_channels}, rng);
  e.fine_local = nn::Mlp::create(params, "point.fine_local", {4, cfg.hidden, cfg.hidden}, rng);
  e.fine_from_coarse =
      nn::Linear::create(params, "point.fine_from_coarse", cfg.coarse_channels, cfg.hidden, rng);
  e.fine_head = nn::Mlp::create(params, "point.fine_head", {cfg.hidden, cfg.fine_channels}, rng);
  return e;
}

Index PointEncoder::macs(const PointHierarchy& h) const {
  Index members = 0;
  for (const auto& g : h.groups) members += static_cast<Index>(g.size());
  return members * (local.macs_per_row() + fine_local.macs_per_row() +
                    fine_head.macs_per_row() + fine_from_coarse.in() * fine_from_coarse.out()) +
         h.size() * super.macs_per_row();
}

Matrix image_windows(const Image& image, const ImagePyramid& p) {
  image.validate();
  if (image.width != p.width || image.height != p.height) {
    fail(ErrorKind::kDimension, "image " + std::to_string(image.width) + "x" +
                                    std::to_string(image.height) + " does not match pyramid " +
                                    std::to_string(p.width) + "x" + std::to_string(p.height));
  }
  if (!image.rgb.allFinite()) fail(ErrorKind::kNumeric, "image has non-finite pixel values");
  Matrix x(p.fine_count(), 48);
  for (Index id = 0; id < p.fine_count(); ++id) {
    const Eigen::Vector2i g = p.fine_grid(id);
    int k = 0;
    for (int dv = -1; dv <= 2; ++dv) {
      const int v = std::clamp(2 * g.y() + dv, 0, image.height - 1);
      for (int du = -1; du <= 2; ++du) {
        const int u = std::clamp(2 * g.x() + du, 0, image.width - 1);
        for (int ch = 0; ch < 3; ++ch) x(id, k++) = image.rgb(image.index(u, v), ch);
      }
    }
  }
  return x;
}

std::vector<Index> fine_parents(const ImagePyramid& p) {
  std::vector<Index> out(static_cast<std::size_t>(p.fine_count()));
  for (Index f = 0; f < p.fine_count(); ++f) out[f] = p.coarse_of_fine(f);
  return out;
}

Matrix fine_phase(const ImagePyramid& p) {
  Matrix m = Matrix::Zero(p.fine_count(), 16);
  for (Index f = 0; f < p.fine_count(); ++f) {
    const Eigen::Vector2i g = p.fine_grid(f);
    m(f, (g.y() % 4) * 4 + g.x() % 4) = 1.0;
  }
  return m;
}

namespace {

// Concatenates the 2x2 children of every cell of a grid half the size.
Tensor merge_2x2(const Tensor& x, int cols, int rows) {
  const int oc = cols / 2, orows = rows / 2;
  std::vector<Tensor> parts;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      std::vector<Index> ids;
      ids.reserve(std::size_t(oc) * orows);
      for (int r = 0; r < orows; ++r)
        for (int c = 0; c < oc; ++c) ids.push_back(Index(2 * r + dy) * cols + 2 * c + dx);
      parts.push_back(nn::gather_rows(x, ids));
    }
  }
  return nn::concat_cols(parts);
}

std::vector<Index> iota(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

std::pair<FeatureMap, FeatureMap> encode_image_windows(const Matrix& windows,
                                                       const ImagePyramid& p,
                                                       const ImageEncoder& enc) {
  if (p.width % 8 != 0 || p.height % 8 != 0) {
    fail(ErrorKind::kConfig, "image dimensions must be multiples of 8");
  }
  const Tensor h1 = nn::relu(enc.stage1(Tensor(windows)));
  const Tensor h2 = nn::relu(enc.stage2(merge_2x2(h1, p.fine_cols(), p.fine_rows())));
  const Tensor coarse = enc.stage3(merge_2x2(h2, p.fine_cols() / 2, p.fine_rows() / 2));
  const auto parents = fine_parents(p);
  const Tensor fine = enc.decoder(
      nn::concat_cols({h1, nn::gather_rows(coarse, parents), Tensor(fine_phase(p))}));

  FeatureMap c{iota(p.coarse_count()), coarse, Level::kCoarse, Modality::kImage};
  FeatureMap f{iota(p.fine_count()), fine, Level::kFine, Modality::kImage};
  c.validate();
  f.validate();
  return {std::move(c), std::move(f)};
}

std::pair<FeatureMap, FeatureMap> encode_image(const Image& image, const ImagePyramid& p,
                                               const ImageEncoder& enc) {
  return encode_image_windows(image_windows(image, p), p, enc);
}

std::pair<FeatureMap, FeatureMap> encode_points(const PointCloud& cloud, const PointHierarchy& h,
                                                const PointEncoder& enc) {
  if (h.size() == 0) fail(ErrorKind::kContract, "point hierarchy has no superpoints");
  const auto members = h.grouped_points();
  const auto slots = h.group_slots();
  Matrix x(static_cast<Index>(members.size()), 4);
  const double inv_r = 1.0 / h.group_radius;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i] < 0 || members[i] >= cloud.size()) {
      fail(ErrorKind::kContract, "hierarchy references point " + std::to_string(members[i]) +
                                     " outside the cloud");
    }
    const Index sp = h.superpoints[slots[i]];
    x.row(Index(i)).head<3>() = (cloud.points.row(members[i]) - cloud.points.row(sp)) * inv_r;
    x(Index(i), 3) = enc.use_intensity && cloud.intensity ? (*cloud.intensity)(members[i]) : 0.0;
  }
  // Group rows within the flat member list.
  std::vector<std::vector<Index>> rows(h.groups.size());
  for (std::size_t i = 0; i < slots.size(); ++i) rows[slots[i]].push_back(Index(i));

  const Tensor in(x);
  const Tensor pooled = nn::segment_max(nn::relu(enc.local(in)), rows);
  const Tensor coarse = enc.super(pooled);
  const Tensor fine = enc.fine_head(nn::relu(
      nn::add(enc.fine_local(in), nn::gather_rows(enc.fine_from_coarse(coarse), slots))));

  FeatureMap c{h.superpoints, coarse, Level::kCoarse, Modality::kPoint};
  FeatureMap f{members, fine, Level::kFine, Modality::kPoint};
  c.validate();
  f.validate();
  return {std::move(c), std::move(f)};
}

}  // namespace cofi
