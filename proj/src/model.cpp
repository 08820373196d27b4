#include "cofi/model.hpp"

namespace cofi {

void ModelConfig::validate() const {
  build_image_pyramid(width, height, patch);
  if (superpoints < 1) fail(ErrorKind::kConfig, "superpoints must be >= 1");
  if (node_points < 1) fail(ErrorKind::kConfig, "node_points must be >= 1");
  if (!(group_radius > 0)) fail(ErrorKind::kConfig, "group_radius must be positive");
  if (!(frustum_threshold > 0 && frustum_threshold < 1)) {
    fail(ErrorKind::kConfig, "frustum_threshold must be in (0, 1)");
  }
  if (transformer.channels != backbone.coarse_channels) {
    fail(ErrorKind::kConfig, "transformer channels must equal backbone coarse channels");
  }
  if (transformer.blocks < 1) fail(ErrorKind::kConfig, "transformer needs at least one block");
}

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  nn::Rng rng(seed);
  Model m;
  m.cfg = cfg;
  m.image = ImageEncoder::create(m.params, cfg.backbone, rng);
  m.point = PointEncoder::create(m.params, cfg.backbone, rng);
  m.transformer = TransformerParams::create(m.params, cfg.transformer, rng);
  m.frustum = FrustumHead::create(m.params, cfg.transformer.channels, rng);
  if (cfg.fuse_fine) {
    const Index f = cfg.backbone.fine_channels, c = cfg.transformer.channels, h = cfg.backbone.hidden;
    m.fuse_points = nn::Mlp::create(m.params, "fuse.points", {f + c, h, f}, rng);
    m.fuse_pixels = nn::Mlp::create(m.params, "fuse.pixels", {f + c, h, f}, rng);
  }
  return m;
}

ImagePyramid Model::pyramid() const { return build_image_pyramid(cfg.width, cfg.height, cfg.patch); }

PreparedScene prepare_scene(const ScenePair& scene, const ModelConfig& cfg, std::uint64_t seed) {
  if (scene.image.width != cfg.width || scene.image.height != cfg.height) {
    fail(ErrorKind::kDimension, "scene " + scene.id + " image is " + std::to_string(scene.image.width) + "x" +
                                    std::to_string(scene.image.height) + ", model expects " +
                                    std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
  }
  const ImagePyramid pyramid = build_image_pyramid(cfg.width, cfg.height, cfg.patch);
  PreparedScene p;
  p.scene = &scene;
  const Index n_super = std::min<Index>(cfg.superpoints, (scene.cloud.size() + 1) / 2);
  p.hierarchy = select_node_points(build_point_hierarchy(scene.cloud, n_super, cfg.group_radius, seed),
                                   scene.cloud, cfg.node_points, seed);
  p.windows = image_windows(scene.image, pyramid);
  p.truth = make_ground_truth(scene.gt_pose, scene.intrinsics, p.hierarchy, scene.cloud, pyramid);
  return p;
}

nn::Matrix polar_coords(const nn::Matrix& xyz) {
  nn::Matrix out(xyz.rows(), 3);
  for (Index i = 0; i < xyz.rows(); ++i) {
    const double x = xyz(i, 0), y = xyz(i, 1), z = xyz(i, 2);
    const double planar = std::hypot(x, y);
    out(i, 0) = rad2deg(std::atan2(y, x));
    out(i, 1) = rad2deg(std::atan2(z, planar));
    out(i, 2) = std::log(std::max(std::hypot(planar, z), 1e-6));
  }
  return out;
}

nn::Tensor instance_norm(const nn::Tensor& x, double eps) {
  const Index n = x.rows();
  const nn::Tensor ones(nn::Matrix::Ones(1, n)), zeros(nn::Matrix::Zero(1, n));
  return nn::transpose(nn::layer_norm_rows(nn::transpose(x), ones, zeros, eps));
}

ForwardResult forward(const Model& model, const PreparedScene& prep) {
  const ImagePyramid pyramid = model.pyramid();
  const PointCloud& cloud = prep.scene->cloud;
  auto [coarse_pix, fine_pix] = encode_image_windows(prep.windows, pyramid, model.image);
  auto [coarse_pts, fine_pts] = encode_points(cloud, prep.hierarchy, model.point);

  coarse_pts.features = instance_norm(coarse_pts.features);
  coarse_pix.features = instance_norm(coarse_pix.features);
  nn::Matrix point_xyz(coarse_pts.size(), 3);
  for (Index i = 0; i < coarse_pts.size(); ++i) point_xyz.row(i) = cloud.points.row(coarse_pts.ids[i]);
  nn::Matrix pixel_uv(coarse_pix.size(), 2);
  for (Index i = 0; i < coarse_pix.size(); ++i) pixel_uv.row(i) = pyramid.coarse_center(coarse_pix.ids[i]).transpose();

  const nn::Matrix point_pos = model.cfg.polar_positions
                                   ? normalize_coords(polar_coords(point_xyz), model.cfg.polar_lo, model.cfg.polar_hi)
                                   : normalize_coords(point_xyz);
  const nn::Matrix pixel_pos = normalize_coords(pixel_uv, Eigen::Vector2d(0, 0), Eigen::Vector2d(pyramid.width, pyramid.height));
  auto [att_pts, att_pix] = run_stack(positional_encode_normalized(coarse_pts, point_pos, model.transformer.pos_points),
                                      positional_encode_normalized(coarse_pix, pixel_pos, model.transformer.pos_pixels),
                                      model.transformer, model.cfg.transformer);
  ForwardResult r;
  r.frustum = classify_frustum(att_pts, model.frustum, model.cfg.frustum_threshold);
  if (model.cfg.fuse_fine) {
    const auto slots = prep.hierarchy.group_slots();
    const auto parents = fine_parents(pyramid);
    fine_pts.features = model.fuse_points(
        nn::concat_cols({fine_pts.features, nn::gather_rows(att_pts.features, slots)}));
    fine_pix.features = model.fuse_pixels(
        nn::concat_cols({fine_pix.features, nn::gather_rows(att_pix.features, parents)}));
  }
  fine_pts.features = instance_norm(fine_pts.features);
  fine_pix.features = instance_norm(fine_pix.features);
  r.coarse_points = std::move(att_pts);
  r.coarse_pixels = std::move(att_pix);
  r.fine_points = std::move(fine_pts);
  r.fine_pixels = std::move(fine_pix);
  return r;
}

}  // namespace cofi
