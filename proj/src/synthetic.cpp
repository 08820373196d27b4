#include <fstream>
#include <random>
#include <sstream>

#include "cofi/data.hpp"
#include "cofi/tensor_io.hpp"

namespace cofi {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

Eigen::Matrix3d yaw_rotation(double yaw) { return rotation_z(yaw); }

double luminance(const Eigen::Vector3d& c) { return 0.299 * c.x() + 0.587 * c.y() + 0.114 * c.z(); }

}  // namespace

void SyntheticSceneConfig::validate() const {
  if (n_points <= 0) fail(ErrorKind::kConfig, "n_points must be positive");
  if (n_primitives < 1) fail(ErrorKind::kConfig, "n_primitives must be at least 1");
  if (!(jitter_rotation_deg >= 0) || !(jitter_translation_m >= 0)) {
    fail(ErrorKind::kConfig, "jitter must be non-negative");
  }
  if (width <= 0 || height <= 0 || width % 8 || height % 8) {
    fail(ErrorKind::kConfig, "image extent must be a positive multiple of 8");
  }
  if (!(focal > 0)) fail(ErrorKind::kConfig, "focal length must be positive");
  if (!(min_range > 0) || !(max_range > min_range)) fail(ErrorKind::kConfig, "need 0 < min_range < max_range");
  if (!(lidar_fov_deg > 0 && lidar_fov_deg <= 360)) fail(ErrorKind::kConfig, "lidar_fov_deg must be in (0, 360]");
  if (max_retries < 1) fail(ErrorKind::kConfig, "max_retries must be at least 1");
}

Eigen::Vector3d SyntheticWorld::albedo(int primitive, const Eigen::Vector3d& p) const {
  Eigen::Vector2d s;
  if (primitive == 0) {
    s = p.head<2>();
  } else {
    const Box& b = boxes[std::size_t(primitive - 1)];
    const Eigen::Vector3d q = yaw_rotation(-b.yaw) * (p - b.center);
    Eigen::Index axis = 0;
    (q.cwiseAbs().cwiseQuotient(b.half)).maxCoeff(&axis);
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    s = {q(a1), q(a2)};
  }
  const Material& m = materials[std::size_t(primitive)];
  const double tex = 0.5 + 0.5 * std::sin(kTwoPi * m.frequency.x() * s.x() + m.phase.x()) *
                               std::sin(kTwoPi * m.frequency.y() * s.y() + m.phase.y());
  return m.base * (0.3 + 0.7 * tex);
}

SyntheticWorld::Hit SyntheticWorld::trace(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
  Hit best;
  best.t = std::numeric_limits<double>::infinity();
  if (dir.z() < 0) {
    const double t = (ground_z - origin.z()) / dir.z();
    const Eigen::Vector3d p = origin + t * dir;
    if (t > 1e-9 && p.head<2>().norm() <= ground_radius) {
      best.t = t;
      best.primitive = 0;
    }
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box& b = boxes[i];
    const Eigen::Matrix3d r = yaw_rotation(-b.yaw);
    const Eigen::Vector3d o = r * (origin - b.center);
    const Eigen::Vector3d d = r * dir;
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (std::abs(d(a)) < 1e-15) {
        miss = std::abs(o(a)) > b.half(a);
        continue;
      }
      double ta = (-b.half(a) - o(a)) / d(a);
      double tb = (b.half(a) - o(a)) / d(a);
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      miss = t0 > t1;
    }
    if (miss) continue;
    const double t = t0 > 1e-9 ? t0 : t1;
    if (t > 1e-9 && t < best.t) {
      best.t = t;
      best.primitive = int(i) + 1;
    }
  }
  if (best.primitive < 0) return {0, -1, Eigen::Vector3d::Zero()};
  best.albedo = albedo(best.primitive, origin + best.t * dir);
  return best;
}

SyntheticWorld make_world(const SyntheticSceneConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto material = [&](double f_lo, double f_hi) {
    SyntheticWorld::Material m;
    m.base = Eigen::Vector3d(uniform(0.25, 1.0), uniform(0.25, 1.0), uniform(0.25, 1.0));
    m.frequency = Eigen::Vector2d(uniform(f_lo, f_hi), uniform(f_lo, f_hi));
    m.phase = Eigen::Vector2d(uniform(0, kTwoPi), uniform(0, kTwoPi));
    return m;
  };
  SyntheticWorld w;
  w.materials.push_back(material(0.2, 0.6));
  // Three in four boxes sit in the forward cone the camera looks into.
  for (int i = 0; i < cfg.n_primitives; ++i) {
    const bool forward = 4 * i < 3 * cfg.n_primitives;
    const double azimuth = forward ? uniform(-deg2rad(55.0), deg2rad(55.0)) : uniform(-std::numbers::pi, std::numbers::pi);
    const double range = uniform(cfg.min_range, cfg.max_range);
    SyntheticWorld::Box b;
    b.half = Eigen::Vector3d(uniform(0.4, 1.6), uniform(0.4, 1.6), uniform(0.6, 2.0));
    b.center = Eigen::Vector3d(range * std::cos(azimuth), range * std::sin(azimuth), w.ground_z + b.half.z());
    b.yaw = uniform(0, std::numbers::pi);
    w.boxes.push_back(b);
    w.materials.push_back(material(0.3, 1.0));
  }
  return w;
}

Image render(const SyntheticWorld& world, const Pose& pose, const CameraIntrinsics& intr, std::vector<int>* ids) {
  Image im = Image::filled(intr.width, intr.height, Eigen::Vector3d::Zero());
  if (ids) ids->assign(std::size_t(intr.width) * intr.height, -1);
  const Eigen::Matrix3d rt = pose.rotation.transpose();
  const Eigen::Vector3d origin = -rt * pose.translation;
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Eigen::Vector3d dir = rt * unproject(intr, u + 0.5, v + 0.5, 1.0);
      const auto hit = world.trace(origin, dir);
      if (hit.primitive >= 0) {
        im.pixel(u, v) = hit.albedo.transpose();
      } else {
        const double k = double(v) / intr.height;
        im.pixel(u, v) << 0.55 + 0.3 * k, 0.7 + 0.2 * k, 0.95;
      }
      if (ids) (*ids)[std::size_t(im.index(u, v))] = hit.primitive;
    }
  }
  return im;
}

PointCloud scan(const SyntheticWorld& world, double fov_deg, double step_deg) {
  const int azimuth_steps = std::max(1, int(std::lround(fov_deg / step_deg)));
  constexpr int kBeams = 64;
  const double top = deg2rad(2.0), bottom = deg2rad(-24.8);
  std::vector<Eigen::Vector3d> pts;
  std::vector<double> lum;
  const Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  for (int b = 0; b < kBeams; ++b) {
    const double el = top + (bottom - top) * b / (kBeams - 1);
    for (int a = 0; a < azimuth_steps; ++a) {
      const double az = deg2rad(-fov_deg / 2 + step_deg * (a + 0.5));
      const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const auto hit = world.trace(origin, dir);
      if (hit.primitive < 0 || hit.t > 80.0) continue;
      pts.push_back(origin + hit.t * dir);
      lum.push_back(luminance(hit.albedo));
    }
  }
  PointCloud c;
  c.points.resize(Index(pts.size()), 3);
  c.intensity = Eigen::VectorXd(Index(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    c.points.row(Index(i)) = pts[i].transpose();
    (*c.intensity)(Index(i)) = lum[i];
  }
  return c;
}

Pose canonical_camera_pose() {
  Eigen::Matrix3d r;
  r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  const Eigen::Vector3d center(0, 0, 0.1);
  return {r, -r * center};
}

ScenePair generate_synthetic(const SyntheticSceneConfig& cfg) {
  cfg.validate();
  const CameraIntrinsics intr{cfg.focal, cfg.focal, cfg.width / 2.0, cfg.height / 2.0, cfg.width, cfg.height};
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  double best_overlap = 0;
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const std::uint64_t world_seed = rng();
    const std::uint64_t sample_seed = rng();
    const Eigen::Vector3d angles(sym(rng), sym(rng), sym(rng));
    const Eigen::Vector3d shift(sym(rng), sym(rng), sym(rng));
    const SyntheticWorld world = make_world(cfg, world_seed);
    ScenePair s;
    s.intrinsics = intr;
    s.id = "synth-" + std::to_string(cfg.seed);
    const Pose jitter{rotation_from_euler(Eigen::Vector3d(cfg.jitter_rotation_deg * angles)),
                      cfg.jitter_translation_m * shift};
    s.gt_pose = jitter * canonical_camera_pose();
    s.cloud = subsample(scan(world, cfg.lidar_fov_deg), cfg.n_points, sample_seed);
    if (s.cloud.size() == 0) continue;
    const double o = s.overlap();
    best_overlap = std::max(best_overlap, o);
    if (o < 0.05) continue;
    s.image = render(world, s.gt_pose, intr);
    return s;
  }
  fail(ErrorKind::kInsufficientData, "no synthetic scene with >= 5% frustum overlap after " +
                                         std::to_string(cfg.max_retries) + " attempts (best " +
                                         std::to_string(100 * best_overlap) + "%)");
}

void write_scene_dump(const std::filesystem::path& stem, const ScenePair& scene, const std::string& manifest) {
  scene.validate();
  nn::Matrix pose = scene.gt_pose.matrix().topRows<3>();
  nn::Matrix intr(1, 6);
  intr << scene.intrinsics.fx, scene.intrinsics.fy, scene.intrinsics.cx, scene.intrinsics.cy,
      scene.intrinsics.width, scene.intrinsics.height;
  nn::Matrix intensity = scene.cloud.intensity ? nn::Matrix(*scene.cloud.intensity)
                                               : nn::Matrix::Zero(scene.cloud.size(), 1);
  write_tensor_file(stem.string() + ".tensors", {{"image", scene.image.rgb},
                                                 {"points", scene.cloud.points},
                                                 {"intensity", intensity},
                                                 {"pose", pose},
                                                 {"intrinsics", intr}});
  std::ofstream out(stem.string() + ".manifest.txt");
  if (!out) fail(ErrorKind::kIo, "cannot write " + stem.string() + ".manifest.txt");
  out << "id = " << scene.id << "\n" << manifest;
}

ScenePair read_scene_dump(const std::filesystem::path& stem) {
  const auto tensors = read_tensor_file(stem.string() + ".tensors");
  auto get = [&](const std::string& name, Index rows, Index cols) -> const nn::Matrix& {
    for (const auto& t : tensors) {
      if (t.name != name) continue;
      if ((rows >= 0 && t.value.rows() != rows) || (cols >= 0 && t.value.cols() != cols)) {
        fail(ErrorKind::kCorruptFile, stem.string() + ": tensor '" + name + "' has shape " +
                                          std::to_string(t.value.rows()) + "x" + std::to_string(t.value.cols()));
      }
      return t.value;
    }
    fail(ErrorKind::kCorruptFile, stem.string() + ": tensor '" + name + "' missing");
  };
  ScenePair s;
  const nn::Matrix& intr = get("intrinsics", 1, 6);
  s.intrinsics = {intr(0, 0), intr(0, 1), intr(0, 2), intr(0, 3), int(intr(0, 4)), int(intr(0, 5))};
  s.image.width = s.intrinsics.width;
  s.image.height = s.intrinsics.height;
  s.image.rgb = get("image", Index(s.image.width) * s.image.height, 3);
  s.cloud.points = get("points", -1, 3);
  s.cloud.intensity = Eigen::VectorXd(get("intensity", s.cloud.size(), 1).col(0));
  s.gt_pose = Pose::from_matrix(Eigen::Matrix<double, 3, 4>(get("pose", 3, 4)));
  s.id = stem.filename().string();
  std::ifstream m(stem.string() + ".manifest.txt");
  std::string line;
  if (m && std::getline(m, line) && line.rfind("id = ", 0) == 0) s.id = line.substr(5);
  return s;
}

}  // namespace cofi
