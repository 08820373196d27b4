#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cofi/data.hpp"

namespace cofi {

double ScenePair::overlap() const {
  if (cloud.size() == 0) return 0.0;
  Index inside = 0;
  for (Index i = 0; i < cloud.size(); ++i) inside += in_frustum(intrinsics, gt_pose, cloud.point(i));
  return double(inside) / double(cloud.size());
}

void ScenePair::validate() const {
  image.validate();
  cloud.validate();
  intrinsics.validate();
  if (image.width != intrinsics.width || image.height != intrinsics.height) {
    fail(ErrorKind::kDimension, "scene " + id + ": image size differs from intrinsics");
  }
  const double o = overlap();
  if (o < 0.05) {
    fail(ErrorKind::kInsufficientData,
         "scene " + id + ": only " + std::to_string(100 * o) + "% of points in the frustum");
  }
}

PointCloud read_velodyne(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0) {
    fail(ErrorKind::kCorruptFile, path.string() + ": " + std::to_string(bytes.size()) +
                                      " bytes is not a whole number of 16-byte records; "
                                      "truncated record at byte " +
                                      std::to_string(bytes.size() - bytes.size() % 16));
  }
  const Index n = Index(bytes.size() / 16);
  PointCloud c;
  c.points.resize(n, 3);
  c.intensity = Eigen::VectorXd(n);
  for (Index i = 0; i < n; ++i) {
    float rec[4];
    for (int k = 0; k < 4; ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= std::uint32_t(static_cast<unsigned char>(bytes[std::size_t(16 * i + 4 * k + b)])) << (8 * b);
      std::memcpy(&rec[k], &bits, 4);
    }
    if (!std::isfinite(rec[0]) || !std::isfinite(rec[1]) || !std::isfinite(rec[2]) || !std::isfinite(rec[3])) {
      fail(ErrorKind::kParse, path.string() + ": non-finite value in record at byte " + std::to_string(16 * i));
    }
    c.points.row(i) << rec[0], rec[1], rec[2];
    (*c.intensity)(i) = rec[3];
  }
  return c;
}

void write_velodyne(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  for (Index i = 0; i < cloud.size(); ++i) {
    const float rec[4] = {float(cloud.points(i, 0)), float(cloud.points(i, 1)), float(cloud.points(i, 2)),
                          cloud.intensity ? float((*cloud.intensity)(i)) : 0.0f};
    for (float f : rec) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

namespace {

// Whitespace-separated reals starting at `pos` within `line`; `base` is the
// line's byte offset in the file.
std::vector<double> parse_reals(const std::string& line, std::size_t pos, std::size_t base,
                                std::size_t expected) {
  std::vector<double> out;
  const char* p = line.data() + pos;
  const char* end = line.data() + line.size();
  while (true) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p == end) break;
    double v;
    const auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next < end && !std::isspace(static_cast<unsigned char>(*next)))) {
      fail(ErrorKind::kParse, "malformed number at byte " + std::to_string(base + std::size_t(p - line.data())));
    }
    out.push_back(v);
    p = next;
  }
  if (out.size() != expected) {
    fail(ErrorKind::kParse, "expected " + std::to_string(expected) + " values, found " +
                                std::to_string(out.size()) + " in line at byte " + std::to_string(base));
  }
  return out;
}

Eigen::Matrix<double, 3, 4> matrix34(const std::vector<double>& v) {
  Eigen::Matrix<double, 3, 4> m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[std::size_t(4 * r + c)];
  return m;
}

}  // namespace

CameraIntrinsics KittiCalib::intrinsics(int width, int height) const {
  return {p2(0, 0), p2(1, 1), p2(0, 2), p2(1, 2), width, height};
}

Pose KittiCalib::cam0_to_cam2() const {
  const Eigen::Matrix3d k = p2.leftCols<3>();
  return {Eigen::Matrix3d::Identity(), k.inverse() * p2.col(3)};
}

KittiCalib parse_calib(std::istream& in) {
  KittiCalib c;
  bool have_p2 = false, have_tr = false;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t base = offset;
    offset += line.size() + 1;
    const auto colon = line.find(':');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (colon == std::string::npos) fail(ErrorKind::kParse, "calib line without a key at byte " + std::to_string(base));
    const std::string key = line.substr(0, colon);
    if (key == "P2") {
      c.p2 = matrix34(parse_reals(line, colon + 1, base, 12));
      have_p2 = true;
    } else if (key == "Tr" || key == "Tr_velo_to_cam") {
      c.tr = matrix34(parse_reals(line, colon + 1, base, 12));
      have_tr = true;
    }
  }
  if (!have_p2) fail(ErrorKind::kParse, "calib has no P2 line");
  if (!have_tr) fail(ErrorKind::kParse, "calib has no Tr line");
  return c;
}

KittiCalib read_calib(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return parse_calib(in);
}

std::vector<Pose> parse_poses(std::istream& in) {
  std::vector<Pose> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t base = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(Pose::from_matrix(Eigen::Matrix<double, 3, 4>(matrix34(parse_reals(line, 0, base, 12)))));
  }
  return out;
}

std::vector<Pose> read_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return parse_poses(in);
}

PointCloud subsample(const PointCloud& cloud, Index n, std::uint64_t seed) {
  if (cloud.size() <= n) return cloud;
  std::vector<Index> idx(static_cast<std::size_t>(cloud.size()));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(n));
  std::sort(idx.begin(), idx.end());
  PointCloud out;
  out.points.resize(n, 3);
  if (cloud.intensity) out.intensity = Eigen::VectorXd(n);
  for (Index i = 0; i < n; ++i) {
    out.points.row(i) = cloud.points.row(idx[i]);
    if (cloud.intensity) (*out.intensity)(i) = (*cloud.intensity)(idx[i]);
  }
  return out;
}

ScenePair load_kitti_frame(const KittiFrameSpec& spec) {
  const KittiCalib calib = read_calib(spec.calib);
  const auto poses = read_poses(spec.poses);
  const std::size_t cam_frame = spec.camera_frame.value_or(spec.frame);
  if (spec.frame >= poses.size() || cam_frame >= poses.size()) {
    fail(ErrorKind::kParse, "poses file has " + std::to_string(poses.size()) + " entries, frame " +
                                std::to_string(std::max(spec.frame, cam_frame)) + " requested");
  }
  ScenePair s;
  s.id = spec.velodyne.stem().string();
  s.cloud = subsample(read_velodyne(spec.velodyne), spec.n_points, spec.seed);
  const Pose tr = Pose::from_matrix(Eigen::Matrix<double, 3, 4>(calib.tr));
  s.gt_pose = calib.cam0_to_cam2() * poses[cam_frame].inverse() * poses[spec.frame] * tr;
  int src_w = 1241, src_h = 376;
  if (!spec.image.empty()) {
    const Image full = read_png(spec.image);
    src_w = full.width;
    src_h = full.height;
    s.image = resize_bilinear(full, spec.width, spec.height);
  } else {
    s.image = Image::filled(spec.width, spec.height, Eigen::Vector3d::Zero());
  }
  s.intrinsics = calib.intrinsics(src_w, src_h).resized(spec.width, spec.height);
  return s;
}

std::string kitti_split(int sequence) {
  if (sequence >= 0 && sequence <= 8) return "train";
  if (sequence == 9 || sequence == 10) return "test";
  fail(ErrorKind::kConfig, "KITTI odometry sequence " + std::to_string(sequence) + " has no ground truth split");
}

std::vector<int> kitti_sequences(const std::string& split) {
  if (split == "train") return {0, 1, 2, 3, 4, 5, 6, 7, 8};
  if (split == "test") return {9, 10};
  fail(ErrorKind::kConfig, "unknown split '" + split + "'");
}

}  // namespace cofi
