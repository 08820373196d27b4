#include "cofi/pose_solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace cofi {

namespace {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Matrix12 = Eigen::Matrix<double, 12, 12>;
using Vector12 = Eigen::Matrix<double, 12, 1>;
using Matrix6x10 = Eigen::Matrix<double, 6, 10>;
using Vector4 = Eigen::Vector4d;

constexpr int kGaussNewtonIterations = 3;
constexpr std::array<std::array<int, 2>, 6> kControlPairs{
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

struct ControlFrame {
  Eigen::Matrix<double, 4, 3> world;                // control points, one per row
  Eigen::Matrix<double, Eigen::Dynamic, 4> alphas;  // barycentric coordinates
};

ControlFrame choose_control_points(const Points3<double>& pts) {
  const Eigen::Index n = pts.rows();
  ControlFrame cf;
  const Eigen::RowVector3d centroid = pts.colwise().mean();
  const Eigen::MatrixXd centered = pts.rowwise() - centroid;
  const Mat3 cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 lambda = eig.eigenvalues();
  if (!(lambda(0) > 1e-10 * lambda(2)) || !(lambda(2) > 0)) {
    fail(ErrorKind::kDegenerateConfiguration,
         "epnp: points do not span three dimensions (planar or collinear)");
  }
  cf.world.row(0) = centroid;
  for (int i = 0; i < 3; ++i) {
    cf.world.row(i + 1) = centroid + std::sqrt(lambda(2 - i)) * eig.eigenvectors().col(2 - i).transpose();
  }
  Mat3 basis;
  for (int i = 0; i < 3; ++i) basis.col(i) = (cf.world.row(i + 1) - centroid).transpose();
  const Mat3 inv = basis.inverse();
  cf.alphas.resize(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 a = inv * centered.row(i).transpose();
    cf.alphas(i, 0) = 1.0 - a.sum();
    cf.alphas.block<1, 3>(i, 1) = a.transpose();
  }
  return cf;
}

// Camera-frame control points from betas over the null-space basis.
Eigen::Matrix<double, 4, 3> camera_controls(const std::array<Vector12, 4>& v, const Vector4& beta) {
  Vector12 x = Vector12::Zero();
  for (int k = 0; k < 4; ++k) x += beta(k) * v[k];
  Eigen::Matrix<double, 4, 3> c;
  for (int j = 0; j < 4; ++j) c.row(j) = x.segment<3>(3 * j).transpose();
  return c;
}

struct Candidate {
  Pose pose;
  double error = std::numeric_limits<double>::infinity();
};

Candidate pose_from_betas(const std::array<Vector12, 4>& v, const Vector4& beta,
                          const ControlFrame& cf, const PnPProblem& problem,
                          const CameraIntrinsics& intr) {
  Eigen::Matrix<double, 4, 3> cc = camera_controls(v, beta);
  Points3<double> pc = cf.alphas * cc;
  // The null space fixes the solution up to sign; the scene is in front.
  if ((pc.col(2).array() < 0).count() * 2 > pc.rows()) {
    cc = -cc;
    pc = -pc;
  }
  Candidate out;
  if (!pc.allFinite()) return out;
  const Eigen::Matrix4d t = Eigen::umeyama(problem.points.transpose(), pc.transpose(), false);
  out.pose = Pose::from_matrix(t);
  if (!out.pose.rotation.allFinite() || !out.pose.translation.allFinite()) return out;
  out.error = reprojection_errors(problem, intr, out.pose).mean();
  return out;
}

Matrix6x10 compute_l(const std::array<Vector12, 4>& v) {
  Matrix6x10 l;
  for (int p = 0; p < 6; ++p) {
    const auto [a, b] = kControlPairs[p];
    std::array<Vec3, 4> dv;
    for (int k = 0; k < 4; ++k) dv[k] = v[k].segment<3>(3 * a) - v[k].segment<3>(3 * b);
    l(p, 0) = dv[0].dot(dv[0]);
    l(p, 1) = 2 * dv[0].dot(dv[1]);
    l(p, 2) = dv[1].dot(dv[1]);
    l(p, 3) = 2 * dv[0].dot(dv[2]);
    l(p, 4) = 2 * dv[1].dot(dv[2]);
    l(p, 5) = dv[2].dot(dv[2]);
    l(p, 6) = 2 * dv[0].dot(dv[3]);
    l(p, 7) = 2 * dv[1].dot(dv[3]);
    l(p, 8) = 2 * dv[2].dot(dv[3]);
    l(p, 9) = dv[3].dot(dv[3]);
  }
  return l;
}

Eigen::Matrix<double, 6, 1> compute_rho(const ControlFrame& cf) {
  Eigen::Matrix<double, 6, 1> rho;
  for (int p = 0; p < 6; ++p) {
    const auto [a, b] = kControlPairs[p];
    rho(p) = (cf.world.row(a) - cf.world.row(b)).squaredNorm();
  }
  return rho;
}

template <int Cols>
Eigen::Matrix<double, Cols, 1> solve_columns(const Matrix6x10& l, const std::array<int, Cols>& cols,
                                             const Eigen::Matrix<double, 6, 1>& rho) {
  Eigen::Matrix<double, 6, Cols> sub;
  for (int i = 0; i < Cols; ++i) sub.col(i) = l.col(cols[i]);
  return sub.colPivHouseholderQr().solve(rho);
}

// Single null-space vector: beta scales v1 to the true control-point distances.
Vector4 betas_n1(const std::array<Vector12, 4>& v, const ControlFrame& cf) {
  double num = 0, den = 0;
  for (const auto& [a, b] : kControlPairs) {
    const double dv = (v[0].segment<3>(3 * a) - v[0].segment<3>(3 * b)).norm();
    const double dw = (cf.world.row(a) - cf.world.row(b)).norm();
    num += dv * dw;
    den += dv * dv;
  }
  return {den > 0 ? num / den : 0.0, 0, 0, 0};
}

// Linearized four-vector case over columns b11 b12 b13 b14.
Vector4 betas_n4(const Matrix6x10& l, const Eigen::Matrix<double, 6, 1>& rho) {
  const Eigen::Vector4d b = solve_columns<4>(l, {0, 1, 3, 6}, rho);
  Vector4 beta;
  if (b(0) < 0) {
    beta(0) = std::sqrt(-b(0));
    beta.tail<3>() = -b.tail<3>() / beta(0);
  } else {
    beta(0) = std::sqrt(b(0));
    beta.tail<3>() = beta(0) > 0 ? Eigen::Vector3d(b.tail<3>() / beta(0)) : Eigen::Vector3d::Zero();
  }
  return beta;
}

// Two-vector case over columns b11 b12 b22.
Vector4 betas_n2(const Matrix6x10& l, const Eigen::Matrix<double, 6, 1>& rho) {
  const Eigen::Vector3d b = solve_columns<3>(l, {0, 1, 2}, rho);
  Vector4 beta = Vector4::Zero();
  if (b(0) < 0) {
    beta(0) = std::sqrt(-b(0));
    beta(1) = b(2) < 0 ? std::sqrt(-b(2)) : 0.0;
  } else {
    beta(0) = std::sqrt(b(0));
    beta(1) = b(2) > 0 ? std::sqrt(b(2)) : 0.0;
  }
  if (b(1) < 0) beta(0) = -beta(0);
  return beta;
}

// Three-vector case over columns b11 b12 b22 b13 b23.
Vector4 betas_n3(const Matrix6x10& l, const Eigen::Matrix<double, 6, 1>& rho) {
  const Eigen::Matrix<double, 5, 1> b = solve_columns<5>(l, {0, 1, 2, 3, 4}, rho);
  Vector4 beta = Vector4::Zero();
  if (b(0) < 0) {
    beta(0) = std::sqrt(-b(0));
    beta(1) = b(2) < 0 ? std::sqrt(-b(2)) : 0.0;
  } else {
    beta(0) = std::sqrt(b(0));
    beta(1) = b(2) > 0 ? std::sqrt(b(2)) : 0.0;
  }
  if (b(1) < 0) beta(0) = -beta(0);
  beta(2) = beta(0) != 0 ? b(3) / beta(0) : 0.0;
  return beta;
}

Eigen::Matrix<double, 10, 1> beta_products(const Vector4& b) {
  Eigen::Matrix<double, 10, 1> p;
  p << b(0) * b(0), b(0) * b(1), b(1) * b(1), b(0) * b(2), b(1) * b(2), b(2) * b(2),
      b(0) * b(3), b(1) * b(3), b(2) * b(3), b(3) * b(3);
  return p;
}

void gauss_newton(const Matrix6x10& l, const Eigen::Matrix<double, 6, 1>& rho, Vector4& beta) {
  for (int it = 0; it < kGaussNewtonIterations; ++it) {
    Eigen::Matrix<double, 6, 4> j;
    Eigen::Matrix<double, 6, 1> r;
    for (int i = 0; i < 6; ++i) {
      const auto li = l.row(i);
      j(i, 0) = 2 * li(0) * beta(0) + li(1) * beta(1) + li(3) * beta(2) + li(6) * beta(3);
      j(i, 1) = li(1) * beta(0) + 2 * li(2) * beta(1) + li(4) * beta(2) + li(7) * beta(3);
      j(i, 2) = li(3) * beta(0) + li(4) * beta(1) + 2 * li(5) * beta(2) + li(8) * beta(3);
      j(i, 3) = li(6) * beta(0) + li(7) * beta(1) + li(8) * beta(2) + 2 * li(9) * beta(3);
      r(i) = rho(i) - li.dot(beta_products(beta));
    }
    const Vector4 delta = j.colPivHouseholderQr().solve(r);
    if (!delta.allFinite()) return;
    beta += delta;
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<Eigen::Index> inliers_of(const Eigen::VectorXd& err, double threshold) {
  std::vector<Eigen::Index> ids;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    if (err(i) <= threshold) ids.push_back(i);
  }
  return ids;
}

}  // namespace

PnPProblem PnPProblem::subset(const std::vector<Eigen::Index>& ids) const {
  PnPProblem out;
  out.points.resize(static_cast<Eigen::Index>(ids.size()), 3);
  out.pixels.resize(static_cast<Eigen::Index>(ids.size()), 2);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.points.row(static_cast<Eigen::Index>(i)) = points.row(ids[i]);
    out.pixels.row(static_cast<Eigen::Index>(i)) = pixels.row(ids[i]);
  }
  return out;
}

Eigen::VectorXd reprojection_errors(const PnPProblem& problem, const CameraIntrinsics& intr,
                                    const Pose& pose) {
  Eigen::VectorXd err(problem.size());
  for (Eigen::Index i = 0; i < problem.size(); ++i) {
    const Projection pr = project(intr, Vec3(pose * Vec3(problem.points.row(i).transpose())));
    err(i) = pr.in_front ? std::hypot(pr.u - problem.pixels(i, 0), pr.v - problem.pixels(i, 1))
                         : std::numeric_limits<double>::infinity();
  }
  return err;
}

Pose epnp(const PnPProblem& problem, const CameraIntrinsics& intr) {
  const Eigen::Index n = problem.size();
  if (n < 4) fail(ErrorKind::kInsufficientData, "epnp needs at least 4 pairs, got " + std::to_string(n));
  if (problem.pixels.rows() != n) fail(ErrorKind::kDimension, "epnp: points and pixels differ in count");

  const ControlFrame cf = choose_control_points(problem.points);

  // Projection constraints in normalized image coordinates.
  Eigen::MatrixXd m(2 * n, 12);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = (problem.pixels(i, 0) - intr.cx) / intr.fx;
    const double y = (problem.pixels(i, 1) - intr.cy) / intr.fy;
    for (int j = 0; j < 4; ++j) {
      const double a = cf.alphas(i, j);
      m.block<1, 3>(2 * i, 3 * j) << a, 0.0, -a * x;
      m.block<1, 3>(2 * i + 1, 3 * j) << 0.0, a, -a * y;
    }
  }
  // Right singular vectors of the smallest singular values span the null space.
  std::array<Vector12, 4> v;
  if (n >= 6) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
    for (int k = 0; k < 4; ++k) v[k] = svd.matrixV().col(11 - k);
  } else {
    const Matrix12 mtm = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Matrix12> eig(mtm);
    for (int k = 0; k < 4; ++k) v[k] = eig.eigenvectors().col(k);
  }

  const Matrix6x10 l = compute_l(v);
  const Eigen::Matrix<double, 6, 1> rho = compute_rho(cf);

  Candidate best;
  const std::array<Vector4, 4> starts{betas_n1(v, cf), betas_n4(l, rho), betas_n2(l, rho),
                                      betas_n3(l, rho)};
  for (std::size_t s = 0; s < starts.size(); ++s) {
    Vector4 beta = starts[s];
    if (!beta.allFinite()) continue;
    if (s > 0) gauss_newton(l, rho, beta);
    Candidate c = pose_from_betas(v, beta, cf, problem, intr);
    if (c.error < best.error) best = c;
  }
  if (!std::isfinite(best.error)) {
    fail(ErrorKind::kDegenerateConfiguration, "epnp: no finite solution");
  }
  return best.pose;
}

void RansacConfig::validate() const {
  if (min_sample < 4) fail(ErrorKind::kConfig, "ransac min_sample must be >= 4");
  if (!(confidence > 0 && confidence < 1)) fail(ErrorKind::kConfig, "ransac confidence must be in (0,1)");
  if (max_iterations < 1) fail(ErrorKind::kConfig, "ransac max_iterations must be >= 1");
  if (!(inlier_threshold > 0)) fail(ErrorKind::kConfig, "ransac inlier_threshold must be positive");
}

PoseEstimate ransac_epnp(const PnPProblem& problem, const CameraIntrinsics& intr,
                         const RansacConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = problem.size();
  if (n < cfg.min_sample) {
    fail(ErrorKind::kInsufficientData,
         "ransac_epnp needs at least " + std::to_string(cfg.min_sample) + " pairs, got " +
             std::to_string(n));
  }

  Pose best_pose;
  std::vector<Eigen::Index> best_inliers;
  double best_error = std::numeric_limits<double>::infinity();
  long needed = cfg.max_iterations;
  int it = 0;
  for (; it < cfg.max_iterations && it < needed; ++it) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(it))));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    std::vector<Eigen::Index> sample;
    while (static_cast<int>(sample.size()) < cfg.min_sample) {
      const Eigen::Index k = pick(rng);
      if (std::find(sample.begin(), sample.end(), k) == sample.end()) sample.push_back(k);
    }
    Pose model;
    try {
      model = epnp(problem.subset(sample), intr);
    } catch (const Error&) {
      continue;
    }
    const Eigen::VectorXd err = reprojection_errors(problem, intr, model);
    std::vector<Eigen::Index> inl = inliers_of(err, cfg.inlier_threshold);
    double mean_err = 0;
    for (auto i : inl) mean_err += err(i);
    mean_err = inl.empty() ? std::numeric_limits<double>::infinity() : mean_err / inl.size();
    if (inl.size() > best_inliers.size() ||
        (inl.size() == best_inliers.size() && mean_err < best_error)) {
      best_inliers = std::move(inl);
      best_pose = model;
      best_error = mean_err;
      const double w = static_cast<double>(best_inliers.size()) / static_cast<double>(n);
      const double p_good = std::pow(w, cfg.min_sample);
      if (p_good >= 1.0) {
        needed = it + 1;
      } else if (p_good > 0.0) {
        const double k = std::log(1.0 - cfg.confidence) / std::log(1.0 - p_good);
        needed = static_cast<long>(std::ceil(k));
      }
    }
  }
  if (static_cast<int>(best_inliers.size()) < cfg.min_sample) {
    fail(ErrorKind::kEstimationFailure, "ransac_epnp: no model with at least " +
                                            std::to_string(cfg.min_sample) + " inliers");
  }

  // Refit on the consensus set while it keeps growing (or holds steady).
  for (int round = 0; round < 5; ++round) {
    Pose refit;
    try {
      refit = epnp(problem.subset(best_inliers), intr);
    } catch (const Error&) {
      break;
    }
    const Eigen::VectorXd err = reprojection_errors(problem, intr, refit);
    std::vector<Eigen::Index> inl = inliers_of(err, cfg.inlier_threshold);
    if (inl.size() < best_inliers.size() || static_cast<int>(inl.size()) < cfg.min_sample) break;
    const bool same = inl == best_inliers;
    best_inliers = std::move(inl);
    best_pose = refit;
    if (same) break;
  }

  PoseEstimate out;
  out.pose = best_pose;
  const Eigen::VectorXd err = reprojection_errors(problem, intr, best_pose);
  out.inlier_ids = inliers_of(err, cfg.inlier_threshold);
  double total = 0;
  for (auto i : out.inlier_ids) total += err(i);
  out.mean_reprojection_error = out.inlier_ids.empty() ? 0.0 : total / out.inlier_ids.size();
  out.iterations = it;
  return out;
}

}  // namespace cofi
