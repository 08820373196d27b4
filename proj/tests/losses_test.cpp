#include "cofi/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"

namespace {

using cofi::Index;
using cofi::nn::Matrix;
using cofi::nn::Tensor;

cofi::CameraIntrinsics camera() { return {40.0, 40.0, 32.0, 16.0, 64, 32}; }

cofi::LossConfig similarity_config() {
  cofi::LossConfig cfg;
  cfg.fine_form = cofi::FineLossForm::kSimilarity;
  return cfg;
}

TEST(GroundTruth, PrincipalRayAndBehindCamera) {
  cofi::PointCloud cloud;
  cloud.points.resize(3, 3);
  cloud.points << 0, 0, 10,   // on the principal ray
      0, 0, -5,               // behind
      100, 0, 1;              // in front, off the image
  cofi::PointHierarchy h;
  h.superpoints = {0, 1, 2};
  h.groups = {{0}, {1}, {2}};
  h.node_points = h.groups;
  const auto pyr = cofi::build_image_pyramid(64, 32, 8);
  const auto b = cofi::make_ground_truth(cofi::Pose::identity(), camera(), h, cloud, pyr);
  EXPECT_EQ(b.labels, (std::vector<double>{1, 0, 0}));
  ASSERT_EQ(b.gt_coarse.size(), 1);
  EXPECT_EQ(b.gt_coarse.pairs[0].point, 0);
  EXPECT_EQ(b.gt_coarse.pairs[0].pixel, pyr.coarse_cell_at(32.0, 16.0));
  ASSERT_EQ(b.fine_positives.size(), 1u);
  EXPECT_EQ(b.fine_positives[0].fine_pixel, pyr.fine_cell_at(32.0, 16.0));
}

TEST(GroundTruth, LabelsAgreeWithFrustumTest) {
  std::mt19937_64 rng(1);
  cofi::PointCloud cloud;
  cloud.points = cofi::testing::random_matrix(400, 3, rng, -20, 20);
  auto h = cofi::select_node_points(cofi::build_point_hierarchy(cloud, 40, 3.0, 1), cloud, 4, 1);
  const auto pyr = cofi::build_image_pyramid(64, 32, 8);
  const cofi::Pose pose{cofi::rotation_from_euler(Eigen::Vector3d(5, -10, 3)), Eigen::Vector3d(0.5, 0, 2)};
  const auto b = cofi::make_ground_truth(pose, camera(), h, cloud, pyr);
  Index inside = 0;
  for (Index s = 0; s < h.size(); ++s) {
    const bool in = cofi::in_frustum(camera(), pose, cloud.point(h.superpoints[s]));
    EXPECT_EQ(b.labels[s], in ? 1.0 : 0.0);
    inside += in;
  }
  EXPECT_EQ(b.gt_coarse.size(), inside);
  EXPECT_GT(inside, 0);
  for (const auto& f : b.fine_positives) {
    const auto patch = pyr.patch_of(f.coarse_pixel);
    EXPECT_NE(std::find(patch.begin(), patch.end(), f.fine_pixel), patch.end());
    const auto pr = cofi::project(camera(), Eigen::Vector3d(pose * cloud.point(f.point)));
    EXPECT_EQ(pyr.fine_cell_at(pr.u, pr.v), f.fine_pixel);
  }
}

std::vector<Eigen::Vector2i> line_grid(Index n) {
  std::vector<Eigen::Vector2i> g;
  for (Index i = 0; i < n; ++i) g.emplace_back(int(i), 0);
  return g;
}

TEST(MineNegative, ZeroRadiusExcludesOnlyThePositive) {
  Matrix c(4, 2);
  c << 1, 0, 0.9, 0.1, 0, 1, -1, 0;
  EXPECT_EQ(cofi::mine_negative(Eigen::Vector2d(1, 0), c, line_grid(4), {0, 0}, 0.0), 1);
  EXPECT_EQ(cofi::mine_negative(Eigen::Vector2d(1, 0), c, line_grid(4), {1, 0}, 0.0), 0);
}

TEST(MineNegative, OnlyOneBeyondRadius) {
  Matrix c(4, 2);
  c << 1, 0, 0.9, 0.1, 0, 1, -1, 0;
  EXPECT_EQ(cofi::mine_negative(Eigen::Vector2d(1, 0), c, line_grid(4), {0, 0}, 2.5), 3);
  try {
    cofi::mine_negative(Eigen::Vector2d(1, 0), c, line_grid(4), {0, 0}, 3.0);
    FAIL();
  } catch (const cofi::Error& e) {
    EXPECT_EQ(e.kind(), cofi::ErrorKind::kNoNegative);
  }
}

TEST(MineNegative, EqualsFilteredScan) {
  std::mt19937_64 rng(2);
  const auto pyr = cofi::build_image_pyramid(64, 48, 8);
  for (int trial = 0; trial < 100; ++trial) {
    cofi::FeatureMap pixels{{}, Tensor(cofi::testing::random_matrix(pyr.coarse_count(), 5, rng)),
                            cofi::Level::kCoarse, cofi::Modality::kImage};
    for (Index i = 0; i < pyr.coarse_count(); ++i) pixels.ids.push_back(i);
    const Eigen::VectorXd anchor = cofi::testing::random_matrix(5, 1, rng).col(0);
    const Index pos = Index(rng() % pyr.coarse_count());
    const double r = double(trial % 4) * 0.75;
    const Index got = cofi::mine_negative(anchor, pixels, pyr, pos, r);
    Index want = -1;
    double bd = INFINITY;
    for (Index j = 0; j < pyr.coarse_count(); ++j) {
      const Eigen::Vector2i d = pyr.coarse_grid(j) - pyr.coarse_grid(pos);
      if (std::sqrt(double(d.squaredNorm())) <= r) continue;
      const Eigen::VectorXd row = pixels.features.value().row(j).transpose();
      const double dist = 1.0 - anchor.dot(row) / (anchor.norm() * row.norm());
      if (dist < bd) {
        bd = dist;
        want = j;
      }
    }
    EXPECT_EQ(got, want);
    EXPECT_GT((pyr.coarse_grid(got) - pyr.coarse_grid(pos)).cast<double>().norm(), r);
  }
}

// Unit vectors at the given cosine to (1, 0).
Matrix at_cosines(std::initializer_list<double> cs) {
  Matrix m(Index(cs.size()), 2);
  Index i = 0;
  for (double c : cs) m.row(i++) << c, std::sqrt(1 - c * c);
  return m;
}

TEST(CoarseLoss, HingeExamples) {
  const Tensor p = Tensor::from_rows({{1, 0}});
  const cofi::LossConfig cfg;
  const std::vector<cofi::Triplet> t{{0, 0, 1}};
  EXPECT_NEAR(cofi::coarse_loss(t, p, Tensor(Matrix{{1, 0}, {-1, 0}}), cfg).item(), 0.0, 1e-15);
  EXPECT_NEAR(cofi::coarse_loss(t, p, Tensor(at_cosines({0.3, 0.0})), cfg).item(), 1.3, 1e-12);
}

TEST(CoarseLoss, ZeroExactlyWhenAllMarginsHold) {
  std::mt19937_64 rng(3);
  const cofi::LossConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor p(cofi::testing::random_matrix(3, 4, rng));
    const Tensor i(cofi::testing::random_matrix(5, 4, rng));
    std::vector<cofi::Triplet> t{{0, 1, 2}, {1, 0, 4}, {2, 3, 3}};
    const auto [dp, dn] = cofi::triplet_distances(t, p, i);
    bool all = true;
    for (Index k = 0; k < 3; ++k) all &= dp(k, 0) <= cfg.delta_pos && dn(k, 0) >= cfg.delta_neg;
    EXPECT_EQ(cofi::coarse_loss(t, p, i, cfg).item() == 0.0, all);
  }
}

TEST(FineLoss, PerfectSeparationIsNearZero) {
  const auto cfg = similarity_config();
  const double loss = cofi::fine_loss_from_similarity(Tensor::scalar(1.0), Tensor::scalar(-1.0), cfg).item();
  EXPECT_NEAR(loss, std::log1p(std::exp(-10 * 0.2 * 0.8) * std::exp(10 * 0.8 * -2.8)), 1e-15);
  EXPECT_LT(loss, 1e-6);
}

TEST(FineLoss, PositiveWeightClampsAtOnePlusMargin) {
  const auto cfg = similarity_config();
  // alpha_pos = max(0, 1 + 0.2 - 1.3) = 0, so only the negative term remains.
  const double loss = cofi::fine_loss_from_similarity(Tensor::scalar(1.3), Tensor::scalar(0.5), cfg).item();
  EXPECT_NEAR(loss, std::log1p(std::exp(10 * (0.5 + 1.8) * (0.5 - 1.8))), 1e-15);
}

TEST(FineLoss, PrintedFormUsesPositiveSimilarity) {
  auto cfg = similarity_config();
  cfg.fine_form = cofi::FineLossForm::kPrintedSimilarity;
  const double a_pos = 1.2 - 0.4, a_neg = 0.1 + 1.8;
  const double want = std::log1p(std::exp(-10 * a_pos * (0.4 - 0.2) + 10 * a_neg * (0.4 - 1.8)));
  EXPECT_NEAR(cofi::fine_loss_from_similarity(Tensor::scalar(0.4), Tensor::scalar(0.1), cfg).item(), want, 1e-15);
}

TEST(FineLoss, DistanceFormUsesDistanceMargins) {
  cofi::LossConfig cfg;
  cfg.fine_form = cofi::FineLossForm::kDistance;
  // d_pos = 0.6, d_neg = 0.9
  const double want = std::log1p(std::exp(10 * (0.4 * 0.4 + 0.9 * 0.9)));
  EXPECT_NEAR(cofi::fine_loss_from_similarity(Tensor::scalar(0.4), Tensor::scalar(0.1), cfg).item(), want, 1e-12);
  // Both margins met: only the constant log 2 remains.
  EXPECT_NEAR(cofi::fine_loss_from_similarity(Tensor::scalar(0.9), Tensor::scalar(-0.9), cfg).item(), std::log(2.0), 1e-15);
}

TEST(FineLoss, MonotoneInSimilarities) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto form : {cofi::FineLossForm::kSimilarity, cofi::FineLossForm::kDistance}) {
    cofi::LossConfig cfg;
    cfg.fine_form = form;
    for (int trial = 0; trial < 300; ++trial) {
      const double sp = u(rng), sn = u(rng);
      // Gradients with alpha detached: d/ds_pos <= 0, d/ds_neg >= 0.
      Tensor tp = Tensor::scalar(sp, true), tn = Tensor::scalar(sn, true);
      cofi::nn::backward(cofi::fine_loss_from_similarity(tp, tn, cfg));
      EXPECT_LE(tp.grad()(0, 0), 0.0);
      EXPECT_GE(tn.grad()(0, 0), 0.0);
    }
  }
}

TEST(FrustumLoss, Examples) {
  EXPECT_NEAR(cofi::frustum_loss(Tensor::from_rows({{1.0}, {0.0}}), {1, 0}).item(), 0.0, 1e-6);
  EXPECT_NEAR(cofi::frustum_loss(Tensor::from_rows({{0.5}}), {1}).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(cofi::frustum_loss(Tensor::from_rows({{0.5}}), {0}).item(), std::log(2.0), 1e-15);
  EXPECT_THROW(cofi::frustum_loss(Tensor::from_rows({{0.5}}), {0, 1}), cofi::Error);
}

TEST(JointLoss, Weights) {
  cofi::LossConfig cfg;
  const Tensor a = Tensor::scalar(1), b = Tensor::scalar(2), c = Tensor::scalar(3);
  EXPECT_DOUBLE_EQ(cofi::joint_loss(a, b, c, cfg).item(), 6.0);
  cfg.lambda_coarse = cfg.lambda_fine = 0;
  EXPECT_DOUBLE_EQ(cofi::joint_loss(a, b, c, cfg).item(), 3.0);
  cfg.lambda_classify = 0;
  EXPECT_DOUBLE_EQ(cofi::joint_loss(a, b, c, cfg).item(), 0.0);
}

TEST(LossConfig, Validation) {
  cofi::LossConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.delta_pos = 2.0;
  EXPECT_THROW(cfg.validate(), cofi::Error);
  cfg = {};
  cfg.gamma = 0;
  EXPECT_THROW(cfg.validate(), cofi::Error);
  EXPECT_EQ(cofi::parse_fine_loss_form("printed_similarity"), cofi::FineLossForm::kPrintedSimilarity);
  EXPECT_THROW(cofi::parse_fine_loss_form("cosine"), cofi::Error);
}

TEST(Gradients, AllLosses) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor p(cofi::testing::random_matrix(4, 5, rng), true);
    Tensor i(cofi::testing::random_matrix(6, 5, rng), true);
    const std::vector<cofi::Triplet> t{{0, 1, 2}, {1, 3, 0}, {2, 5, 4}, {3, 2, 1}};
    // Margins chosen so the hinges sit in their active range for these draws.
    cofi::LossConfig cfg;
    cfg.delta_pos = 0.05;
    cfg.delta_neg = 1.95;
    EXPECT_LT(cofi::testing::gradcheck([&](const auto&) { return cofi::coarse_loss(t, p, i, cfg); }, {p, i}), 1e-4);
    for (auto form : {cofi::FineLossForm::kSimilarity, cofi::FineLossForm::kPrintedSimilarity,
                      cofi::FineLossForm::kDistance}) {
      cofi::LossConfig fc;
      fc.fine_form = form;
      fc.gamma = 2.0;
      // Alpha factors are constants on the tape, so the oracle differentiates
      // the loss with alpha frozen at the unperturbed similarities.
      const auto [dp, dn] = cofi::triplet_distances(t, p, i);
      const Matrix sp = (1.0 - dp.value().array()).matrix(), sn = (1.0 - dn.value().array()).matrix();
      // Analytic gradient of the library loss against the frozen-alpha oracle.
      p.zero_grad();
      i.zero_grad();
      cofi::nn::backward(cofi::fine_loss(t, p, i, fc));
      const Matrix gp = p.grad(), gi = i.grad();
      Matrix num_p(p.rows(), p.cols()), num_i(i.rows(), i.cols());
      auto frozen_loss = [&]() {
        const auto [dp2, dn2] = cofi::triplet_distances(t, Tensor(p.value()), Tensor(i.value()));
        double total = 0;
        for (Index k = 0; k < 4; ++k) {
          const double s_pos = 1 - dp2(k, 0), s_neg = 1 - dn2(k, 0);
          double z;
          if (form == cofi::FineLossForm::kDistance) {
            const double ap = std::max(0.0, (1 - sp(k, 0)) - fc.delta_pos);
            const double an = std::max(0.0, fc.delta_neg - (1 - sn(k, 0)));
            z = ap * ((1 - s_pos) - fc.delta_pos) + an * (fc.delta_neg - (1 - s_neg));
          } else {
            const double ap = std::max(0.0, 1 + fc.delta_pos - sp(k, 0));
            const double an = std::max(0.0, sn(k, 0) + fc.delta_neg);
            const double s_term = form == cofi::FineLossForm::kPrintedSimilarity ? s_pos : s_neg;
            z = -ap * (s_pos - fc.delta_pos) + an * (s_term - fc.delta_neg);
          }
          total += std::log1p(std::exp(fc.gamma * z));
        }
        return total / 4;
      };
      for (auto [t_ptr, num] : {std::pair{&p, &num_p}, std::pair{&i, &num_i}}) {
        Matrix& w = t_ptr->mutable_value();
        for (Index k = 0; k < w.size(); ++k) {
          const double saved = w.data()[k];
          w.data()[k] = saved + 1e-6;
          const double up = frozen_loss();
          w.data()[k] = saved - 1e-6;
          const double down = frozen_loss();
          w.data()[k] = saved;
          num->data()[k] = (up - down) / 2e-6;
        }
      }
      EXPECT_NEAR(cofi::fine_loss(t, p, i, fc).item(), frozen_loss(), 1e-12);
      const double rel = std::max((gp - num_p).norm() / std::max(num_p.norm(), 1e-8),
                                  (gi - num_i).norm() / std::max(num_i.norm(), 1e-8));
      EXPECT_LT(rel, 1e-4) << "seed " << seed << " form " << cofi::to_string(form);
    }
    const Tensor s(cofi::testing::random_matrix(7, 1, rng, 0.05, 0.95), true);
    std::vector<double> y{1, 0, 1, 1, 0, 0, 1};
    EXPECT_LT(cofi::testing::gradcheck([&](const auto&) { return cofi::frustum_loss(s, y); }, {s}), 1e-4);
    const Tensor a = Tensor::scalar(0.3, true), b = Tensor::scalar(-1.2, true), c = Tensor::scalar(2.0, true);
    cofi::LossConfig jc;
    jc.lambda_fine = 0.5;
    EXPECT_LT(cofi::testing::gradcheck([&](const auto&) { return cofi::joint_loss(a, b, c, jc); }, {a, b, c}), 1e-4);
  }
}

}  // namespace
