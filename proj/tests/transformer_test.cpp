#include "cofi/i2p_transformer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"

namespace {

using cofi::Index;
using cofi::nn::Matrix;
using cofi::nn::Tensor;

cofi::TransformerConfig small_config(Index c = 8, Index qk = 6) {
  cofi::TransformerConfig cfg;
  cfg.channels = c;
  cfg.qk_channels = qk;
  cfg.ffn_hidden = 10;
  cfg.pos_hidden = 5;
  return cfg;
}

cofi::FeatureMap random_map(Index n, Index c, std::mt19937_64& rng, cofi::Modality m) {
  cofi::FeatureMap f;
  for (Index i = 0; i < n; ++i) f.ids.push_back(i);
  f.features = Tensor(cofi::testing::random_matrix(n, c, rng));
  f.modality = m;
  return f;
}

// Row-wise softmax(q k^T / sqrt(d)) v with explicit loops.
Matrix naive_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const Index d = q.cols();
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    std::vector<double> logits(static_cast<std::size_t>(k.rows()));
    double mx = -INFINITY;
    for (Index j = 0; j < k.rows(); ++j) {
      double dot = 0;
      for (Index t = 0; t < d; ++t) dot += q(i, t) * k(j, t);
      logits[j] = dot / std::sqrt(double(d));
      mx = std::max(mx, logits[j]);
    }
    double z = 0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (Index j = 0; j < k.rows(); ++j)
      for (Index t = 0; t < v.cols(); ++t) out(i, t) += logits[j] / z * v(j, t);
  }
  return out;
}

// Layers start as the identity (zero output projections); tests that probe the
// attention path need those weights live.
void randomize_zero_weights(cofi::nn::ParameterSet& params, std::mt19937_64& rng) {
  for (const auto& [name, tensor] : params.entries()) {
    if (name.ends_with("bias") || name.ends_with("beta") || !tensor.value().isZero()) continue;
    cofi::nn::Tensor t = tensor;
    t.mutable_value() = cofi::testing::random_matrix(t.rows(), t.cols(), rng);
  }
}

Matrix project(const Matrix& x, const Matrix& w) {
  Matrix out = Matrix::Zero(x.rows(), w.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j)
      for (Index t = 0; t < x.cols(); ++t) out(i, j) += x(i, t) * w(t, j);
  return out;
}

TEST(PositionalEncode, ZeroMlpLeavesFeatures) {
  std::mt19937_64 rng(1);
  cofi::nn::ParameterSet params;
  const auto mlp = cofi::nn::Mlp::create(params, "pos", {3, 4, 8}, rng);
  for (auto& t : params.tensors()) t.mutable_value().setZero();
  const auto f = random_map(5, 8, rng, cofi::Modality::kPoint);
  const auto out = cofi::positional_encode(f, cofi::testing::random_matrix(5, 3, rng), mlp);
  EXPECT_EQ(out.features.value(), f.features.value());
}

TEST(PositionalEncode, OffsetsFollowCoordinates) {
  std::mt19937_64 rng(2);
  cofi::nn::ParameterSet params;
  const auto mlp = cofi::nn::Mlp::create(params, "pos", {2, 4, 8}, rng);
  cofi::FeatureMap zero{{0, 1, 2, 3}, Tensor(Matrix::Zero(4, 8)), cofi::Level::kCoarse, cofi::Modality::kImage};
  Matrix coords(4, 2);
  coords << 0, 0, 3, 1, 3, 1, 5, 7;
  const Matrix a = cofi::positional_encode(zero, coords, mlp).features.value();
  EXPECT_EQ(a.row(1), a.row(2));
  Matrix swapped = coords;
  swapped.row(0).swap(swapped.row(3));
  const Matrix b = cofi::positional_encode(zero, swapped, mlp).features.value();
  EXPECT_EQ(a.row(0), b.row(3));
  EXPECT_EQ(a.row(3), b.row(0));
  EXPECT_THROW(cofi::positional_encode(zero, Matrix::Zero(3, 2), mlp), cofi::Error);
}

TEST(NormalizeCoords, MapsToUnitBox) {
  Matrix c(3, 2);
  c << 1, 5, 3, 5, 2, 5;
  const Matrix n = cofi::normalize_coords(c);
  EXPECT_DOUBLE_EQ(n(0, 0), -1);
  EXPECT_DOUBLE_EQ(n(1, 0), 1);
  EXPECT_DOUBLE_EQ(n(2, 0), 0);
  EXPECT_EQ(n.col(1), Eigen::VectorXd::Zero(3));
}

TEST(SelfAttention, SingleElementReturnsItsValue) {
  std::mt19937_64 rng(3);
  cofi::nn::ParameterSet params;
  const auto p = cofi::AttentionParams::create(params, "a", small_config(), rng);
  const Tensor x(cofi::testing::random_matrix(1, 8, rng));
  EXPECT_DOUBLE_EQ(cofi::attention_weights(cofi::nn::matmul(x, p.wq), cofi::nn::matmul(x, p.wk)).item(), 1.0);
  EXPECT_TRUE(cofi::attend(x, x, x, p).value().isApprox(x.value() * p.wv.value(), 1e-14));
}

TEST(SelfAttention, IdenticalRowsGiveUniformWeights) {
  std::mt19937_64 rng(4);
  cofi::nn::ParameterSet params;
  const auto p = cofi::AttentionParams::create(params, "a", small_config(), rng);
  Matrix x(5, 8);
  x.rowwise() = cofi::testing::random_matrix(1, 8, rng).row(0);
  const Tensor t(x);
  const Matrix w = cofi::attention_weights(cofi::nn::matmul(t, p.wq), cofi::nn::matmul(t, p.wk)).value();
  EXPECT_TRUE(w.isApprox(Matrix::Constant(5, 5, 0.2), 1e-14));
}

TEST(SelfAttention, HandComputedThreeElements) {
  const Tensor q = Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const Tensor k = Tensor::from_rows({{2, 0}, {0, 0}, {0, 2}});
  const Tensor v = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const Matrix out = cofi::scaled_attention(q, k, v).value();
  const double s = std::sqrt(2.0);
  auto row = [&](double l0, double l1, double l2, int c) {
    const double e0 = std::exp(l0 / s), e1 = std::exp(l1 / s), e2 = std::exp(l2 / s);
    const double vals[3][2] = {{1, 2}, {3, 4}, {5, 6}};
    return (e0 * vals[0][c] + e1 * vals[1][c] + e2 * vals[2][c]) / (e0 + e1 + e2);
  };
  const double logits[3][3] = {{2, 0, 0}, {0, 0, 2}, {2, 0, 2}};
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 2; ++c)
      EXPECT_NEAR(out(i, c), row(logits[i][0], logits[i][1], logits[i][2], c), 1e-10);
}

TEST(SelfAttention, MatchesTripleLoopOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Index n = 1 + Index(seed % 16);
    cofi::nn::ParameterSet params;
    const auto p = cofi::AttentionParams::create(params, "a", small_config(), rng);
    const Matrix x = cofi::testing::random_matrix(n, 8, rng, -2, 2);
    const Matrix want = naive_attention(project(x, p.wq.value()), project(x, p.wk.value()),
                                        project(x, p.wv.value()));
    const Tensor t(x);
    EXPECT_LT((cofi::attend(t, t, t, p).value() - want).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SelfAttention, WeightsAreProbabilities) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor q(cofi::testing::random_matrix(16, 6, rng, -3, 3));
    const Tensor k(cofi::testing::random_matrix(12, 6, rng, -3, 3));
    const Matrix w = cofi::attention_weights(q, k).value();
    for (Index i = 0; i < w.rows(); ++i) EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
    EXPECT_GT(w.minCoeff(), 0.0);
    EXPECT_LT(w.maxCoeff(), 1.0);
  }
}

TEST(SelfAttention, OutputKeepsShape) {
  std::mt19937_64 rng(6);
  cofi::nn::ParameterSet params;
  const auto p = cofi::AttentionParams::create(params, "a", small_config(), rng);
  const auto f = random_map(7, 8, rng, cofi::Modality::kImage);
  const auto out = cofi::self_attention(f, p);
  EXPECT_EQ(out.ids, f.ids);
  EXPECT_EQ(out.features.rows(), 7);
  EXPECT_EQ(out.features.cols(), 8);
}

struct CrossFixture {
  cofi::nn::ParameterSet params;
  cofi::AttentionParams to_points, to_pixels;
  explicit CrossFixture(std::mt19937_64& rng, Index c = 8) {
    to_points = cofi::AttentionParams::create(params, "p", small_config(c), rng);
    to_pixels = cofi::AttentionParams::create(params, "i", small_config(c), rng);
    randomize_zero_weights(params, rng);
  }
};

TEST(CrossAttention, SingleElementsTakeTheirValues) {
  std::mt19937_64 rng(7);
  CrossFixture fx(rng);
  const Tensor p(cofi::testing::random_matrix(1, 8, rng));
  const Tensor i(cofi::testing::random_matrix(1, 8, rng));
  // Query-side values: each output is its own value.
  EXPECT_TRUE(cofi::attend(p, i, p, fx.to_points).value().isApprox(p.value() * fx.to_points.wv.value(), 1e-14));
  // Key-side values: each output is the other modality's value.
  EXPECT_TRUE(cofi::attend(p, i, i, fx.to_points).value().isApprox(i.value() * fx.to_points.wv.value(), 1e-14));
  const cofi::FeatureMap pm{{0}, p, cofi::Level::kCoarse, cofi::Modality::kPoint};
  const cofi::FeatureMap im{{0}, i, cofi::Level::kCoarse, cofi::Modality::kImage};
  const auto [a, b] = cofi::cross_attention(pm, im, fx.to_points, fx.to_pixels, true);
  const Tensor self_update = cofi::nn::matmul(fx.to_points.norm1(p), fx.to_points.wv);
  EXPECT_TRUE(a.features.value().isApprox(
      cofi::attention_tail(p, self_update, fx.to_points).value(), 1e-14));
}

TEST(CrossAttention, ZeroQueryGivesUniformRows) {
  std::mt19937_64 rng(8);
  CrossFixture fx(rng);
  fx.to_points.wq.mutable_value().setZero();
  const Tensor p(cofi::testing::random_matrix(4, 8, rng));
  const Tensor i(cofi::testing::random_matrix(6, 8, rng));
  const Matrix w = cofi::attention_weights(cofi::nn::matmul(p, fx.to_points.wq),
                                           cofi::nn::matmul(i, fx.to_points.wk)).value();
  EXPECT_TRUE(w.isApprox(Matrix::Constant(4, 6, 1.0 / 6), 1e-14));
}

TEST(CrossAttention, HandComputedTwoByThree) {
  // Two point queries against three pixel keys, values from the pixels.
  const Tensor q = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor k = Tensor::from_rows({{1, 1}, {2, 0}, {0, 0}});
  const Tensor v = Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const Matrix out = cofi::scaled_attention(q, k, v).value();
  const double s = std::sqrt(2.0);
  const double a0 = std::exp(1 / s), a1 = std::exp(2 / s), a2 = 1.0;
  const double b0 = std::exp(1 / s), b1 = 1.0, b2 = 1.0;
  EXPECT_NEAR(out(0, 0), (a0 + a2) / (a0 + a1 + a2), 1e-10);
  EXPECT_NEAR(out(0, 1), (a1 + a2) / (a0 + a1 + a2), 1e-10);
  EXPECT_NEAR(out(1, 0), (b0 + b2) / (b0 + b1 + b2), 1e-10);
  EXPECT_NEAR(out(1, 1), (b1 + b2) / (b0 + b1 + b2), 1e-10);
}

TEST(CrossAttention, QuerySideValuesNeedEqualCounts) {
  std::mt19937_64 rng(9);
  CrossFixture fx(rng);
  const auto p = random_map(2, 8, rng, cofi::Modality::kPoint);
  const auto i = random_map(3, 8, rng, cofi::Modality::kImage);
  try {
    cofi::cross_attention(p, i, fx.to_points, fx.to_pixels, true);
    FAIL() << "expected a dimension error";
  } catch (const cofi::Error& e) {
    EXPECT_EQ(e.kind(), cofi::ErrorKind::kDimension);
  }
  EXPECT_NO_THROW(cofi::cross_attention(p, i, fx.to_points, fx.to_pixels, false));
}

TEST(CrossAttention, MatchesTripleLoopOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(50 + seed);
    CrossFixture fx(rng);
    const Index np = 1 + Index(seed % 16), ni = 16 - Index(seed % 16);
    const Matrix p = cofi::testing::random_matrix(np, 8, rng, -2, 2);
    const Matrix i = cofi::testing::random_matrix(ni, 8, rng, -2, 2);
    const auto& a = fx.to_points;
    const Matrix want = naive_attention(project(p, a.wq.value()), project(i, a.wk.value()),
                                        project(i, a.wv.value()));
    EXPECT_LT((cofi::attend(Tensor(p), Tensor(i), Tensor(i), a).value() - want).cwiseAbs().maxCoeff(), 1e-10);
    if (np == ni) {
      const Matrix own = naive_attention(project(p, a.wq.value()), project(i, a.wk.value()),
                                         project(p, a.wv.value()));
      EXPECT_LT((cofi::attend(Tensor(p), Tensor(i), Tensor(p), a).value() - own).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Attention, SixteenElementMapsMatchTripleLoop) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(90 + seed);
    CrossFixture fx(rng);
    const Matrix p = cofi::testing::random_matrix(16, 8, rng, -2, 2);
    const Matrix i = cofi::testing::random_matrix(16, 8, rng, -2, 2);
    for (const auto* a : {&fx.to_points, &fx.to_pixels}) {
      const Matrix qp = project(p, a->wq.value()), kp = project(p, a->wk.value()), vp = project(p, a->wv.value());
      const Matrix ki = project(i, a->wk.value()), vi = project(i, a->wv.value());
      EXPECT_LT((cofi::attend(Tensor(p), Tensor(p), Tensor(p), *a).value() - naive_attention(qp, kp, vp))
                    .cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((cofi::attend(Tensor(p), Tensor(i), Tensor(i), *a).value() - naive_attention(qp, ki, vi))
                    .cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((cofi::attend(Tensor(p), Tensor(i), Tensor(p), *a).value() - naive_attention(qp, ki, vp))
                    .cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(CrossAttention, PointPermutationIsEquivariant) {
  std::mt19937_64 rng(10);
  CrossFixture fx(rng);
  const auto p = random_map(9, 8, rng, cofi::Modality::kPoint);
  const auto i = random_map(11, 8, rng, cofi::Modality::kImage);
  std::vector<Index> perm{3, 0, 8, 1, 7, 2, 6, 5, 4};
  cofi::FeatureMap pp = p;
  pp.features = cofi::nn::gather_rows(p.features, perm);
  for (std::size_t r = 0; r < perm.size(); ++r) pp.ids[r] = p.ids[perm[r]];
  const auto [a0, b0] = cofi::cross_attention(p, i, fx.to_points, fx.to_pixels);
  const auto [a1, b1] = cofi::cross_attention(pp, i, fx.to_points, fx.to_pixels);
  for (std::size_t r = 0; r < perm.size(); ++r)
    EXPECT_LT((a1.features.value().row(Index(r)) - a0.features.value().row(perm[r])).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((b1.features.value() - b0.features.value()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RunStack, OneBlockIsOneExplicitRound) {
  std::mt19937_64 rng(11);
  cofi::nn::ParameterSet params;
  auto cfg = small_config();
  cfg.blocks = 1;
  const auto t = cofi::TransformerParams::create(params, cfg, rng);
  randomize_zero_weights(params, rng);
  const auto p = random_map(5, 8, rng, cofi::Modality::kPoint);
  const auto i = random_map(7, 8, rng, cofi::Modality::kImage);
  const auto [a, b] = cofi::run_stack(p, i, t, cfg);
  const auto sp = cofi::self_attention(p, t.blocks[0].self_points);
  const auto si = cofi::self_attention(i, t.blocks[0].self_pixels);
  const auto [ea, eb] = cofi::cross_attention(sp, si, t.blocks[0].cross_points, t.blocks[0].cross_pixels);
  EXPECT_EQ(a.features.value(), ea.features.value());
  EXPECT_EQ(b.features.value(), eb.features.value());
  const auto [a2, b2] = cofi::run_stack(p, i, t, cfg);
  EXPECT_EQ(a.features.value(), a2.features.value());
  EXPECT_EQ(b.features.value(), b2.features.value());
}

TEST(RunStack, FreshStackIsIdentity) {
  std::mt19937_64 rng(13);
  cofi::nn::ParameterSet params;
  const auto cfg = small_config();
  const auto t = cofi::TransformerParams::create(params, cfg, rng);
  const auto p = random_map(5, 8, rng, cofi::Modality::kPoint);
  const auto i = random_map(7, 8, rng, cofi::Modality::kImage);
  const auto [a, b] = cofi::run_stack(p, i, t, cfg);
  EXPECT_EQ(a.features.value(), p.features.value());
  EXPECT_EQ(b.features.value(), i.features.value());
}

TEST(RunStack, DisabledModulesAreSkipped) {
  std::mt19937_64 rng(12);
  cofi::nn::ParameterSet params;
  auto cfg = small_config();
  const auto t = cofi::TransformerParams::create(params, cfg, rng);
  const auto p = random_map(5, 8, rng, cofi::Modality::kPoint);
  const auto i = random_map(7, 8, rng, cofi::Modality::kImage);
  cfg.self_attention = cfg.cross_attention = false;
  const auto [a, b] = cofi::run_stack(p, i, t, cfg);
  EXPECT_EQ(a.features.value(), p.features.value());
  EXPECT_EQ(b.features.value(), i.features.value());
  EXPECT_THROW(cofi::run_stack(p, i, cofi::TransformerParams{}, cfg), cofi::Error);
}

Tensor weighted(const Tensor& x, const Matrix& w) { return cofi::nn::sum(cofi::nn::mul(x, Tensor(w))); }

TEST(Gradients, SelfAndCrossAttention) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(200 + seed);
    CrossFixture fx(rng, 6);
    const Tensor p(cofi::testing::random_matrix(4, 6, rng), true);
    const Tensor i(cofi::testing::random_matrix(5, 6, rng), true);
    const Matrix wp = cofi::testing::random_matrix(4, 6, rng);
    const Matrix wi = cofi::testing::random_matrix(5, 6, rng);
    auto inputs = fx.params.tensors();
    inputs.push_back(p);
    inputs.push_back(i);
    const double err = cofi::testing::gradcheck(
        [&](const std::vector<Tensor>&) {
          const cofi::FeatureMap pm{{0, 1, 2, 3}, p, cofi::Level::kCoarse, cofi::Modality::kPoint};
          const cofi::FeatureMap im{{0, 1, 2, 3, 4}, i, cofi::Level::kCoarse, cofi::Modality::kImage};
          const auto sp = cofi::self_attention(pm, fx.to_points);
          const auto [a, b] = cofi::cross_attention(sp, im, fx.to_points, fx.to_pixels);
          return cofi::nn::add(weighted(a.features, wp), weighted(b.features, wi));
        },
        inputs);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(Gradients, TwoBlockStackWithPositions) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(300 + seed);
    cofi::nn::ParameterSet params;
    auto cfg = small_config(6, 4);
    cfg.blocks = 2;
    const auto t = cofi::TransformerParams::create(params, cfg, rng);
    randomize_zero_weights(params, rng);
    const auto p = random_map(4, 6, rng, cofi::Modality::kPoint);
    const auto i = random_map(6, 6, rng, cofi::Modality::kImage);
    const Matrix cp = cofi::testing::random_matrix(4, 3, rng);
    const Matrix ci = cofi::testing::random_matrix(6, 2, rng);
    const Matrix wp = cofi::testing::random_matrix(4, 6, rng);
    const Matrix wi = cofi::testing::random_matrix(6, 6, rng);
    const double err = cofi::testing::gradcheck(
        [&](const std::vector<Tensor>&) {
          const auto [a, b] = cofi::run_stack(cofi::positional_encode(p, cp, t.pos_points),
                                              cofi::positional_encode(i, ci, t.pos_pixels), t, cfg);
          return cofi::nn::add(weighted(a.features, wp), weighted(b.features, wi));
        },
        params.tensors());
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

}  // namespace
