#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cofi/app.hpp"
#include "gradcheck.hpp"

namespace {

using cofi::Index;
using cofi::nn::Matrix;
using cofi::nn::Tensor;

cofi::RunConfig tiny_run(int scenes = 2, Index points = 512) {
  cofi::RunConfig c;
  c.data.scenes = scenes;
  c.data.synthetic.n_points = points;
  c.model.superpoints = 16;
  c.model.node_points = 4;
  auto& b = c.model.backbone;
  b.coarse_channels = 8;
  b.fine_channels = 6;
  b.image_stage1 = 6;
  b.image_stage2 = 6;
  b.point_local = 8;
  b.hidden = 8;
  auto& t = c.model.transformer;
  t.channels = 8;
  t.qk_channels = 6;
  t.ffn_hidden = 10;
  t.pos_hidden = 6;
  c.train.epochs = 2;
  c.validate();
  return c;
}

struct Fixture {
  cofi::RunConfig cfg;
  std::vector<cofi::ScenePair> scenes;
  std::vector<cofi::PreparedScene> prepared;

  explicit Fixture(cofi::RunConfig c) : cfg(std::move(c)) {
    scenes = cofi::load_scenes(cfg);
    prepared = cofi::prepare_scenes(scenes, cfg);
  }
};

Tensor weighted(const Tensor& x, const Matrix& w) { return cofi::nn::sum(cofi::nn::mul(x, Tensor(w))); }

TEST(InstanceNorm, ColumnsHaveZeroMeanAndUnitVariance) {
  std::mt19937_64 rng(1);
  const Matrix x = cofi::testing::random_matrix(30, 5, rng, -3, 7);
  const Matrix y = cofi::instance_norm(Tensor(x), 0).value();
  for (Index c = 0; c < 5; ++c) {
    EXPECT_NEAR(y.col(c).mean(), 0, 1e-12);
    EXPECT_NEAR(y.col(c).squaredNorm() / 30, 1, 1e-12);
  }
}

TEST(InstanceNorm, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x(cofi::testing::random_matrix(7, 4, rng), true);
    const Matrix w = cofi::testing::random_matrix(7, 4, rng);
    EXPECT_LT(cofi::testing::gradcheck([&](const auto& in) { return weighted(cofi::instance_norm(in[0]), w); }, {x}),
              1e-4);
  }
}

TEST(PolarCoords, AxesAndRange) {
  Matrix xyz(3, 3);
  xyz << 2, 0, 0, 0, 3, 0, 1, 0, 1;
  const Matrix p = cofi::polar_coords(xyz);
  EXPECT_NEAR(p(0, 0), 0, 1e-12);
  EXPECT_NEAR(p(0, 2), std::log(2.0), 1e-12);
  EXPECT_NEAR(p(1, 0), 90, 1e-12);
  EXPECT_NEAR(p(2, 1), 45, 1e-12);
  EXPECT_NEAR(p(2, 2), std::log(std::sqrt(2.0)), 1e-12);
}

TEST(PrepareScene, HierarchyAndTruthShapes) {
  const Fixture fx(tiny_run(1));
  const auto& p = fx.prepared[0];
  EXPECT_EQ(p.hierarchy.size(), 16);
  EXPECT_EQ(Index(p.truth.labels.size()), 16);
  EXPECT_EQ(p.truth.gt_slots.size(), p.truth.gt_coarse.pairs.size());
  EXPECT_FALSE(p.truth.empty());
  const auto again = cofi::prepare_scene(fx.scenes[0], fx.cfg.model, fx.cfg.seed);
  EXPECT_EQ(again.hierarchy.superpoints, p.hierarchy.superpoints);
  EXPECT_EQ(again.windows, p.windows);
}

// Directional derivative of a weighted sum of every forward output, against
// central differences along the same random direction in parameter space.
TEST(Forward, GradientsMatchFiniteDifferences) {
  const Fixture fx(tiny_run(1, 256));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    cofi::Model model = cofi::Model::create(fx.cfg.model, seed);
    auto params = model.params.tensors();
    const cofi::ForwardResult shape = cofi::forward(model, fx.prepared[0]);
    std::vector<Matrix> w;
    for (const Tensor* t : {&shape.coarse_points.features, &shape.coarse_pixels.features,
                            &shape.fine_points.features, &shape.fine_pixels.features, &shape.frustum.scores})
      w.push_back(cofi::testing::random_matrix(t->rows(), t->cols(), rng));
    auto objective = [&] {
      const cofi::ForwardResult r = cofi::forward(model, fx.prepared[0]);
      Tensor s = weighted(r.coarse_points.features, w[0]);
      s = cofi::nn::add(s, weighted(r.coarse_pixels.features, w[1]));
      s = cofi::nn::add(s, weighted(r.fine_points.features, w[2]));
      s = cofi::nn::add(s, weighted(r.fine_pixels.features, w[3]));
      return cofi::nn::add(s, weighted(r.frustum.scores, w[4]));
    };
    std::vector<Matrix> dir;
    for (auto& p : params) dir.push_back(cofi::testing::random_matrix(p.rows(), p.cols(), rng));
    cofi::nn::zero_grad(params);
    cofi::nn::backward(objective());
    double analytic = 0;
    for (std::size_t k = 0; k < params.size(); ++k) analytic += params[k].grad().cwiseProduct(dir[k]).sum();
    auto shifted = [&](double h) {
      for (std::size_t k = 0; k < params.size(); ++k) params[k].mutable_value() += h * dir[k];
      const double v = objective().item();
      for (std::size_t k = 0; k < params.size(); ++k) params[k].mutable_value() -= h * dir[k];
      return v;
    };
    double rel = INFINITY;
    for (double h : {1e-6, 1e-7}) {
      const double numeric = (shifted(h) - shifted(-h)) / (2 * h);
      rel = std::min(rel, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8}));
    }
    EXPECT_LT(rel, 1e-4) << "seed " << seed;
  }
}

TEST(TrainStep, DeterministicAndBatchIsTheMean) {
  const Fixture fx(tiny_run(2));
  const cofi::LossConfig loss = fx.cfg.train.loss;
  auto step = [&](std::vector<const cofi::PreparedScene*> batch) {
    cofi::Model m = cofi::Model::create(fx.cfg.model, 3);
    cofi::nn::AdamState adam;
    return cofi::train_step(m, batch, adam, loss, 11, "test");
  };
  const auto a = step({&fx.prepared[0]});
  const auto b = step({&fx.prepared[1]});
  const auto ab = step({&fx.prepared[0], &fx.prepared[1]});
  EXPECT_EQ(step({&fx.prepared[0]}).total, a.total);
  EXPECT_NEAR(ab.classify, 0.5 * (a.classify + b.classify), 1e-12);
  EXPECT_NEAR(ab.coarse, 0.5 * (a.coarse + b.coarse), 1e-12);
  EXPECT_GT(a.total, 0);
}

TEST(TrainStep, EmptyBatchIsInsufficientData) {
  cofi::Model m = cofi::Model::create(tiny_run().model, 0);
  cofi::nn::AdamState adam;
  try {
    cofi::train_step(m, {}, adam, {}, 0, "empty");
    FAIL();
  } catch (const cofi::Error& e) {
    EXPECT_EQ(e.kind(), cofi::ErrorKind::kInsufficientData);
  }
}

TEST(Train, SameSeedSameTrajectoryAndLossDrops) {
  cofi::RunConfig cfg = tiny_run(2);
  cfg.train.epochs = 6;
  const Fixture fx(cfg);
  std::vector<cofi::EpochLog> a, b;
  const cofi::Model ma = cofi::train_model(cfg, fx.prepared, &a);
  const cofi::Model mb = cofi::train_model(cfg, fx.prepared, &b);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].mean.total, b[i].mean.total);
  EXPECT_LT(a.back().mean.total, a.front().mean.total);
  EXPECT_EQ(ma.params.tensors()[0].value(), mb.params.tensors()[0].value());
}

TEST(Aggregate, SingleFrameHasZeroSpreadAndUnsolvedFailsEveryThreshold) {
  cofi::FrameReport f{"a", 1.5, 0.2, 0.9, 10, 1.0, 1.0, true};
  auto rows = cofi::aggregate({f});
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.recall, 1.0);
    EXPECT_EQ(r.rre.stddev, 0.0);
    EXPECT_EQ(r.rre.mean, 1.5);
  }
  cofi::FrameReport bad{"b", INFINITY, INFINITY, 0, 0, 1.0, 0.5, false};
  rows = cofi::aggregate({f, bad});
  for (const auto& r : rows) EXPECT_EQ(r.recall, 0.5);
}

TEST(Bench, ParameterCountAndMacs) {
  cofi::RunConfig cfg = tiny_run(1, 1024);
  cfg.bench_runs = 2;
  const Fixture full(cfg);
  const cofi::Model model = cofi::Model::create(cfg.model, 0);
  const auto r = cofi::bench(model, full.prepared[0], cfg);
  Index count = 0;
  for (const auto& t : model.params.tensors()) count += t.rows() * t.cols();
  EXPECT_EQ(r.parameters, count);
  EXPECT_EQ(r.runs, 2);
  EXPECT_GT(r.fps, 0);
  ASSERT_EQ(r.macs.size(), 4u);
  for (const auto& s : r.macs) EXPECT_GT(s.macs, 0) << s.stage;

  cfg.data.point_budget = 512;
  const Fixture half(cfg);
  const auto small = cofi::model_macs(model, half.prepared[0]);
  EXPECT_LT(small[1].macs, r.macs[1].macs);
  EXPECT_EQ(small[0].macs, r.macs[0].macs);
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

TEST(Csv, SchemasAndRowCounts) {
  const auto dir = std::filesystem::temp_directory_path() / "cofi_model_test";
  std::filesystem::remove_all(dir);
  cofi::RunConfig cfg = tiny_run(2);
  const Fixture fx(cfg);
  std::vector<cofi::EpochLog> log;
  const cofi::Model model = cofi::train_model(cfg, fx.prepared, &log);
  const auto e = cofi::evaluate(model, fx.prepared, cfg);
  ASSERT_EQ(e.frames.size(), 2u);
  cofi::write_epoch_csv(dir / "epochs.csv", log);
  cofi::write_frames_csv(dir / "frames.csv", e.frames);
  cofi::write_summary_csv(dir / "summary.csv", e.rows);
  cofi::write_loss_svg(dir / "loss.svg", log);
  const auto reg = cofi::register_scene(model, fx.prepared[0], cfg.register_options);
  cofi::write_correspondences_csv(dir / "pairs.csv", reg, fx.prepared[0], model.pyramid());
  EXPECT_EQ(first_line(dir / "epochs.csv"), "epoch,lr,total,coarse,fine,classify");
  EXPECT_EQ(first_line(dir / "frames.csv"), "frame,rre_deg,rte_m,ir,n_pairs,runtime_ms,frustum_accuracy,solved");
  EXPECT_EQ(first_line(dir / "summary.csv"), "threshold,rre_mean,rre_std,rte_mean,rte_std,recall,frames");
  EXPECT_EQ(first_line(dir / "pairs.csv"), "point,x,y,z,pixel,u,v,score,inlier");
  EXPECT_EQ(first_line(dir / "loss.svg").rfind("<svg", 0), 0u);
  auto lines = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string s;
    int n = 0;
    while (std::getline(in, s)) ++n;
    return n;
  };
  EXPECT_EQ(lines(dir / "epochs.csv"), 1 + cfg.train.epochs);
  EXPECT_EQ(lines(dir / "frames.csv"), 3);
  EXPECT_EQ(lines(dir / "summary.csv"), 4);
  EXPECT_EQ(lines(dir / "pairs.csv"), 1 + int(reg.fine.pairs.size()));
  EXPECT_NE(cofi::format_summary(e.rows).find("10/5"), std::string::npos);
  std::filesystem::remove_all(dir);
}

}  // namespace
