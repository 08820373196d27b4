#include "cofi/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

namespace cofi {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<Triplet> coarse_triplets(const ForwardResult& fwd, const SupervisionBatch& truth,
                                     const ImagePyramid& pyramid, double r) {
  std::vector<Triplet> out;
  const nn::Matrix& pts = fwd.coarse_points.features.value();
  for (std::size_t k = 0; k < truth.gt_coarse.pairs.size(); ++k) {
    const Index row = truth.gt_slots[k];
    const Index pos = truth.gt_coarse.pairs[k].pixel;
    try {
      out.push_back({row, pos, mine_negative(pts.row(row).transpose(), fwd.coarse_pixels, pyramid, pos, r)});
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNoNegative) throw;
    }
  }
  return out;
}

std::vector<Triplet> fine_triplets(const ForwardResult& fwd, const SupervisionBatch& truth,
                                   const ImagePyramid& pyramid, const LossConfig& cfg, std::mt19937_64& rng) {
  std::vector<std::size_t> order(truth.fine_positives.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  if (Index(order.size()) > cfg.n_fine_samples) order.resize(std::size_t(cfg.n_fine_samples));

  std::unordered_map<Index, Index> row_of;
  for (Index i = 0; i < fwd.fine_points.size(); ++i) row_of.emplace(fwd.fine_points.ids[i], i);
  const nn::Matrix& pts = fwd.fine_points.features.value();
  const nn::Matrix& pix = fwd.fine_pixels.features.value();

  std::vector<Triplet> out;
  for (std::size_t k : order) {
    const FinePositive& fp = truth.fine_positives[k];
    const Index row = row_of.at(fp.point);
    const auto patch = pyramid.patch_of(fp.coarse_pixel);
    nn::Matrix cand(Index(patch.size()), pix.cols());
    std::vector<Eigen::Vector2i> grid;
    for (std::size_t j = 0; j < patch.size(); ++j) {
      cand.row(Index(j)) = pix.row(patch[j]);
      grid.push_back(pyramid.fine_grid(patch[j]));
    }
    try {
      const Index j = mine_negative(pts.row(row).transpose(), cand, grid, pyramid.fine_grid(fp.fine_pixel),
                                    cfg.fine_safe_radius);
      out.push_back({row, fp.fine_pixel, patch[std::size_t(j)]});
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNoNegative) throw;
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::kConfig, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::kConfig, "batch_size must be >= 1");
  if (!(schedule.initial > 0)) fail(ErrorKind::kConfig, "learning rate must be positive");
  if (!(schedule.factor > 0 && schedule.factor <= 1)) fail(ErrorKind::kConfig, "lr decay factor must be in (0, 1]");
  loss.validate();
}

LossTerms train_step(Model& model, const std::vector<const PreparedScene*>& batch, nn::AdamState& adam,
                     const LossConfig& loss, std::uint64_t step_seed, const std::string& batch_id) {
  if (batch.empty()) fail(ErrorKind::kInsufficientData, "empty batch " + batch_id);
  const ImagePyramid pyramid = model.pyramid();
  std::mt19937_64 rng(step_seed);
  const double w = 1.0 / double(batch.size());
  nn::Tensor total = nn::Tensor::scalar(0.0);
  LossTerms t;
  for (const PreparedScene* prep : batch) {
    const ForwardResult fwd = forward(model, *prep);
    const auto ct = coarse_triplets(fwd, prep->truth, pyramid, loss.safe_radius);
    const auto ft = fine_triplets(fwd, prep->truth, pyramid, loss, rng);
    const nn::Tensor lc = coarse_loss(ct, fwd.coarse_points.features, fwd.coarse_pixels.features, loss);
    const nn::Tensor lf = fine_loss(ft, fwd.fine_points.features, fwd.fine_pixels.features, loss);
    const nn::Tensor lk = frustum_loss(fwd.frustum.scores, prep->truth.labels);
    total = nn::add(total, nn::scale(joint_loss(lc, lf, lk, loss), w));
    t.coarse += w * lc(0, 0);
    t.fine += w * lf(0, 0);
    t.classify += w * lk(0, 0);
  }
  t.total = total(0, 0);
  if (!std::isfinite(t.total)) {
    fail(ErrorKind::kNumeric, "non-finite loss in batch " + batch_id + " (coarse " + std::to_string(t.coarse) +
                                  ", fine " + std::to_string(t.fine) + ", classify " +
                                  std::to_string(t.classify) + ")");
  }
  auto params = model.params.tensors();
  nn::zero_grad(params);
  nn::backward(total);
  nn::adam_step(adam, params);
  return t;
}

std::vector<EpochLog> train(Model& model, const std::vector<PreparedScene>& scenes, const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (scenes.empty()) fail(ErrorKind::kInsufficientData, "no training scenes");
  nn::AdamState adam;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<EpochLog> logs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.lr = cfg.schedule.at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log{epoch + 1, adam.lr, {}};
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
      std::vector<const PreparedScene*> batch;
      std::string id = "epoch " + std::to_string(epoch + 1) + " step " + std::to_string(steps) + " scenes";
      for (std::size_t k = b; k < std::min(order.size(), b + std::size_t(cfg.batch_size)); ++k) {
        batch.push_back(&scenes[order[k]]);
        id += " " + scenes[order[k]].scene->id;
      }
      const LossTerms t = train_step(model, batch, adam, cfg.loss, rng(), id);
      log.mean.total += t.total;
      log.mean.coarse += t.coarse;
      log.mean.fine += t.fine;
      log.mean.classify += t.classify;
      ++steps;
    }
    const double n = double(steps);
    log.mean = {log.mean.total / n, log.mean.coarse / n, log.mean.fine / n, log.mean.classify / n};
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

PnPProblem correspondence_problem(const CorrespondenceSet& fine, const PointCloud& cloud,
                                  const ImagePyramid& pyramid) {
  PnPProblem p;
  p.points.resize(fine.size(), 3);
  p.pixels.resize(fine.size(), 2);
  for (Index i = 0; i < fine.size(); ++i) {
    p.points.row(i) = cloud.points.row(fine.pairs[i].point);
    p.pixels.row(i) = pyramid.fine_center(fine.pairs[i].pixel).transpose();
  }
  return p;
}

Registration register_scene(const Model& model, const PreparedScene& prep, const RegisterOptions& opts) {
  if (opts.coarse_only && opts.fine_only) fail(ErrorKind::kConfig, "coarse_only and fine_only are exclusive");
  const ImagePyramid pyramid = model.pyramid();
  Registration r;
  const auto t0 = Clock::now();
  const ForwardResult fwd = forward(model, prep);
  Index correct = 0;
  for (Index i = 0; i < fwd.frustum.size(); ++i) correct += fwd.frustum.inside(i) == (prep.truth.labels[i] > 0.5);
  r.frustum_accuracy = double(correct) / double(fwd.frustum.size());
  if (opts.fine_only) {
    std::vector<Index> ids;
    for (Index s = 0; s < fwd.frustum.size(); ++s)
      if (fwd.frustum.inside(s))
        for (Index n : prep.hierarchy.node_points[s]) ids.push_back(n);
    r.fine = fine_match_global(ids, fwd.fine_points, fwd.fine_pixels);
  } else {
    r.coarse = coarse_match(fwd.coarse_points, fwd.coarse_pixels, fwd.frustum, opts.mutual);
    r.fine = opts.coarse_only ? coarse_to_fine_cells(r.coarse, pyramid)
                              : fine_match(r.coarse, fwd.fine_points, fwd.fine_pixels, prep.hierarchy, pyramid,
                                           opts.mutual);
  }
  r.inference_ms = ms_since(t0);
  const auto t1 = Clock::now();
  try {
    r.estimate = ransac_epnp(correspondence_problem(r.fine, prep.scene->cloud, pyramid), prep.scene->intrinsics,
                             opts.ransac);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kEstimationFailure && e.kind() != ErrorKind::kInsufficientData &&
        e.kind() != ErrorKind::kDegenerateConfiguration) {
      throw;
    }
    r.failure = e.what();
  }
  r.pose_ms = ms_since(t1);
  return r;
}

FrameReport report_frame(const Registration& reg, const PreparedScene& prep, const ImagePyramid& pyramid,
                         double ir_tau_px) {
  FrameReport f;
  f.frame = prep.scene->id;
  f.n_pairs = reg.fine.size();
  f.runtime_ms = reg.inference_ms + reg.pose_ms;
  f.frustum_accuracy = reg.frustum_accuracy;
  if (!reg.fine.empty()) {
    const PnPProblem p = correspondence_problem(reg.fine, prep.scene->cloud, pyramid);
    f.ir = inlier_ratio(p.points, p.pixels, prep.scene->gt_pose, prep.scene->intrinsics, ir_tau_px);
  }
  f.solved = reg.estimate.has_value();
  if (f.solved) {
    const auto e = rre_rte(prep.scene->gt_pose, reg.estimate->pose);
    f.rre = e.rre;
    f.rte = e.rte;
  } else {
    f.rre = f.rte = std::numeric_limits<double>::infinity();
  }
  return f;
}

std::vector<ThresholdRow> aggregate(const std::vector<FrameReport>& frames) {
  if (frames.empty()) fail(ErrorKind::kUndefinedMetric, "no frames to aggregate");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<ThresholdRow> rows{{"none", inf, inf, 0, {}, {}}, {"45/10", 45, 10, 0, {}, {}}, {"10/5", 10, 5, 0, {}, {}}};
  std::vector<RegistrationResult> results;
  for (const auto& f : frames) results.push_back({f.frame, f.rre, f.rte});
  for (auto& row : rows) {
    std::vector<double> rre, rte;
    for (const auto& f : frames) {
      if (!f.solved || !(f.rre < row.rre_thresh && f.rte < row.rte_thresh)) continue;
      rre.push_back(f.rre);
      rte.push_back(f.rte);
    }
    row.recall = registration_recall(results, row.rre_thresh, row.rte_thresh);
    row.rre = summarize(rre);
    row.rte = summarize(rte);
  }
  return rows;
}

}  // namespace cofi
