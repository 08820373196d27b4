#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cofi/metrics.hpp"
#include "cofi/model.hpp"
#include "cofi/nn/adam.hpp"
#include "cofi/pose_solver.hpp"

namespace cofi {

struct TrainConfig {
  int epochs = 25;
  int batch_size = 1;
  nn::LrSchedule schedule;
  LossConfig loss;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossTerms {
  double total = 0;
  double coarse = 0;
  double fine = 0;
  double classify = 0;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0;
  LossTerms mean;  // averaged over the epoch's steps
};

// One Adam step on the mean joint loss over the batch's scenes. Throws kNumeric
// naming `batch_id` when the loss is not finite; the parameters are left
// untouched in that case.
LossTerms train_step(Model& model, const std::vector<const PreparedScene*>& batch, nn::AdamState& adam,
                     const LossConfig& loss, std::uint64_t step_seed, const std::string& batch_id);

// Epochs over the scenes in a seeded shuffled order.
std::vector<EpochLog> train(Model& model, const std::vector<PreparedScene>& scenes,
                            const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

struct RegisterOptions {
  bool coarse_only = false;  // solve from superpixel centres at fine resolution
  bool fine_only = false;    // skip coarse matching: node points against every fine pixel
  bool mutual = false;
  RansacConfig ransac;
};

struct Registration {
  CorrespondenceSet coarse{PairLevel::kCoarse, {}};
  CorrespondenceSet fine{PairLevel::kFine, {}};
  std::optional<PoseEstimate> estimate;  // empty when pose estimation failed
  std::string failure;
  double frustum_accuracy = 0;  // superpoint classification against the ground truth
  double inference_ms = 0;      // features, attention and matching
  double pose_ms = 0;
};

Registration register_scene(const Model& model, const PreparedScene& prep, const RegisterOptions& opts);

// The correspondences as a PnP problem: cloud points against fine-cell centres.
PnPProblem correspondence_problem(const CorrespondenceSet& fine, const PointCloud& cloud,
                                  const ImagePyramid& pyramid);

struct FrameReport {
  std::string frame;
  double rre = 0;
  double rte = 0;
  double ir = 0;
  Index n_pairs = 0;
  double runtime_ms = 0;
  double frustum_accuracy = 0;
  bool solved = false;
};

// Unsolved frames get infinite RRE/RTE so that they fail every threshold.
FrameReport report_frame(const Registration& reg, const PreparedScene& prep, const ImagePyramid& pyramid,
                         double ir_tau_px);

struct ThresholdRow {
  std::string label;  // "none", "45/10", "10/5"
  double rre_thresh = 0;
  double rte_thresh = 0;
  double recall = 0;
  SummaryStats rre, rte;  // over the frames passing the threshold
};

// Rows for no threshold, 45 deg / 10 m and 10 deg / 5 m.
std::vector<ThresholdRow> aggregate(const std::vector<FrameReport>& frames);

}  // namespace cofi
