#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cofi/config.hpp"

namespace cofi {

// The scenes named by the data section, with the point budget applied.
std::vector<ScenePair> load_scenes(const RunConfig& cfg);

std::vector<PreparedScene> prepare_scenes(const std::vector<ScenePair>& scenes, const RunConfig& cfg);

// Fresh model seeded from cfg.seed, trained on the prepared scenes.
Model train_model(const RunConfig& cfg, const std::vector<PreparedScene>& scenes,
                  std::vector<EpochLog>* log = nullptr,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Model with cfg.model's architecture and the checkpoint's weights.
Model load_model(const RunConfig& cfg, const std::filesystem::path& checkpoint);

struct Evaluation {
  std::vector<FrameReport> frames;
  std::vector<ThresholdRow> rows;
};

Evaluation evaluate(const Model& model, const std::vector<PreparedScene>& scenes, const RunConfig& cfg);

struct StageMacs {
  std::string stage;
  Index macs = 0;
};

struct BenchReport {
  Index parameters = 0;
  std::vector<StageMacs> macs;
  int runs = 0;
  double inference_ms = 0;  // medians over the runs
  double pose_ms = 0;
  double fps = 0;
};

// Static multiply-accumulate estimate per stage for one forward pass.
std::vector<StageMacs> model_macs(const Model& model, const PreparedScene& scene);
BenchReport bench(const Model& model, const PreparedScene& scene, const RunConfig& cfg);

// CSV writers; the header row is the schema.
// epoch,lr,total,coarse,fine,classify
void write_epoch_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);
// frame,rre_deg,rte_m,ir,n_pairs,runtime_ms,frustum_accuracy,solved
void write_frames_csv(const std::filesystem::path& path, const std::vector<FrameReport>& frames);
// threshold,rre_mean,rre_std,rte_mean,rte_std,recall,frames
void write_summary_csv(const std::filesystem::path& path, const std::vector<ThresholdRow>& rows);
// point,x,y,z,pixel,u,v,score,inlier
void write_correspondences_csv(const std::filesystem::path& path, const Registration& reg,
                               const PreparedScene& scene, const ImagePyramid& pyramid);
// Polyline of the total loss per epoch.
void write_loss_svg(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Aligned text, one line per threshold row.
std::string format_summary(const std::vector<ThresholdRow>& rows);

}  // namespace cofi
