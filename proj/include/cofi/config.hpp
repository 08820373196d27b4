#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cofi/data.hpp"
#include "cofi/model.hpp"
#include "cofi/pipeline.hpp"

namespace cofi {

struct DataConfig {
  DataConfig() { synthetic.lidar_fov_deg = 100.0; }

  std::string source = "synthetic";  // synthetic | kitti
  // Synthetic: `scenes` scenes, scene i generated with seed scene_seed + i.
  int scenes = 16;
  std::uint64_t scene_seed = 0;
  SyntheticSceneConfig synthetic;
  // KITTI layout: root/sequences/NN/{velodyne,image_2,calib.txt}, root/poses/NN.txt.
  std::filesystem::path kitti_root;
  std::string split = "train";
  int frame_stride = 1;
  int max_frames = 0;  // per sequence; 0 keeps every frame
  Index kitti_points = 20480;
  // Clouds with more points are subsampled to this many; 0 disables.
  Index point_budget = 0;

  void validate() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "run";
  std::filesystem::path checkpoint;  // empty: output_dir / "model.ckpt"
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  RegisterOptions register_options;
  double ir_tau_px = 2.0;
  int bench_runs = 20;

  std::filesystem::path checkpoint_path() const;
  void validate() const;
};

// TOML text with every field written out, so parse(to_toml(c)) == c.
std::string to_toml(const RunConfig& cfg);
// Missing keys keep their defaults; unknown keys and wrong types are kConfig,
// syntax errors kParse. `source` names the text in messages.
RunConfig parse_config(std::string_view text, std::string_view source = "config");
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace cofi
