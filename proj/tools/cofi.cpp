#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cofi/app.hpp"
#include "cofi/tensor_io.hpp"

namespace {

using namespace cofi;
namespace fs = std::filesystem;

// Exit codes: 0 success, 2 usage, 10 + ErrorKind for library failures.
int exit_code(ErrorKind kind) { return 10 + static_cast<int>(kind); }

struct Common {
  fs::path config;
  fs::path output_dir;
  fs::path checkpoint;
  std::optional<std::uint64_t> seed;

  RunConfig resolve() const {
    RunConfig c = config.empty() ? parse_config("") : load_config(config);
    if (!output_dir.empty()) c.output_dir = output_dir;
    if (!checkpoint.empty()) c.checkpoint = checkpoint;
    if (seed) {
      c.seed = *seed;
      c.train.seed = *seed;
    }
    c.validate();
    fs::create_directories(c.output_dir);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& c, bool needs_checkpoint) {
  cmd->add_option("-c,--config", c.config, "TOML run configuration (defaults when omitted)");
  cmd->add_option("-o,--output-dir", c.output_dir, "Directory for outputs (overrides output_dir)");
  auto* ck = cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint path (overrides checkpoint)");
  if (needs_checkpoint) ck->description("Checkpoint to load (default: output_dir/model.ckpt)");
  cmd->add_option("--seed", c.seed, "Seed (overrides seed)");
}

void print_pose(std::ostream& out, const Pose& p) {
  const Eigen::Matrix4d m = p.matrix();
  char buf[64];
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 4; ++k) {
      std::snprintf(buf, sizeof buf, "%s%.9g", k ? " " : "", m(r, k));
      out << buf;
    }
    out << '\n';
  }
}

int cmd_train(const Common& common, std::optional<int> epochs) {
  RunConfig cfg = common.resolve();
  if (epochs) cfg.train.epochs = *epochs;
  cfg.validate();
  save_config(cfg.output_dir / "config.toml", cfg);
  const auto scenes = load_scenes(cfg);
  const auto prepared = prepare_scenes(scenes, cfg);
  std::vector<EpochLog> log;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Model model = train_model(cfg, prepared, &log, [&](const EpochLog& e) {
      log.push_back(e);
      write_epoch_csv(cfg.output_dir / "epochs.csv", log);
      std::printf("epoch %d lr %.3g loss %.6g (coarse %.6g fine %.6g classify %.6g)\n", e.epoch, e.lr,
                  e.mean.total, e.mean.coarse, e.mean.fine, e.mean.classify);
      std::fflush(stdout);
    });
    save_parameters(cfg.checkpoint_path(), model.params);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kNumeric) {
      std::ofstream dump(cfg.output_dir / "failure.txt");
      dump << e.what() << "\n";
    }
    throw;
  }
  write_epoch_csv(cfg.output_dir / "epochs.csv", log);
  write_loss_svg(cfg.output_dir / "loss.svg", log);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("trained %zu scenes for %d epochs in %.1f s; checkpoint %s\n", scenes.size(), cfg.train.epochs, sec,
              cfg.checkpoint_path().string().c_str());
  return 0;
}

int cmd_register(const Common& common, int scene_index, const fs::path& dump) {
  const RunConfig cfg = common.resolve();
  const Model model = load_model(cfg, cfg.checkpoint_path());
  std::vector<ScenePair> scenes;
  if (!dump.empty()) {
    scenes.push_back(read_scene_dump(dump));
  } else {
    scenes = load_scenes(cfg);
    if (scene_index < 0 || scene_index >= int(scenes.size())) {
      fail(ErrorKind::kConfig, "scene index " + std::to_string(scene_index) + " outside [0, " +
                                   std::to_string(scenes.size()) + ")");
    }
    scenes = {scenes[std::size_t(scene_index)]};
  }
  const PreparedScene prep = prepare_scene(scenes[0], cfg.model, cfg.seed);
  const Registration reg = register_scene(model, prep, cfg.register_options);
  write_correspondences_csv(cfg.output_dir / "correspondences.csv", reg, prep, model.pyramid());
  if (!reg.estimate) {
    fail(ErrorKind::kEstimationFailure, "frame " + scenes[0].id + ": " + reg.failure);
  }
  std::ofstream pose(cfg.output_dir / "pose.txt");
  print_pose(pose, reg.estimate->pose);
  const FrameReport f = report_frame(reg, prep, model.pyramid(), cfg.ir_tau_px);
  std::printf("frame %s: %td pairs, %zu inliers, RRE %.4f deg, RTE %.4f m, IR %.3f, %.1f ms\n", f.frame.c_str(),
              f.n_pairs, reg.estimate->inlier_ids.size(), f.rre, f.rte, f.ir, f.runtime_ms);
  print_pose(std::cout, reg.estimate->pose);
  return 0;
}

int cmd_evaluate(const Common& common) {
  const RunConfig cfg = common.resolve();
  save_config(cfg.output_dir / "config.toml", cfg);
  const Model model = load_model(cfg, cfg.checkpoint_path());
  const auto scenes = load_scenes(cfg);
  const auto prepared = prepare_scenes(scenes, cfg);
  const Evaluation e = evaluate(model, prepared, cfg);
  write_frames_csv(cfg.output_dir / "frames.csv", e.frames);
  write_summary_csv(cfg.output_dir / "summary.csv", e.rows);
  std::cout << format_summary(e.rows);
  return 0;
}

int cmd_bench(const Common& common) {
  const RunConfig cfg = common.resolve();
  const Model model = load_model(cfg, cfg.checkpoint_path());
  auto scenes = load_scenes(cfg);
  scenes.resize(1);
  const PreparedScene prep = prepare_scene(scenes[0], cfg.model, cfg.seed);
  const BenchReport r = bench(model, prep, cfg);
  std::ofstream out(cfg.output_dir / "bench.csv");
  out << "metric,value\nparameters," << r.parameters << '\n';
  std::printf("parameters        %td\n", r.parameters);
  Index total = 0;
  for (const auto& s : r.macs) {
    out << "macs_" << s.stage << ',' << s.macs << '\n';
    std::printf("MACs %-14s %td\n", s.stage.c_str(), s.macs);
    total += s.macs;
  }
  out << "macs_total," << total << "\nruns," << r.runs << "\ninference_ms," << r.inference_ms << "\npose_ms,"
      << r.pose_ms << "\nfps," << r.fps << '\n';
  std::printf("MACs total          %td\nruns %d  inference %.3f ms  pose estimation %.3f ms  (medians)  %.1f FPS\n",
              total, r.runs, r.inference_ms, r.pose_ms, r.fps);
  return 0;
}

int cmd_synth_gen(const Common& common, bool png) {
  RunConfig cfg = common.resolve();
  cfg.data.source = "synthetic";
  save_config(cfg.output_dir / "config.toml", cfg);
  const auto scenes = load_scenes(cfg);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const fs::path stem = cfg.output_dir / scenes[i].id;
    std::ostringstream manifest;
    manifest << "scene_seed = " << cfg.data.scene_seed + i << "\n\n" << to_toml(cfg);
    write_scene_dump(stem, scenes[i], manifest.str());
    if (png) write_png(stem.string() + ".png", scenes[i].image);
  }
  std::printf("wrote %zu scenes to %s\n", scenes.size(), cfg.output_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine image to point cloud registration"};
  app.require_subcommand(1);
  Common common;

  auto* train = app.add_subcommand("train", "Train a model; writes config.toml, epochs.csv, loss.svg, checkpoint");
  add_common(train, common, false);
  std::optional<int> epochs;
  train->add_option("--epochs", epochs, "Epoch count (overrides train.epochs)");

  auto* reg = app.add_subcommand("register", "Register one scene; writes pose.txt and correspondences.csv");
  add_common(reg, common, true);
  int scene_index = 0;
  fs::path dump;
  reg->add_option("--scene", scene_index, "Index into the configured data");
  reg->add_option("--dump", dump, "Scene dump stem written by synth-gen (instead of --scene)");

  auto* eval = app.add_subcommand("evaluate", "Evaluate the configured data; writes frames.csv and summary.csv");
  add_common(eval, common, true);

  auto* bench = app.add_subcommand("bench", "Parameter count, MACs per stage and median timings; writes bench.csv");
  add_common(bench, common, true);

  auto* synth = app.add_subcommand("synth-gen", "Write the configured synthetic scenes as dumps");
  add_common(synth, common, false);
  bool png = false;
  synth->add_flag("--png", png, "Also write each image as PNG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(common, epochs);
    if (*reg) return cmd_register(common, scene_index, dump);
    if (*eval) return cmd_evaluate(common);
    if (*bench) return cmd_bench(common);
    if (*synth) return cmd_synth_gen(common, png);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: io: %s\n", e.what());
    return exit_code(ErrorKind::kIo);
  }
  return 2;
}
