#include "cofi/app.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cofi/tensor_io.hpp"

namespace cofi {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.precision(10);
  return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

std::string frame_name(std::size_t frame) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", frame);
  return buf;
}

std::vector<ScenePair> load_kitti(const RunConfig& cfg) {
  const DataConfig& d = cfg.data;
  std::vector<ScenePair> out;
  for (int seq : kitti_sequences(d.split)) {
    char name[8];
    std::snprintf(name, sizeof name, "%02d", seq);
    const auto dir = d.kitti_root / "sequences" / name;
    if (!std::filesystem::is_directory(dir / "velodyne")) continue;
    std::vector<std::filesystem::path> scans;
    for (const auto& e : std::filesystem::directory_iterator(dir / "velodyne"))
      if (e.path().extension() == ".bin") scans.push_back(e.path());
    std::sort(scans.begin(), scans.end());
    int taken = 0;
    for (std::size_t i = 0; i < scans.size(); i += std::size_t(d.frame_stride)) {
      if (d.max_frames > 0 && taken >= d.max_frames) break;
      KittiFrameSpec spec;
      spec.velodyne = scans[i];
      spec.calib = dir / "calib.txt";
      spec.poses = d.kitti_root / "poses" / (std::string(name) + ".txt");
      spec.frame = std::size_t(std::stoul(scans[i].stem().string()));
      spec.image = dir / "image_2" / (frame_name(spec.frame) + ".png");
      spec.n_points = d.kitti_points;
      spec.width = cfg.model.width;
      spec.height = cfg.model.height;
      spec.seed = cfg.seed + out.size();
      ScenePair s = load_kitti_frame(spec);
      s.id = std::string(name) + "/" + s.id;
      out.push_back(std::move(s));
      ++taken;
    }
  }
  if (out.empty()) {
    fail(ErrorKind::kInsufficientData, "no KITTI frames for split '" + d.split + "' under " + d.kitti_root.string());
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<ScenePair> load_scenes(const RunConfig& cfg) {
  cfg.validate();
  std::vector<ScenePair> scenes;
  if (cfg.data.source == "kitti") {
    scenes = load_kitti(cfg);
  } else {
    for (int i = 0; i < cfg.data.scenes; ++i) {
      SyntheticSceneConfig s = cfg.data.synthetic;
      s.width = cfg.model.width;
      s.height = cfg.model.height;
      s.seed = cfg.data.scene_seed + std::uint64_t(i);
      scenes.push_back(generate_synthetic(s));
    }
  }
  if (cfg.data.point_budget > 0) {
    for (std::size_t i = 0; i < scenes.size(); ++i)
      scenes[i].cloud = subsample(scenes[i].cloud, cfg.data.point_budget, cfg.seed + i);
  }
  return scenes;
}

std::vector<PreparedScene> prepare_scenes(const std::vector<ScenePair>& scenes, const RunConfig& cfg) {
  std::vector<PreparedScene> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) out.push_back(prepare_scene(scenes[i], cfg.model, cfg.seed + i));
  return out;
}

Model train_model(const RunConfig& cfg, const std::vector<PreparedScene>& scenes, std::vector<EpochLog>* log,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  Model model = Model::create(cfg.model, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  auto epochs = train(model, scenes, tc, on_epoch);
  if (log) *log = std::move(epochs);
  return model;
}

Model load_model(const RunConfig& cfg, const std::filesystem::path& checkpoint) {
  Model model = Model::create(cfg.model, cfg.seed);
  load_parameters(checkpoint, model.params);
  return model;
}

Evaluation evaluate(const Model& model, const std::vector<PreparedScene>& scenes, const RunConfig& cfg) {
  if (scenes.empty()) fail(ErrorKind::kInsufficientData, "nothing to evaluate");
  Evaluation e;
  const ImagePyramid pyramid = model.pyramid();
  for (const auto& s : scenes) {
    e.frames.push_back(report_frame(register_scene(model, s, cfg.register_options), s, pyramid, cfg.ir_tau_px));
  }
  e.rows = aggregate(e.frames);
  return e;
}

std::vector<StageMacs> model_macs(const Model& model, const PreparedScene& scene) {
  const ImagePyramid p = model.pyramid();
  const Index n_super = scene.hierarchy.size();
  Index fine_points = 0;
  for (const auto& g : scene.hierarchy.groups) fine_points += Index(g.size());
  Index heads = n_super * model.frustum.linear.in() * model.frustum.linear.out();
  if (model.cfg.fuse_fine) {
    heads += fine_points * model.fuse_points.macs_per_row() + p.fine_count() * model.fuse_pixels.macs_per_row();
  }
  return {{"image_backbone", model.image.macs(p)},
          {"point_backbone", model.point.macs(scene.hierarchy)},
          {"transformer", model.transformer.macs(n_super, p.coarse_count(), model.cfg.transformer)},
          {"heads", heads}};
}

BenchReport bench(const Model& model, const PreparedScene& scene, const RunConfig& cfg) {
  BenchReport r;
  r.parameters = model.params.scalar_count();
  r.macs = model_macs(model, scene);
  r.runs = cfg.bench_runs;
  std::vector<double> inference, pose;
  for (int i = 0; i < cfg.bench_runs; ++i) {
    const Registration reg = register_scene(model, scene, cfg.register_options);
    inference.push_back(reg.inference_ms);
    pose.push_back(reg.pose_ms);
  }
  r.inference_ms = median(inference);
  r.pose_ms = median(pose);
  r.fps = 1000.0 / (r.inference_ms + r.pose_ms);
  return r;
}

void write_epoch_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  auto out = open_out(path);
  out << "epoch,lr,total,coarse,fine,classify\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.lr << ',' << e.mean.total << ',' << e.mean.coarse << ',' << e.mean.fine << ','
        << e.mean.classify << '\n';
  }
  close_out(out, path);
}

void write_frames_csv(const std::filesystem::path& path, const std::vector<FrameReport>& frames) {
  auto out = open_out(path);
  out << "frame,rre_deg,rte_m,ir,n_pairs,runtime_ms,frustum_accuracy,solved\n";
  for (const auto& f : frames) {
    out << f.frame << ',' << f.rre << ',' << f.rte << ',' << f.ir << ',' << f.n_pairs << ',' << f.runtime_ms << ','
        << f.frustum_accuracy << ',' << (f.solved ? 1 : 0) << '\n';
  }
  close_out(out, path);
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<ThresholdRow>& rows) {
  auto out = open_out(path);
  out << "threshold,rre_mean,rre_std,rte_mean,rte_std,recall,frames\n";
  for (const auto& r : rows) {
    out << r.label << ',' << r.rre.mean << ',' << r.rre.stddev << ',' << r.rte.mean << ',' << r.rte.stddev << ','
        << r.recall << ',' << r.rre.count << '\n';
  }
  close_out(out, path);
}

void write_correspondences_csv(const std::filesystem::path& path, const Registration& reg,
                               const PreparedScene& scene, const ImagePyramid& pyramid) {
  std::vector<char> inlier(reg.fine.pairs.size(), 0);
  if (reg.estimate)
    for (Index i : reg.estimate->inlier_ids) inlier[std::size_t(i)] = 1;
  auto out = open_out(path);
  out << "point,x,y,z,pixel,u,v,score,inlier\n";
  for (std::size_t i = 0; i < reg.fine.pairs.size(); ++i) {
    const auto& c = reg.fine.pairs[i];
    const auto xyz = scene.scene->cloud.points.row(c.point);
    const Eigen::Vector2d uv = pyramid.fine_center(c.pixel);
    out << c.point << ',' << xyz(0) << ',' << xyz(1) << ',' << xyz(2) << ',' << c.pixel << ',' << uv.x() << ','
        << uv.y() << ',' << c.score << ',' << int(inlier[i]) << '\n';
  }
  close_out(out, path);
}

void write_loss_svg(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  constexpr double kW = 640, kH = 360, kPad = 40;
  double hi = 0;
  for (const auto& e : log) hi = std::max(hi, e.mean.total);
  if (!(hi > 0)) hi = 1;
  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kPad << "\" y=\"" << kPad - 10 << "\" font-size=\"12\">total loss (max " << hi
      << ")</text>\n"
      << "<text x=\"" << kW - kPad << "\" y=\"" << kH - 10 << "\" font-size=\"12\" text-anchor=\"end\">epoch "
      << log.size() << "</text>\n<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
  const double n = std::max<double>(1, double(log.size()) - 1);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const double x = kPad + (kW - 2 * kPad) * double(i) / n;
    const double y = kH - kPad - (kH - 2 * kPad) * std::max(0.0, log[i].mean.total) / hi;
    out << x << ',' << y << ' ';
  }
  out << "\"/>\n</svg>\n";
  close_out(out, path);
}

std::string format_summary(const std::vector<ThresholdRow>& rows) {
  std::ostringstream s;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %-18s %-18s %s\n", "threshold", "RRE (deg)", "RTE (m)", "RR");
  s << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %7.3f +- %-7.3f %7.3f +- %-7.3f %6.2f%%\n", r.label.c_str(), r.rre.mean,
                  r.rre.stddev, r.rte.mean, r.rte.stddev, 100.0 * r.recall);
    s << buf;
  }
  return s.str();
}

}  // namespace cofi
