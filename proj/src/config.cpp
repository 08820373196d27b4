#include "cofi/config.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace cofi {

namespace {

std::string where(const toml::node& n) {
  const auto& s = n.source();
  return "line " + std::to_string(s.begin.line) + ", column " + std::to_string(s.begin.column);
}

// Every key lives at a dotted path; the same visit() drives reading and writing.
class Writer {
 public:
  template <typename T>
  void operator()(std::string_view path, const T& v) {
    toml::table* t = &root_;
    std::string_view rest = path;
    for (auto dot = rest.find('.'); dot != std::string_view::npos; dot = rest.find('.')) {
      const std::string key(rest.substr(0, dot));
      if (!t->contains(key)) t->insert(key, toml::table{});
      t = (*t)[key].as_table();
      rest = rest.substr(dot + 1);
    }
    t->insert_or_assign(std::string(rest), encode(v));
  }
  const toml::table& root() const { return root_; }

 private:
  static bool encode(bool v) { return v; }
  static std::int64_t encode(int v) { return v; }
  static std::int64_t encode(long v) { return v; }
  static std::int64_t encode(std::uint64_t v) { return static_cast<std::int64_t>(v); }
  static double encode(double v) { return v; }
  static std::string encode(const std::string& v) { return v; }
  static std::string encode(const std::filesystem::path& v) { return v.generic_string(); }
  static std::string encode(FineLossForm v) { return std::string(to_string(v)); }
  static toml::array encode(const Eigen::Vector3d& v) { return toml::array{v.x(), v.y(), v.z()}; }

  toml::table root_;
};

class Reader {
 public:
  explicit Reader(const toml::table& root, std::string source) : source_(std::move(source)) {
    flatten(root, "");
  }

  template <typename T>
  void operator()(std::string_view path, T& v) {
    const auto it = leaves_.find(std::string(path));
    if (it == leaves_.end()) return;
    decode(*it->second, v, it->first);
    leaves_.erase(it);
  }

  void reject_unknown() const {
    if (leaves_.empty()) return;
    const auto& [key, node] = *leaves_.begin();
    fail(ErrorKind::kConfig, source_ + ": unknown key '" + key + "' at " + where(*node));
  }

 private:
  void flatten(const toml::table& t, const std::string& prefix) {
    for (const auto& [k, node] : t) {
      const std::string key = prefix + std::string(k.str());
      if (const auto* sub = node.as_table()) {
        flatten(*sub, key + ".");
      } else {
        leaves_.emplace(key, &node);
      }
    }
  }

  [[noreturn]] void bad(const toml::node& n, const std::string& key, std::string_view want) const {
    fail(ErrorKind::kConfig, source_ + ": key '" + key + "' at " + where(n) + " must be " + std::string(want));
  }

  std::int64_t integer(const toml::node& n, const std::string& key) const {
    const auto v = n.value_exact<std::int64_t>();
    if (!v) bad(n, key, "an integer");
    return *v;
  }

  void decode(const toml::node& n, bool& out, const std::string& key) const {
    const auto v = n.value_exact<bool>();
    if (!v) bad(n, key, "a boolean");
    out = *v;
  }
  void decode(const toml::node& n, int& out, const std::string& key) const {
    const auto v = integer(n, key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) bad(n, key, "a 32-bit integer");
    out = static_cast<int>(v);
  }
  void decode(const toml::node& n, long& out, const std::string& key) const { out = integer(n, key); }
  void decode(const toml::node& n, std::uint64_t& out, const std::string& key) const {
    const auto v = integer(n, key);
    if (v < 0) bad(n, key, "non-negative");
    out = static_cast<std::uint64_t>(v);
  }
  void decode(const toml::node& n, double& out, const std::string& key) const {
    if (const auto i = n.value_exact<std::int64_t>()) {
      out = static_cast<double>(*i);
      return;
    }
    const auto v = n.value_exact<double>();
    if (!v) bad(n, key, "a number");
    out = *v;
  }
  void decode(const toml::node& n, std::string& out, const std::string& key) const {
    const auto v = n.value_exact<std::string>();
    if (!v) bad(n, key, "a string");
    out = *v;
  }
  void decode(const toml::node& n, std::filesystem::path& out, const std::string& key) const {
    std::string s;
    decode(n, s, key);
    out = s;
  }
  void decode(const toml::node& n, FineLossForm& out, const std::string& key) const {
    std::string s;
    decode(n, s, key);
    try {
      out = parse_fine_loss_form(s);
    } catch (const Error&) {
      bad(n, key, "one of similarity, printed_similarity, distance");
    }
  }
  void decode(const toml::node& n, Eigen::Vector3d& out, const std::string& key) const {
    const auto* a = n.as_array();
    if (!a || a->size() != 3) bad(n, key, "an array of 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) decode(*a->get(i), out(Index(i)), key);
  }

  std::string source_;
  std::map<std::string, const toml::node*> leaves_;
};

template <typename Cfg, typename V>
void visit(Cfg& c, V& v) {
  v("seed", c.seed);
  v("output_dir", c.output_dir);
  v("checkpoint", c.checkpoint);
  v("ir_tau_px", c.ir_tau_px);
  v("bench_runs", c.bench_runs);

  auto& d = c.data;
  v("data.source", d.source);
  v("data.scenes", d.scenes);
  v("data.scene_seed", d.scene_seed);
  v("data.point_budget", d.point_budget);
  v("data.kitti_root", d.kitti_root);
  v("data.split", d.split);
  v("data.frame_stride", d.frame_stride);
  v("data.max_frames", d.max_frames);
  v("data.kitti_points", d.kitti_points);
  auto& s = d.synthetic;
  v("data.synthetic.n_points", s.n_points);
  v("data.synthetic.n_primitives", s.n_primitives);
  v("data.synthetic.jitter_rotation_deg", s.jitter_rotation_deg);
  v("data.synthetic.jitter_translation_m", s.jitter_translation_m);
  v("data.synthetic.focal", s.focal);
  v("data.synthetic.min_range", s.min_range);
  v("data.synthetic.max_range", s.max_range);
  v("data.synthetic.lidar_fov_deg", s.lidar_fov_deg);
  v("data.synthetic.max_retries", s.max_retries);

  auto& m = c.model;
  v("model.width", m.width);
  v("model.height", m.height);
  v("model.patch", m.patch);
  v("model.superpoints", m.superpoints);
  v("model.node_points", m.node_points);
  v("model.group_radius", m.group_radius);
  v("model.frustum_threshold", m.frustum_threshold);
  v("model.polar_positions", m.polar_positions);
  v("model.polar_lo", m.polar_lo);
  v("model.polar_hi", m.polar_hi);
  v("model.fuse_fine", m.fuse_fine);
  auto& b = m.backbone;
  v("model.backbone.coarse_channels", b.coarse_channels);
  v("model.backbone.fine_channels", b.fine_channels);
  v("model.backbone.image_stage1", b.image_stage1);
  v("model.backbone.image_stage2", b.image_stage2);
  v("model.backbone.point_local", b.point_local);
  v("model.backbone.hidden", b.hidden);
  v("model.backbone.use_intensity", b.use_intensity);
  auto& t = m.transformer;
  v("model.transformer.channels", t.channels);
  v("model.transformer.qk_channels", t.qk_channels);
  v("model.transformer.ffn_hidden", t.ffn_hidden);
  v("model.transformer.pos_hidden", t.pos_hidden);
  v("model.transformer.blocks", t.blocks);
  v("model.transformer.values_from_query_side", t.values_from_query_side);

  auto& tr = c.train;
  v("train.epochs", tr.epochs);
  v("train.batch_size", tr.batch_size);
  v("train.lr", tr.schedule.initial);
  v("train.lr_factor", tr.schedule.factor);
  v("train.lr_every_epochs", tr.schedule.every_epochs);
  auto& l = tr.loss;
  v("loss.delta_pos", l.delta_pos);
  v("loss.delta_neg", l.delta_neg);
  v("loss.gamma", l.gamma);
  v("loss.safe_radius", l.safe_radius);
  v("loss.fine_safe_radius", l.fine_safe_radius);
  v("loss.lambda_coarse", l.lambda_coarse);
  v("loss.lambda_fine", l.lambda_fine);
  v("loss.lambda_classify", l.lambda_classify);
  v("loss.n_fine_samples", l.n_fine_samples);
  v("loss.fine_form", l.fine_form);

  auto& r = c.register_options;
  v("register.mutual", r.mutual);
  v("register.ransac.max_iterations", r.ransac.max_iterations);
  v("register.ransac.inlier_threshold", r.ransac.inlier_threshold);
  v("register.ransac.min_sample", r.ransac.min_sample);
  v("register.ransac.confidence", r.ransac.confidence);
  v("register.ransac.seed", r.ransac.seed);
}

// Ablation switches read as negations of the fields they control.
struct Ablation {
  bool disable_self_attention = false;
  bool disable_cross_attention = false;
  bool coarse_only = false;
  bool fine_only = false;

  static Ablation of(const RunConfig& c) {
    return {!c.model.transformer.self_attention, !c.model.transformer.cross_attention,
            c.register_options.coarse_only, c.register_options.fine_only};
  }
  void apply(RunConfig& c) const {
    c.model.transformer.self_attention = !disable_self_attention;
    c.model.transformer.cross_attention = !disable_cross_attention;
    c.register_options.coarse_only = coarse_only;
    c.register_options.fine_only = fine_only;
  }
  template <typename Self, typename V>
  static void visit(Self& a, V& v) {
    v("ablation.disable_self_attention", a.disable_self_attention);
    v("ablation.disable_cross_attention", a.disable_cross_attention);
    v("ablation.coarse_only", a.coarse_only);
    v("ablation.fine_only", a.fine_only);
  }
};

}  // namespace

void DataConfig::validate() const {
  if (source != "synthetic" && source != "kitti") {
    fail(ErrorKind::kConfig, "data.source must be 'synthetic' or 'kitti', got '" + source + "'");
  }
  if (point_budget < 0) fail(ErrorKind::kConfig, "data.point_budget must be >= 0");
  if (source == "synthetic") {
    if (scenes < 1) fail(ErrorKind::kConfig, "data.scenes must be >= 1");
    synthetic.validate();
  } else {
    if (kitti_root.empty()) fail(ErrorKind::kConfig, "data.kitti_root is required for KITTI data");
    if (frame_stride < 1) fail(ErrorKind::kConfig, "data.frame_stride must be >= 1");
    if (max_frames < 0) fail(ErrorKind::kConfig, "data.max_frames must be >= 0");
    if (kitti_points < 1) fail(ErrorKind::kConfig, "data.kitti_points must be >= 1");
    kitti_sequences(split);
  }
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? output_dir / "model.ckpt" : checkpoint;
}

void RunConfig::validate() const {
  data.validate();
  model.validate();
  train.validate();
  register_options.ransac.validate();
  if (register_options.coarse_only && register_options.fine_only) {
    fail(ErrorKind::kConfig, "ablation.coarse_only and ablation.fine_only are exclusive");
  }
  if (!(ir_tau_px > 0)) fail(ErrorKind::kConfig, "ir_tau_px must be positive");
  if (bench_runs < 1) fail(ErrorKind::kConfig, "bench_runs must be >= 1");
}

std::string to_toml(const RunConfig& cfg) {
  Writer w;
  visit(cfg, w);
  const Ablation a = Ablation::of(cfg);
  Ablation::visit(a, w);
  std::ostringstream out;
  out << toml::toml_formatter(w.root(), toml::toml_formatter::default_flags & ~toml::format_flags::indentation)
      << "\n";
  return out.str();
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    fail(ErrorKind::kParse, std::string(source) + ": " + std::string(e.description()) + " at line " +
                                std::to_string(e.source().begin.line) + ", column " +
                                std::to_string(e.source().begin.column));
  }
  RunConfig cfg;
  Reader r(root, std::string(source));
  visit(cfg, r);
  Ablation a = Ablation::of(cfg);
  Ablation::visit(a, r);
  r.reject_unknown();
  a.apply(cfg);
  cfg.data.synthetic.width = cfg.model.width;
  cfg.data.synthetic.height = cfg.model.height;
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << to_toml(cfg);
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

}  // namespace cofi
