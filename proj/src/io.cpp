#include "viewbench/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "viewbench/error.hpp"

namespace viewbench::io {

namespace fs = std::filesystem;

namespace {

constexpr const char* kGtFormat = "viewbench.ground_truth/1";
constexpr const char* kDetFormat = "viewbench.detections/1";
constexpr const char* kProposalFormat = "viewbench.proposals/1";
constexpr const char* kLogFormat = "viewbench.train_log/1";
constexpr const char* kManifestFormat = "viewbench.dataset/1";
constexpr char kCheckpointMagic[8] = {'V', 'B', 'C', 'K', 'P', 'T', '0', '1'};

[[noreturn]] void parse_fail(const fs::path& path, std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " + msg);
}

std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::strict); }

json box_fields(const std::string& image_id, int class_id, const Box& b) {
  return {{"image_id", image_id}, {"class_id", class_id}, {"x_min", b.x_min},
          {"y_min", b.y_min},     {"x_max", b.x_max},     {"y_max", b.y_max}};
}

double number(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  if (!it->is_number()) throw std::invalid_argument(std::string("field '") + key + "' is not a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("field '") + key + "' is not finite");
  return v;
}

int integer(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  if (!it->is_number_integer()) {
    throw std::invalid_argument(std::string("field '") + key + "' is not an integer");
  }
  return it->get<int>();
}

std::string text(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw std::invalid_argument(std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

Box read_box(const json& j) {
  Box b{number(j, "x_min"), number(j, "y_min"), number(j, "x_max"), number(j, "y_max")};
  if (!b.valid()) throw std::invalid_argument("box has x_min >= x_max or y_min >= y_max");
  return b;
}

// Reads a JSON Lines file: the header on the first nonblank line, then one
// callback per record line. Returns the header (null for an empty file).
template <typename F>
json read_jsonl(const fs::path& path, const char* format, F&& on_record) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  json header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      parse_fail(path, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) parse_fail(path, line_no, "expected a JSON object");
    if (header.is_null()) {
      const auto it = j.find("format");
      if (it == j.end() || !it->is_string() || it->get<std::string>() != format) {
        parse_fail(path, line_no, std::string("expected a header with format '") + format + "'");
      }
      header = std::move(j);
      continue;
    }
    try {
      on_record(j);
    } catch (const std::invalid_argument& e) {
      parse_fail(path, line_no, e.what());
    } catch (const json::exception& e) {
      parse_fail(path, line_no, e.what());
    } catch (const Error& e) {
      parse_fail(path, line_no, e.what());
    }
  }
  return header;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

void write_doubles(std::ostream& out, const std::vector<double>& values) {
  for (double v : values) write_u64(out, std::bit_cast<std::uint64_t>(v));
}

class BinaryReader {
 public:
  BinaryReader(std::istream& in, fs::path path) : in_(in), path_(std::move(path)) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(ErrorCode::kParse, path_.string() + ": truncated file");
    }
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void doubles(std::vector<double>& dst) {
    for (double& v : dst) v = f64();
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  fs::path path_;
};

// --- YAML ---------------------------------------------------------------

class YamlReader {
 public:
  explicit YamlReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Mark& mark, const std::string& msg) const {
    const int line = mark.line >= 0 ? mark.line + 1 : 1;
    throw Error(ErrorCode::kConfigError, source_ + ":" + std::to_string(line) + ": " + msg);
  }

  void expect_map(const YAML::Node& node, const std::string& where) const {
    if (!node.IsMap()) fail(node.Mark(), where + " must be a mapping");
  }

  void check_keys(const YAML::Node& node, const std::set<std::string>& allowed,
                  const std::string& where) const {
    expect_map(node, where);
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first.Mark(), "unknown key '" + key + "' in " + where);
    }
  }

  template <typename T>
  void read(const YAML::Node& parent, const char* key, T& dst) const {
    const YAML::Node node = parent[key];
    if (!node) return;
    try {
      if (!node.IsScalar()) throw YAML::BadConversion(node.Mark());
      dst = node.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(node.Mark(), std::string("bad value for '") + key + "'");
    }
  }

  template <typename T>
  void read_list(const YAML::Node& parent, const char* key, std::vector<T>& dst) const {
    const YAML::Node node = parent[key];
    if (!node) return;
    if (!node.IsSequence()) fail(node.Mark(), std::string("'") + key + "' must be a list");
    std::vector<T> out;
    for (const auto& item : node) {
      try {
        out.push_back(item.as<T>());
      } catch (const YAML::BadConversion&) {
        fail(item.Mark(), std::string("bad list entry in '") + key + "'");
      }
    }
    dst = std::move(out);
  }

  YAML::Mark mark_of(const YAML::Node& parent, const char* key) const {
    const YAML::Node node = parent[key];
    return node ? node.Mark() : parent.Mark();
  }

 private:
  std::string source_;
};

HeadKind parse_head_kind(const std::string& name, bool& ok) {
  ok = true;
  if (name == "regression") return HeadKind::kRegPose;
  if (name == "classification") return HeadKind::kClsPose;
  if (name == "joint_regression") return HeadKind::kJointReg;
  if (name == "joint_classification") return HeadKind::kJointCls;
  ok = false;
  return HeadKind::kClsPose;
}

LossKind parse_loss_kind(const std::string& name, bool& ok) {
  ok = true;
  if (name == "regression") return LossKind::kRegression;
  if (name == "classification") return LossKind::kClassification;
  if (name == "geometric") return LossKind::kGeometricClassification;
  if (name == "joint_regression") return LossKind::kJointRegression;
  if (name == "joint_classification") return LossKind::kJointClassification;
  ok = false;
  return LossKind::kClassification;
}

LossKind default_loss(HeadKind head) {
  switch (head) {
    case HeadKind::kRegPose: return LossKind::kRegression;
    case HeadKind::kClsPose: return LossKind::kClassification;
    case HeadKind::kJointReg: return LossKind::kJointRegression;
    case HeadKind::kJointCls: return LossKind::kJointClassification;
  }
  return LossKind::kClassification;
}

bool is_regression_head(HeadKind kind) {
  return kind == HeadKind::kRegPose || kind == HeadKind::kJointReg;
}

void parse_generator(const YamlReader& r, const YAML::Node& node, GeneratorSection& g) {
  r.check_keys(node,
               {"seed", "train_scenes", "test_scenes", "feature_dim", "min_objects", "max_objects",
                "proposals_per_gt", "test_proposals_per_gt", "background_per_scene",
                "jitter_scale", "min_box_size", "max_box_size", "binary_features",
                "class_weights", "classes"},
               "generator");
  r.read(node, "seed", g.seed);
  r.read(node, "train_scenes", g.train_scenes);
  r.read(node, "test_scenes", g.test_scenes);
  r.read(node, "feature_dim", g.feature_dim);
  r.read(node, "min_objects", g.min_objects);
  r.read(node, "max_objects", g.max_objects);
  r.read(node, "proposals_per_gt", g.proposals_per_gt);
  r.read(node, "test_proposals_per_gt", g.test_proposals_per_gt);
  r.read(node, "background_per_scene", g.background_per_scene);
  r.read(node, "jitter_scale", g.jitter_scale);
  r.read(node, "min_box_size", g.min_box_size);
  r.read(node, "max_box_size", g.max_box_size);
  r.read(node, "binary_features", g.binary_features);
  r.read_list(node, "class_weights", g.class_weights);
  if (const YAML::Node classes = node["classes"]) {
    if (!classes.IsSequence() || classes.size() == 0) {
      r.fail(classes.Mark(), "'classes' must be a nonempty list");
    }
    g.classes.clear();
    for (const auto& item : classes) {
      r.check_keys(item, {"symmetry_order", "noise_sigma", "n_harmonics"}, "generator.classes");
      ClassConfig c;
      r.read(item, "symmetry_order", c.symmetry_order);
      r.read(item, "noise_sigma", c.noise_sigma);
      r.read(item, "n_harmonics", c.n_harmonics);
      if (c.symmetry_order < 1) r.fail(item.Mark(), "symmetry_order must be >= 1");
      if (!(c.noise_sigma >= 0.0)) r.fail(item.Mark(), "noise_sigma must be >= 0");
      if (c.n_harmonics < 1) r.fail(item.Mark(), "n_harmonics must be >= 1");
      g.classes.push_back(c);
    }
  }
  auto check = [&](bool ok, const char* key, const char* msg) {
    if (!ok) r.fail(r.mark_of(node, key), msg);
  };
  check(g.train_scenes >= 0, "train_scenes", "train_scenes must be >= 0");
  check(g.test_scenes >= 0, "test_scenes", "test_scenes must be >= 0");
  check(g.feature_dim >= 2 && g.feature_dim % 2 == 0, "feature_dim",
        "feature_dim must be even and at least 2");
  check(g.min_objects >= 0, "min_objects", "min_objects must be >= 0");
  check(g.max_objects >= g.min_objects, "max_objects", "max_objects must be >= min_objects");
  check(g.proposals_per_gt >= 0, "proposals_per_gt", "proposals_per_gt must be >= 0");
  check(g.test_proposals_per_gt >= 0, "test_proposals_per_gt", "test_proposals_per_gt must be >= 0");
  check(g.background_per_scene >= 0, "background_per_scene", "background_per_scene must be >= 0");
  check(g.jitter_scale >= 0.0, "jitter_scale", "jitter_scale must be >= 0");
  check(g.min_box_size > 0.0 && g.min_box_size <= g.max_box_size, "min_box_size",
        "box sizes must satisfy 0 < min_box_size <= max_box_size");
  check(g.max_box_size < 1.0, "max_box_size", "max_box_size must be < 1");
  check(g.class_weights.empty() || g.class_weights.size() == g.classes.size(), "class_weights",
        "class_weights needs one entry per class");
  for (double w : g.class_weights) check(w >= 0.0, "class_weights", "class weights must be >= 0");
}

void parse_network(const YamlReader& r, const YAML::Node& node, NetConfig& net) {
  r.check_keys(node, {"trunk_widths", "split_depth", "head", "seed"}, "network");
  r.read_list(node, "trunk_widths", net.trunk_widths);
  r.read(node, "split_depth", net.split_depth);
  r.read(node, "seed", net.seed);
  if (const YAML::Node head = node["head"]) {
    r.check_keys(head, {"kind", "embedding", "bins"}, "network.head");
    std::string kind_name = "classification";
    r.read(head, "kind", kind_name);
    bool ok = false;
    const HeadKind kind = parse_head_kind(kind_name, ok);
    if (!ok) r.fail(r.mark_of(head, "kind"), "unknown head kind '" + kind_name + "'");
    if (is_regression_head(kind)) {
      if (head["bins"]) r.fail(head["bins"].Mark(), "'bins' only applies to classification heads");
      std::string emb = "2d";
      r.read(head, "embedding", emb);
      if (emb != "2d" && emb != "3d") r.fail(r.mark_of(head, "embedding"), "embedding must be 2d or 3d");
      const EmbeddingKind ek = emb == "2d" ? EmbeddingKind::kTwoD : EmbeddingKind::kThreeD;
      net.head = kind == HeadKind::kRegPose ? HeadSpec::reg_pose(ek) : HeadSpec::joint_reg(ek);
    } else {
      if (head["embedding"]) {
        r.fail(head["embedding"].Mark(), "'embedding' only applies to regression heads");
      }
      int bins = 24;
      r.read(head, "bins", bins);
      if (bins < 2) r.fail(r.mark_of(head, "bins"), "bins must be >= 2");
      net.head = kind == HeadKind::kClsPose ? HeadSpec::cls_pose(bins) : HeadSpec::joint_cls(bins);
    }
  }
  for (int w : net.trunk_widths) {
    if (w < 1) r.fail(r.mark_of(node, "trunk_widths"), "trunk widths must be >= 1");
  }
  if (net.split_depth < 0 || net.split_depth > static_cast<int>(net.trunk_widths.size())) {
    r.fail(r.mark_of(node, "split_depth"), "split_depth must lie in [0, number of trunk layers]");
  }
}

void parse_training(const YamlReader& r, const YAML::Node& node, RunConfig& cfg) {
  TrainConfig& t = cfg.training;
  r.check_keys(node,
               {"lr", "momentum", "weight_decay", "batch_size", "positive_fraction",
                "lr_decay_factor", "decay_at_iter", "total_iters", "flip_augment", "seed",
                "log_interval", "checkpoint_interval"},
               "training");
  r.read(node, "lr", t.lr);
  r.read(node, "momentum", t.momentum);
  r.read(node, "weight_decay", t.weight_decay);
  r.read(node, "batch_size", t.batch_size);
  r.read(node, "positive_fraction", t.positive_fraction);
  r.read(node, "lr_decay_factor", t.lr_decay_factor);
  r.read(node, "decay_at_iter", t.decay_at_iter);
  r.read(node, "total_iters", t.total_iters);
  r.read(node, "flip_augment", t.flip_augment);
  r.read(node, "seed", t.seed);
  r.read(node, "log_interval", t.log_interval);
  r.read(node, "checkpoint_interval", cfg.checkpoint_interval);
  try {
    t.validate();
  } catch (const Error& e) {
    r.fail(node.Mark(), e.what());
  }
  if (cfg.checkpoint_interval < 0) {
    r.fail(r.mark_of(node, "checkpoint_interval"), "checkpoint_interval must be >= 0");
  }
}

void parse_loss(const YamlReader& r, const YAML::Node& node, RunConfig& cfg, bool& kind_given) {
  r.check_keys(node, {"kind", "sigma", "lambda", "huber_delta"}, "loss");
  if (node["kind"]) {
    std::string name;
    r.read(node, "kind", name);
    bool ok = false;
    cfg.loss.kind = parse_loss_kind(name, ok);
    if (!ok) r.fail(node["kind"].Mark(), "unknown loss kind '" + name + "'");
    kind_given = true;
  }
  if (node["sigma"]) {
    double sigma = 0.0;
    r.read(node, "sigma", sigma);
    if (!(sigma > 0.0)) r.fail(node["sigma"].Mark(), "sigma must be > 0");
    cfg.loss.sigma = sigma;
  }
  r.read(node, "lambda", cfg.loss.lambda);
  r.read(node, "huber_delta", cfg.loss.huber_delta);
  if (!(cfg.loss.lambda >= 0.0)) r.fail(r.mark_of(node, "lambda"), "lambda must be >= 0");
  if (!(cfg.loss.huber_delta > 0.0)) r.fail(r.mark_of(node, "huber_delta"), "huber_delta must be > 0");
}

json head_json(const HeadSpec& head) {
  return {{"kind", head_kind_name(head.kind)}, {"pose_width", head.pose_width}};
}

std::vector<ClassSpec> make_classes(const GeneratorSection& g) {
  SuiteOptions opt;
  opt.seed = g.seed;
  opt.feature_dim = g.feature_dim;
  opt.symmetry_orders.clear();
  for (const ClassConfig& c : g.classes) opt.symmetry_orders.push_back(c.symmetry_order);
  const BenchmarkSuite suite = default_suite(opt);
  std::vector<ClassSpec> classes;
  for (std::size_t c = 0; c < g.classes.size(); ++c) {
    classes.push_back(make_class_spec(static_cast<int>(c) + 1, g.feature_dim,
                                      g.classes[c].symmetry_order, g.classes[c].noise_sigma,
                                      suite.classes[c].seed, g.classes[c].n_harmonics));
  }
  return classes;
}

json class_json(const ClassSpec& s) {
  return {{"class_id", s.class_id},
          {"symmetry_order", s.symmetry_order},
          {"noise_sigma", s.noise_sigma},
          {"n_harmonics", s.n_harmonics},
          {"seed", s.seed}};
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

// --- StagedFiles ---------------------------------------------------------

StagedFiles::~StagedFiles() {
  if (committed_) return;
  for (Entry& e : entries_) {
    e.stream.reset();
    std::error_code ec;
    fs::remove(e.temp, ec);
  }
}

std::ostream& StagedFiles::open(const fs::path& target, bool binary) {
  Entry e;
  e.target = target;
  e.temp = target;
  e.temp += ".tmp" + std::to_string(entries_.size());
  auto mode = std::ios::out | std::ios::trunc;
  if (binary) mode |= std::ios::binary;
  e.stream = std::make_unique<std::ofstream>(e.temp, mode);
  if (!*e.stream) throw Error(ErrorCode::kIo, "cannot write " + target.string());
  entries_.push_back(std::move(e));
  return *entries_.back().stream;
}

void StagedFiles::commit() {
  for (Entry& e : entries_) {
    e.stream->flush();
    if (!*e.stream) throw Error(ErrorCode::kIo, "write failed for " + e.target.string());
    e.stream->close();
  }
  for (Entry& e : entries_) {
    std::error_code ec;
    fs::rename(e.temp, e.target, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot move " + e.temp.string() + " into place: " + ec.message());
  }
  committed_ = true;
}

// --- records -------------------------------------------------------------

json to_json(const GroundTruthRecord& r) {
  json j = box_fields(r.image_id, r.class_id, r.box);
  j["azimuth_deg"] = r.azimuth.degrees();
  return j;
}

json to_json(const DetectionRecord& r) {
  json j = box_fields(r.image_id, r.class_id, r.box);
  j["score"] = r.score;
  j["azimuth_pred_deg"] = r.azimuth_pred.degrees();
  return j;
}

GroundTruthRecord ground_truth_from_json(const json& j) {
  GroundTruthRecord r;
  r.image_id = text(j, "image_id");
  r.class_id = integer(j, "class_id");
  if (r.class_id < 1) throw std::invalid_argument("class_id must be >= 1");
  r.box = read_box(j);
  r.azimuth = AngleRad::from_degrees(number(j, "azimuth_deg"));
  return r;
}

DetectionRecord detection_from_json(const json& j) {
  DetectionRecord r;
  r.image_id = text(j, "image_id");
  r.class_id = integer(j, "class_id");
  if (r.class_id < 1) throw std::invalid_argument("class_id must be >= 1");
  r.box = read_box(j);
  r.score = number(j, "score");
  r.azimuth_pred = AngleRad::from_degrees(number(j, "azimuth_pred_deg"));
  return r;
}

void write_ground_truth(std::ostream& out, std::span<const GroundTruthRecord> records,
                        const json& provenance) {
  out << dump_line({{"format", kGtFormat}, {"count", records.size()}, {"provenance", provenance}})
      << '\n';
  for (const auto& r : records) out << dump_line(to_json(r)) << '\n';
}

void write_detections(std::ostream& out, std::span<const DetectionRecord> records,
                      const json& provenance) {
  out << dump_line({{"format", kDetFormat}, {"count", records.size()}, {"provenance", provenance}})
      << '\n';
  for (const auto& r : records) out << dump_line(to_json(r)) << '\n';
}

std::vector<GroundTruthRecord> read_ground_truth(const fs::path& path) {
  std::vector<GroundTruthRecord> out;
  read_jsonl(path, kGtFormat, [&](const json& j) { out.push_back(ground_truth_from_json(j)); });
  return out;
}

std::vector<DetectionRecord> read_detections(const fs::path& path) {
  std::vector<DetectionRecord> out;
  read_jsonl(path, kDetFormat, [&](const json& j) { out.push_back(detection_from_json(j)); });
  return out;
}

// --- run configuration ---------------------------------------------------

RunConfig parse_run_config(const std::string& text_in, const std::string& source_name) {
  const YamlReader r(source_name);
  YAML::Node root;
  try {
    root = YAML::Load(text_in);
  } catch (const YAML::ParserException& e) {
    r.fail(e.mark, e.msg);
  }
  RunConfig cfg;
  if (root.IsNull()) return cfg;
  r.check_keys(root, {"generator", "network", "training", "loss", "paths", "predict"}, "config");
  if (root["generator"]) parse_generator(r, root["generator"], cfg.generator);
  if (root["network"]) parse_network(r, root["network"], cfg.network);
  if (root["training"]) parse_training(r, root["training"], cfg);
  bool loss_given = false;
  if (root["loss"]) parse_loss(r, root["loss"], cfg, loss_given);
  if (!loss_given) cfg.loss.kind = default_loss(cfg.network.head.kind);
  if (!loss_matches_head(cfg.loss.kind, cfg.network.head.kind)) {
    r.fail(r.mark_of(root, "loss"), "loss '" + loss_kind_name(cfg.loss.kind) +
                                        "' does not fit head '" +
                                        head_kind_name(cfg.network.head.kind) + "'");
  }
  if (const YAML::Node paths = root["paths"]) {
    r.check_keys(paths, {"dataset_dir", "output_dir"}, "paths");
    r.read(paths, "dataset_dir", cfg.dataset_dir);
    r.read(paths, "output_dir", cfg.output_dir);
  }
  if (const YAML::Node predict = root["predict"]) {
    r.check_keys(predict, {"score_floor"}, "predict");
    r.read(predict, "score_floor", cfg.score_floor);
  }
  cfg.network.input_dim = cfg.generator.feature_dim;
  cfg.network.n_classes = static_cast<int>(cfg.generator.classes.size());
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, path.string() + ":1: cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::string head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::kRegPose: return "regression";
    case HeadKind::kClsPose: return "classification";
    case HeadKind::kJointReg: return "joint_regression";
    case HeadKind::kJointCls: return "joint_classification";
  }
  return "unknown";
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kRegression: return "regression";
    case LossKind::kClassification: return "classification";
    case LossKind::kGeometricClassification: return "geometric";
    case LossKind::kJointRegression: return "joint_regression";
    case LossKind::kJointClassification: return "joint_classification";
  }
  return "unknown";
}

json to_json(const NetConfig& c) {
  return {{"input_dim", c.input_dim}, {"trunk_widths", c.trunk_widths},
          {"split_depth", c.split_depth}, {"head", head_json(c.head)},
          {"n_classes", c.n_classes}, {"seed", c.seed}};
}

json to_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"momentum", t.momentum},
          {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size},
          {"positive_fraction", t.positive_fraction},
          {"lr_decay_factor", t.lr_decay_factor},
          {"decay_at_iter", t.decay_at_iter},
          {"total_iters", t.total_iters},
          {"flip_augment", t.flip_augment},
          {"seed", t.seed},
          {"log_interval", t.log_interval}};
}

json to_json(const LossSpec& s) {
  json j = {{"kind", loss_kind_name(s.kind)}, {"lambda", s.lambda}, {"huber_delta", s.huber_delta}};
  j["sigma"] = s.sigma ? json(*s.sigma) : json(nullptr);
  return j;
}

json to_json(const RunConfig& c) {
  const GeneratorSection& g = c.generator;
  json classes = json::array();
  for (const ClassConfig& k : g.classes) {
    classes.push_back({{"symmetry_order", k.symmetry_order},
                       {"noise_sigma", k.noise_sigma},
                       {"n_harmonics", k.n_harmonics}});
  }
  json gen = {{"seed", g.seed},
              {"train_scenes", g.train_scenes},
              {"test_scenes", g.test_scenes},
              {"feature_dim", g.feature_dim},
              {"min_objects", g.min_objects},
              {"max_objects", g.max_objects},
              {"proposals_per_gt", g.proposals_per_gt},
              {"test_proposals_per_gt", g.test_proposals_per_gt},
              {"background_per_scene", g.background_per_scene},
              {"jitter_scale", g.jitter_scale},
              {"min_box_size", g.min_box_size},
              {"max_box_size", g.max_box_size},
              {"binary_features", g.binary_features},
              {"class_weights", g.class_weights},
              {"classes", classes}};
  json training = to_json(c.training);
  training["checkpoint_interval"] = c.checkpoint_interval;
  return {{"generator", gen},
          {"network", to_json(c.network)},
          {"training", training},
          {"loss", to_json(c.loss)},
          {"paths", {{"dataset_dir", c.dataset_dir}, {"output_dir", c.output_dir}}},
          {"predict", {{"score_floor", c.score_floor}}}};
}

NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.trunk_widths = j.at("trunk_widths").get<std::vector<int>>();
  c.split_depth = j.at("split_depth").get<int>();
  const json& head = j.at("head");
  bool ok = false;
  c.head.kind = parse_head_kind(head.at("kind").get<std::string>(), ok);
  if (!ok) throw Error(ErrorCode::kParse, "unknown head kind in checkpoint");
  c.head.pose_width = head.at("pose_width").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

LossSpec loss_spec_from_json(const json& j) {
  LossSpec s;
  bool ok = false;
  s.kind = parse_loss_kind(j.at("kind").get<std::string>(), ok);
  if (!ok) throw Error(ErrorCode::kParse, "unknown loss kind in checkpoint");
  s.lambda = j.at("lambda").get<double>();
  s.huber_delta = j.at("huber_delta").get<double>();
  if (!j.at("sigma").is_null()) s.sigma = j.at("sigma").get<double>();
  return s;
}

// --- datasets ------------------------------------------------------------

DatasetFiles generate_datasets(const GeneratorSection& g) {
  const std::vector<ClassSpec> classes = make_classes(g);
  SuiteOptions opt;
  opt.seed = g.seed;
  opt.feature_dim = g.feature_dim;
  const BenchmarkSuite suite = default_suite(opt);

  GeneratorConfig train = suite.train;
  train.n_scenes = g.train_scenes;
  train.min_objects = g.min_objects;
  train.max_objects = g.max_objects;
  train.proposals_per_gt = g.proposals_per_gt;
  train.background_per_scene = g.background_per_scene;
  train.jitter_scale = g.jitter_scale;
  train.min_box_size = g.min_box_size;
  train.max_box_size = g.max_box_size;
  train.class_weights = g.class_weights;
  GeneratorConfig test = train;
  test.seed = suite.test.seed;
  test.split = "test";
  test.n_scenes = g.test_scenes;
  test.proposals_per_gt = g.test_proposals_per_gt;

  DatasetFiles files;
  files.train = generate(train, classes);
  files.test = generate(test, classes);
  json class_list = json::array();
  for (const ClassSpec& s : classes) class_list.push_back(class_json(s));
  files.manifest = {{"format", kManifestFormat},
                    {"feature_dim", g.feature_dim},
                    {"n_classes", classes.size()},
                    {"classes", class_list}};
  return files;
}

void write_dataset(const fs::path& dir, const DatasetFiles& files, const json& provenance,
                   bool binary_features) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create output directory " + dir.string());
  }
  json manifest = files.manifest;
  manifest["binary_features"] = binary_features;
  manifest["provenance"] = provenance;
  json splits = json::object();

  StagedFiles staged;
  for (const Dataset* ds : {&files.train, &files.test}) {
    const std::string& split = ds->split;
    const auto gts = ground_truth(*ds);
    write_ground_truth(staged.open(dir / (split + ".gt.jsonl")), gts, provenance);

    std::ostream& props = staged.open(dir / (split + ".proposals.jsonl"));
    props << dump_line({{"format", kProposalFormat},
                        {"count", ds->sample_count()},
                        {"feature_dim", ds->feature_dim},
                        {"binary_features", binary_features},
                        {"provenance", provenance}})
          << '\n';
    std::ostream* bin = binary_features ? &staged.open(dir / (split + ".features.bin"), true) : nullptr;
    for (const Scene& scene : ds->scenes) {
      for (const Proposal& p : scene.proposals) {
        int class_id = 0;
        json line = box_fields(scene.image_id, 0, p.box);
        if (p.matched_gt) {
          class_id = scene.gt[*p.matched_gt].class_id;
          line["matched_gt"] = *p.matched_gt;
        } else {
          line["matched_gt"] = nullptr;
        }
        line["class_id"] = class_id;
        line["iou"] = p.iou;
        line["noise_seed"] = p.noise_seed;
        if (bin) {
          write_doubles(*bin, p.feature);
        } else {
          line["feature"] = p.feature;
        }
        props << dump_line(line) << '\n';
      }
    }
    json files_json = {{"ground_truth", split + ".gt.jsonl"}, {"proposals", split + ".proposals.jsonl"}};
    if (binary_features) files_json["features"] = split + ".features.bin";
    splits[split] = {{"scenes", ds->scenes.size()},
                     {"ground_truth", gts.size()},
                     {"proposals", ds->sample_count()},
                     {"foreground", ds->foreground_count()},
                     {"files", files_json}};
  }
  manifest["splits"] = splits;
  staged.open(dir / "manifest.json") << manifest.dump(2) << '\n';
  staged.commit();
}

json read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  if (!m.is_object() || m.value("format", "") != kManifestFormat) {
    throw Error(ErrorCode::kParse, path.string() + ": not a dataset manifest");
  }
  return m;
}

Dataset read_dataset_split(const fs::path& dir, const std::string& split) {
  const json manifest = read_manifest(dir);
  if (!manifest.contains("splits") || !manifest["splits"].contains(split)) {
    throw Error(ErrorCode::kParse, (dir / "manifest.json").string() + ": no split '" + split + "'");
  }
  Dataset ds;
  ds.split = split;
  try {
    ds.feature_dim = manifest.at("feature_dim").get<int>();
    for (const json& c : manifest.at("classes")) {
      ds.class_specs.push_back(make_class_spec(
          c.at("class_id").get<int>(), ds.feature_dim, c.at("symmetry_order").get<int>(),
          c.at("noise_sigma").get<double>(), c.at("seed").get<std::uint64_t>(),
          c.at("n_harmonics").get<int>()));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, (dir / "manifest.json").string() + ": " + e.what());
  }
  const bool binary = manifest.value("binary_features", false);
  const int n_classes = static_cast<int>(ds.class_specs.size());

  std::map<std::string, std::size_t> scene_index;
  auto scene_for = [&](const std::string& id) -> Scene& {
    auto [it, inserted] = scene_index.emplace(id, ds.scenes.size());
    if (inserted) {
      ds.scenes.push_back({});
      ds.scenes.back().image_id = id;
    }
    return ds.scenes[it->second];
  };

  const fs::path gt_path = dir / (split + ".gt.jsonl");
  read_jsonl(gt_path, kGtFormat, [&](const json& j) {
    GroundTruthRecord g = ground_truth_from_json(j);
    if (g.class_id > n_classes) throw std::invalid_argument("class_id exceeds the manifest's classes");
    scene_for(g.image_id).gt.push_back(std::move(g));
  });

  std::ifstream bin;
  const fs::path bin_path = dir / (split + ".features.bin");
  if (binary) {
    bin.open(bin_path, std::ios::binary);
    if (!bin) throw Error(ErrorCode::kIo, "cannot open " + bin_path.string());
  }
  BinaryReader bin_reader(bin, bin_path);
  const fs::path prop_path = dir / (split + ".proposals.jsonl");
  read_jsonl(prop_path, kProposalFormat, [&](const json& j) {
    Proposal p;
    p.box = read_box(j);
    Scene& scene = scene_for(text(j, "image_id"));
    const json& m = j.at("matched_gt");
    if (!m.is_null()) {
      const auto gi = m.get<std::size_t>();
      if (gi >= scene.gt.size()) throw std::invalid_argument("matched_gt out of range");
      if (scene.gt[gi].class_id != integer(j, "class_id")) {
        throw std::invalid_argument("class_id disagrees with the matched ground truth");
      }
      p.matched_gt = gi;
    }
    p.iou = number(j, "iou");
    p.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    p.feature.assign(static_cast<std::size_t>(ds.feature_dim), 0.0);
    if (binary) {
      bin_reader.doubles(p.feature);
    } else {
      p.feature = j.at("feature").get<std::vector<double>>();
      if (p.feature.size() != static_cast<std::size_t>(ds.feature_dim)) {
        throw std::invalid_argument("feature has the wrong dimension");
      }
    }
    scene.proposals.push_back(std::move(p));
  });
  if (binary && !bin_reader.at_end()) {
    throw Error(ErrorCode::kParse, bin_path.string() + ": trailing data");
  }
  return ds;
}

// --- checkpoints ---------------------------------------------------------

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  const json header = {{"net", to_json(ck.net)},
                       {"loss", to_json(ck.loss)},
                       {"iteration", ck.iteration},
                       {"provenance", ck.provenance}};
  const std::string text = header.dump();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const LayerSet& w = ck.params.weights;
  const LayerSet& v = ck.params.velocity;
  const std::vector<Dense>* wstacks[] = {&w.trunk, &w.branch, &w.pose_branch};
  const std::vector<Dense>* vstacks[] = {&v.trunk, &v.branch, &v.pose_branch};
  for (int s = 0; s < 3; ++s) {
    write_u32(out, static_cast<std::uint32_t>(wstacks[s]->size()));
    for (std::size_t l = 0; l < wstacks[s]->size(); ++l) {
      const Dense& layer = (*wstacks[s])[l];
      const Dense& vel = (*vstacks[s])[l];
      write_u32(out, static_cast<std::uint32_t>(layer.out_dim));
      write_u32(out, static_cast<std::uint32_t>(layer.in_dim));
      write_doubles(out, layer.weight);
      write_doubles(out, layer.bias);
      write_doubles(out, vel.weight);
      write_doubles(out, vel.bias);
    }
  }
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  BinaryReader r(in, path);
  char magic[sizeof kCheckpointMagic];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + sizeof magic, kCheckpointMagic)) {
    throw Error(ErrorCode::kParse, path.string() + ": not a viewbench checkpoint");
  }
  const std::uint64_t len = r.u64();
  if (len > (1u << 26)) throw Error(ErrorCode::kParse, path.string() + ": header too large");
  std::string text(len, '\0');
  r.bytes(text.data(), text.size());
  Checkpoint ck;
  try {
    const json header = json::parse(text);
    ck.net = net_config_from_json(header.at("net"));
    ck.loss = loss_spec_from_json(header.at("loss"));
    ck.iteration = header.at("iteration").get<long>();
    ck.provenance = header.value("provenance", json());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": bad checkpoint header: " + e.what());
  }
  // The stored shapes must be exactly what the configuration implies.
  ck.params = init_params(ck.net);
  LayerSet& w = ck.params.weights;
  LayerSet& v = ck.params.velocity;
  std::vector<Dense>* wstacks[] = {&w.trunk, &w.branch, &w.pose_branch};
  std::vector<Dense>* vstacks[] = {&v.trunk, &v.branch, &v.pose_branch};
  for (int s = 0; s < 3; ++s) {
    if (r.u32() != wstacks[s]->size()) {
      throw Error(ErrorCode::kLayoutError, path.string() + ": layer count disagrees with the header");
    }
    for (std::size_t l = 0; l < wstacks[s]->size(); ++l) {
      Dense& layer = (*wstacks[s])[l];
      Dense& vel = (*vstacks[s])[l];
      const std::uint32_t out_dim = r.u32();
      const std::uint32_t in_dim = r.u32();
      if (out_dim != static_cast<std::uint32_t>(layer.out_dim) ||
          in_dim != static_cast<std::uint32_t>(layer.in_dim)) {
        throw Error(ErrorCode::kLayoutError, path.string() + ": layer shape disagrees with the header");
      }
      r.doubles(layer.weight);
      r.doubles(layer.bias);
      r.doubles(vel.weight);
      r.doubles(vel.bias);
    }
  }
  if (!r.at_end()) throw Error(ErrorCode::kParse, path.string() + ": trailing data");
  return ck;
}

// --- logs and reports ----------------------------------------------------

void write_train_log(std::ostream& out, std::span<const LogEntry> log, const json& provenance) {
  out << dump_line({{"format", kLogFormat}, {"provenance", provenance}}) << '\n';
  for (const LogEntry& e : log) {
    out << dump_line({{"iter", e.iter},
                      {"lr", e.lr},
                      {"loss", e.loss},
                      {"loss_per_sample", e.loss_per_sample},
                      {"batch_loss", e.batch_loss}})
        << '\n';
  }
}

std::vector<LogEntry> read_train_log(const fs::path& path) {
  std::vector<LogEntry> log;
  read_jsonl(path, kLogFormat, [&](const json& j) {
    LogEntry e;
    e.iter = j.at("iter").get<long>();
    e.lr = number(j, "lr");
    e.loss = number(j, "loss");
    e.loss_per_sample = number(j, "loss_per_sample");
    e.batch_loss = number(j, "batch_loss");
    log.push_back(e);
  });
  return log;
}

json to_json(const EvalReport& report) {
  auto avp_json = [](const std::map<int, double>& avp) {
    json j = json::object();
    for (const auto& [k, v] : avp) j[std::to_string(k)] = v;
    return j;
  };
  json classes = json::array();
  for (const auto& [c, m] : report.per_class) {
    json entry = {{"class_id", c}, {"n_gt", m.n_gt}};
    entry["ap"] = m.ap ? json(*m.ap) : json(nullptr);
    entry["avp"] = m.ap ? avp_json(m.avp) : json(nullptr);
    classes.push_back(entry);
  }
  return {{"format", "viewbench.eval_report/1"},
          {"bins", report.bins},
          {"iou_threshold", report.iou_threshold},
          {"ap_rule", ap_rule_name(report.rule)},
          {"per_class", classes},
          {"mean_ap", report.mean_ap},
          {"mean_avp", avp_json(report.mean_avp)}};
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream out;
  out << "class   n_gt        AP";
  for (int k : report.bins) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%10s", ("AVP" + std::to_string(k)).c_str());
    out << buf;
  }
  out << '\n';
  auto row = [&](const std::string& label, const std::string& n, std::optional<double> ap,
                 const std::map<int, double>* avp) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-6s%6s", label.c_str(), n.c_str());
    out << buf;
    std::snprintf(buf, sizeof buf, "%10s", ap ? format_number(*ap).c_str() : "-");
    out << buf;
    for (int k : report.bins) {
      const bool have = avp && avp->count(k);
      std::snprintf(buf, sizeof buf, "%10s", have ? format_number(avp->at(k)).c_str() : "-");
      out << buf;
    }
    out << '\n';
  };
  for (const auto& [c, m] : report.per_class) {
    row(std::to_string(c), std::to_string(m.n_gt), m.ap, m.ap ? &m.avp : nullptr);
  }
  row("mean", "", report.mean_ap, &report.mean_avp);
  return out.str();
}

std::string ap_rule_name(ApRule rule) {
  return rule == ApRule::kAllPoints ? "allpoints" : "elevenpoint";
}

ApRule parse_ap_rule(const std::string& name) {
  if (name == "allpoints") return ApRule::kAllPoints;
  if (name == "elevenpoint") return ApRule::kElevenPoint;
  throw Error(ErrorCode::kInvalidParameter, "unknown AP rule '" + name + "' (allpoints|elevenpoint)");
}

}  // namespace viewbench::io
