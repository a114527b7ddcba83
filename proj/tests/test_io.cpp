#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "viewbench/error.hpp"
#include "viewbench/io.hpp"

using namespace viewbench;
namespace fs = std::filesystem;

namespace {

bool throws_code(auto&& fn, ErrorCode code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

std::string error_text(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "viewbench_io_XXXXXX").string();
    path = mkdtemp(tmpl.data());
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

io::GeneratorSection small_generator() {
  io::GeneratorSection g;
  g.train_scenes = 6;
  g.test_scenes = 4;
  g.feature_dim = 8;
  return g;
}

}  // namespace

TEST_CASE("record round trip preserves every value") {
  TempDir dir;
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GroundTruthRecord> gts;
  std::vector<DetectionRecord> dets;
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng) * 0.5;
    const Box b{x, x / 2, x + 0.1 + u(rng) * 0.4, x / 2 + 0.3};
    gts.push_back({"img " + std::to_string(i % 7), 1 + i % 3, b, AngleRad(u(rng) * kTwoPi)});
    dets.push_back({"img \"" + std::to_string(i % 5), 1 + i % 4, b, u(rng), AngleRad(u(rng) * kTwoPi)});
  }
  {
    io::StagedFiles staged;
    io::write_ground_truth(staged.open(dir.path / "gt.jsonl"), gts, {{"note", "test"}});
    io::write_detections(staged.open(dir.path / "det.jsonl"), dets, nullptr);
    staged.commit();
  }
  const auto gts2 = io::read_ground_truth(dir.path / "gt.jsonl");
  const auto dets2 = io::read_detections(dir.path / "det.jsonl");
  REQUIRE(gts2.size() == gts.size());
  REQUIRE(dets2.size() == dets.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    CHECK(gts2[i].image_id == gts[i].image_id);
    CHECK(gts2[i].box == gts[i].box);
    CHECK(circular_distance(gts2[i].azimuth, gts[i].azimuth) < 1e-14);
    CHECK(dets2[i].score == dets[i].score);
    CHECK(dets2[i].image_id == dets[i].image_id);
    CHECK(circular_distance(dets2[i].azimuth_pred, dets[i].azimuth_pred) < 1e-14);
  }
  const auto a = evaluate(gts, dets);
  const auto b = evaluate(gts2, dets2);
  CHECK(a.mean_ap == b.mean_ap);
  CHECK(a.mean_avp == b.mean_avp);
}

TEST_CASE("record parse errors name the line") {
  TempDir dir;
  const fs::path p = dir.path / "gt.jsonl";
  const std::string header = R"({"format":"viewbench.ground_truth/1","count":2,"provenance":null})";
  const std::string good =
      R"({"image_id":"a","class_id":1,"x_min":0,"y_min":0,"x_max":1,"y_max":1,"azimuth_deg":10})";
  write_text(p, header + "\n" + good + "\n\n{not json}\n");
  CHECK(error_text([&] { io::read_ground_truth(p); }).find("gt.jsonl:4:") != std::string::npos);
  CHECK(throws_code([&] { io::read_ground_truth(p); }, ErrorCode::kParse));

  write_text(p, header + "\n" + R"({"image_id":"a","class_id":1,"x_min":0,"y_min":0,"x_max":1,"y_max":1})" + "\n");
  CHECK(error_text([&] { io::read_ground_truth(p); }).find(":2: missing field 'azimuth_deg'") !=
        std::string::npos);

  write_text(p, header + "\n" + R"({"image_id":"a","class_id":1,"x_min":2,"y_min":0,"x_max":1,"y_max":1,"azimuth_deg":0})" + "\n");
  CHECK(throws_code([&] { io::read_ground_truth(p); }, ErrorCode::kParse));

  write_text(p, R"({"format":"viewbench.detections/1"})" "\n");
  CHECK(error_text([&] { io::read_ground_truth(p); }).find(":1:") != std::string::npos);

  write_text(p, "");
  CHECK(io::read_ground_truth(p).empty());
  CHECK(throws_code([&] { io::read_ground_truth(dir.path / "missing.jsonl"); }, ErrorCode::kIo));
}

TEST_CASE("config parsing") {
  const auto cfg = io::parse_run_config(R"(
generator:
  seed: 3
  feature_dim: 16
  classes:
    - {symmetry_order: 1}
    - {symmetry_order: 2, noise_sigma: 0.01}
network:
  trunk_widths: [32, 16]
  split_depth: 2
  head: {kind: joint_regression, embedding: 3d}
training:
  lr: 0.01
  total_iters: 50
  checkpoint_interval: 10
loss:
  lambda: 0.5
paths: {dataset_dir: d, output_dir: o}
predict: {score_floor: 0.2}
)");
  CHECK(cfg.generator.seed == 3);
  CHECK(cfg.generator.classes.size() == 2);
  CHECK(cfg.generator.classes[1].noise_sigma == 0.01);
  CHECK(cfg.network.input_dim == 16);
  CHECK(cfg.network.n_classes == 2);
  CHECK(cfg.network.trunk_widths == std::vector<int>{32, 16});
  CHECK(cfg.network.head == HeadSpec::joint_reg(EmbeddingKind::kThreeD));
  CHECK(cfg.loss.kind == LossKind::kJointRegression);
  CHECK(cfg.loss.lambda == 0.5);
  CHECK(cfg.training.lr == 0.01);
  CHECK(cfg.checkpoint_interval == 10);
  CHECK(cfg.dataset_dir == "d");
  CHECK(cfg.score_floor == 0.2);

  const auto empty = io::parse_run_config("");
  CHECK(empty.loss.kind == LossKind::kClassification);
  CHECK(empty.network.head == HeadSpec::cls_pose(24));

  const auto geo = io::parse_run_config("loss: {kind: geometric, sigma: 0.5}\n");
  CHECK(geo.loss.kind == LossKind::kGeometricClassification);
  CHECK(*geo.loss.sigma == 0.5);
}

TEST_CASE("config errors carry file and line") {
  auto msg = [](const std::string& text) {
    return error_text([&] { io::parse_run_config(text, "run.yaml"); });
  };
  CHECK(msg("network:\n  trunk_widths: [8]\n  colour: red\n") ==
        "run.yaml:3: unknown key 'colour' in network");
  CHECK(msg("traning: {}\n").find("run.yaml:1: unknown key 'traning'") == 0);
  CHECK(msg("training:\n  lr: fast\n").find("run.yaml:2:") == 0);
  CHECK(msg("network:\n  head: {kind: regression, bins: 8}\n").find("run.yaml:2:") == 0);
  CHECK(msg("network:\n  head: {kind: classification}\nloss:\n  kind: regression\n").find("run.yaml:4:") == 0);
  CHECK(msg("generator:\n  feature_dim: 7\n").find("run.yaml:2: feature_dim") == 0);
  CHECK(msg("a: [\n").find("run.yaml:") == 0);
  CHECK(throws_code([] { io::parse_run_config("loss: {sigma: -1}\n"); }, ErrorCode::kConfigError));
  CHECK(throws_code([] { io::load_run_config("/nonexistent/run.yaml"); }, ErrorCode::kConfigError));
}

TEST_CASE("dataset round trip") {
  for (bool binary : {false, true}) {
    TempDir dir;
    auto g = small_generator();
    g.binary_features = binary;
    const auto files = io::generate_datasets(g);
    io::write_dataset(dir.path, files, {{"command", "test"}}, binary);
    CHECK(fs::exists(dir.path / "train.features.bin") == binary);
    for (const Dataset* ds : {&files.train, &files.test}) {
      const Dataset back = io::read_dataset_split(dir.path, ds->split);
      REQUIRE(back.scenes.size() == ds->scenes.size());
      CHECK(back.feature_dim == ds->feature_dim);
      REQUIRE(back.class_specs.size() == ds->class_specs.size());
      for (std::size_t c = 0; c < back.class_specs.size(); ++c) {
        CHECK(back.class_specs[c].cos_coeffs == ds->class_specs[c].cos_coeffs);
      }
      for (std::size_t s = 0; s < ds->scenes.size(); ++s) {
        REQUIRE(back.scenes[s].gt.size() == ds->scenes[s].gt.size());
        for (std::size_t g = 0; g < ds->scenes[s].gt.size(); ++g) {
          const auto& a = ds->scenes[s].gt[g];
          const auto& b = back.scenes[s].gt[g];
          CHECK(a.image_id == b.image_id);
          CHECK(a.class_id == b.class_id);
          CHECK(a.box == b.box);
          // Degrees on disk: the radian value survives to within an ulp or two.
          CHECK(circular_distance(a.azimuth, b.azimuth) < 1e-14);
        }
        REQUIRE(back.scenes[s].proposals.size() == ds->scenes[s].proposals.size());
        for (std::size_t p = 0; p < ds->scenes[s].proposals.size(); ++p) {
          const auto& a = ds->scenes[s].proposals[p];
          const auto& b = back.scenes[s].proposals[p];
          CHECK(a.feature == b.feature);
          CHECK(a.box == b.box);
          CHECK(a.matched_gt == b.matched_gt);
          CHECK(a.noise_seed == b.noise_seed);
        }
      }
    }
    const auto manifest = io::read_manifest(dir.path);
    CHECK(manifest["splits"]["train"]["scenes"] == 6);
    CHECK(manifest["classes"].size() == 4);
    CHECK_FALSE(fs::exists(dir.path / "manifest.json.tmp0"));
  }
}

TEST_CASE("dataset generation is byte-identical across runs") {
  TempDir a;
  TempDir b;
  const auto g = small_generator();
  io::write_dataset(a.path, io::generate_datasets(g), nullptr, false);
  io::write_dataset(b.path, io::generate_datasets(g), nullptr, false);
  for (const char* name : {"manifest.json", "train.gt.jsonl", "train.proposals.jsonl", "test.gt.jsonl",
                           "test.proposals.jsonl"}) {
    CHECK(read_text(a.path / name) == read_text(b.path / name));
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir;
  NetConfig net;
  net.input_dim = 6;
  net.trunk_widths = {5, 4};
  net.split_depth = 1;
  net.n_classes = 2;
  net.head = HeadSpec::joint_reg(EmbeddingKind::kThreeD);
  net.seed = 9;
  io::Checkpoint ck;
  ck.net = net;
  ck.loss = LossSpec{LossKind::kJointRegression, std::nullopt, 0.25};
  ck.iteration = 1234;
  ck.params = init_params(net);
  ck.params.velocity.trunk[0].weight[3] = -0.125;
  ck.params.weights.branch[1].bias[0] = 1e-300;
  ck.provenance = {{"k", "v"}};
  const fs::path p = dir.path / "m.ckpt";
  {
    io::StagedFiles staged;
    io::write_checkpoint(staged.open(p, true), ck);
    staged.commit();
  }
  const auto back = io::read_checkpoint(p);
  CHECK(back.net == ck.net);
  CHECK(back.loss == ck.loss);
  CHECK(back.iteration == 1234);
  CHECK(back.params == ck.params);
  CHECK(back.provenance == ck.provenance);

  const std::string bytes = read_text(p);
  write_text(dir.path / "short.ckpt", bytes.substr(0, bytes.size() - 3));
  CHECK(throws_code([&] { io::read_checkpoint(dir.path / "short.ckpt"); }, ErrorCode::kParse));
  write_text(dir.path / "long.ckpt", bytes + "x");
  CHECK(throws_code([&] { io::read_checkpoint(dir.path / "long.ckpt"); }, ErrorCode::kParse));
  write_text(dir.path / "bad.ckpt", "not a checkpoint");
  CHECK(throws_code([&] { io::read_checkpoint(dir.path / "bad.ckpt"); }, ErrorCode::kParse));
}

TEST_CASE("train log round trip") {
  TempDir dir;
  const std::vector<LogEntry> log{{0, 0.001, 12.5, 0.1, 13.0}, {100, 0.0001, 1.0 / 3.0, 0.01, 0.2}};
  {
    io::StagedFiles staged;
    io::write_train_log(staged.open(dir.path / "log.jsonl"), log, nullptr);
    staged.commit();
  }
  CHECK(io::read_train_log(dir.path / "log.jsonl") == log);
}

TEST_CASE("staged files vanish without commit") {
  TempDir dir;
  {
    io::StagedFiles staged;
    staged.open(dir.path / "a.txt") << "hello";
    staged.open(dir.path / "b.txt") << "world";
  }
  CHECK(fs::is_empty(dir.path));
  write_text(dir.path / "blocker", "x");
  io::StagedFiles staged;
  CHECK(throws_code([&] { staged.open(dir.path / "blocker" / "c.txt"); }, ErrorCode::kIo));
}

TEST_CASE("report formatting") {
  const std::vector<GroundTruthRecord> gt{{"a", 1, Box{}, AngleRad(0.0)}};
  const std::vector<DetectionRecord> det{{"a", 1, Box{}, 0.9, AngleRad(0.0)}, {"a", 2, Box{}, 0.9, AngleRad(0.0)}};
  const auto report = evaluate(gt, det);
  const auto j = io::to_json(report);
  CHECK(j["mean_ap"] == 1.0);
  CHECK(j["per_class"][1]["class_id"] == 2);
  CHECK(j["per_class"][1]["ap"].is_null());
  CHECK(j["per_class"][1]["n_gt"] == 0);
  const std::string table = io::format_report_table(report);
  CHECK(table.find("AVP24") != std::string::npos);
  CHECK(table.find("1.0000") != std::string::npos);
  CHECK(io::parse_ap_rule("elevenpoint") == ApRule::kElevenPoint);
  CHECK(throws_code([] { io::parse_ap_rule("voc"); }, ErrorCode::kInvalidParameter));
}

TEST_CASE("shipped configurations parse") {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(VIEWBENCH_CONFIG_DIR)) {
    if (e.path().extension() != ".yaml") continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(io::load_run_config(e.path()));
    ++n;
  }
  CHECK(n >= 4);
}
