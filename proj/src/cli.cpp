#include "viewbench/cli.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "viewbench/error.hpp"
#include "viewbench/experiments.hpp"
#include "viewbench/gradcheck.hpp"
#include "viewbench/io.hpp"

namespace viewbench {

namespace {

namespace fs = std::filesystem;
using io::json;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;

std::string fmt(double v, int precision = 10) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

io::RunConfig load_config(const CommonOptions& opt) {
  io::RunConfig cfg = opt.config.empty() ? io::RunConfig{} : io::load_run_config(opt.config);
  if (opt.seed) {
    cfg.generator.seed = *opt.seed;
    cfg.network.seed = *opt.seed;
    cfg.training.seed = *opt.seed;
  }
  return cfg;
}

int cmd_generate(const CommonOptions& opt, std::ostream& out) {
  io::RunConfig cfg = load_config(opt);
  if (!opt.out.empty()) cfg.dataset_dir = opt.out;
  const io::DatasetFiles files = io::generate_datasets(cfg.generator);
  const json provenance = {{"command", "generate"}, {"config", io::to_json(cfg)}};
  io::write_dataset(cfg.dataset_dir, files, provenance, cfg.generator.binary_features);
  for (const Dataset* ds : {&files.train, &files.test}) {
    out << ds->split << ": " << ds->scenes.size() << " scenes, " << ground_truth(*ds).size()
        << " objects, " << ds->sample_count() << " proposals (" << ds->foreground_count()
        << " foreground)\n";
  }
  out << "wrote " << cfg.dataset_dir << '\n';
  return kExitOk;
}

void write_checkpoint_file(const fs::path& path, const io::Checkpoint& ck) {
  io::StagedFiles staged;
  io::write_checkpoint(staged.open(path, true), ck);
  staged.commit();
}

std::string checkpoint_name(long iteration) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_%07ld.ckpt", iteration);
  return buf;
}

int cmd_train(const CommonOptions& opt, const std::string& dataset_override, std::ostream& out) {
  io::RunConfig cfg = load_config(opt);
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  if (!dataset_override.empty()) cfg.dataset_dir = dataset_override;

  const Dataset train_set = io::read_dataset_split(cfg.dataset_dir, "train");
  NetConfig net = cfg.network;
  net.input_dim = train_set.feature_dim;
  net.n_classes = static_cast<int>(train_set.class_specs.size());
  cfg.network = net;
  const SampleSet samples = to_samples(train_set);

  const fs::path dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::kIo, "cannot create " + dir.string());

  const json provenance = {{"command", "train"}, {"config", io::to_json(cfg)}};
  io::Checkpoint ck;
  ck.net = net;
  ck.loss = cfg.loss;
  ck.provenance = provenance;
  const long interval = cfg.checkpoint_interval;
  const long total = cfg.training.total_iters;
  TrainCallback on_iteration;
  if (interval > 0) {
    on_iteration = [&](long done, const ModelParams& params) {
      if (done % interval != 0 || done == total) return;
      ck.iteration = done;
      ck.params = params;
      write_checkpoint_file(dir / checkpoint_name(done), ck);
    };
  }
  TrainResult result = train(samples, net, cfg.training, cfg.loss, on_iteration);

  ck.iteration = total;
  ck.params = std::move(result.params);
  io::StagedFiles staged;
  io::write_checkpoint(staged.open(dir / "model.ckpt", true), ck);
  io::write_train_log(staged.open(dir / "train_log.jsonl"), result.log, provenance);
  staged.commit();
  if (!result.log.empty()) {
    const LogEntry& last = result.log.back();
    out << "iter " << last.iter << " lr " << fmt(last.lr, 6) << " loss/sample "
        << fmt(last.loss_per_sample, 6) << '\n';
  }
  out << "wrote " << (dir / "model.ckpt").string() << " and " << (dir / "train_log.jsonl").string()
      << '\n';
  return kExitOk;
}

void check_layout(const io::Checkpoint& ck, const Dataset& ds, const std::string& what) {
  if (ck.net.input_dim != ds.feature_dim) {
    throw Error(ErrorCode::kLayoutError, what + " expects feature_dim " +
                                             std::to_string(ck.net.input_dim) + ", dataset has " +
                                             std::to_string(ds.feature_dim));
  }
  if (ck.net.n_classes != static_cast<int>(ds.class_specs.size())) {
    throw Error(ErrorCode::kLayoutError, what + " has " + std::to_string(ck.net.n_classes) +
                                             " classes, dataset has " +
                                             std::to_string(ds.class_specs.size()));
  }
}

bool scores_detections(const NetConfig& net) {
  return net.head.kind == HeadKind::kJointReg || net.head.kind == HeadKind::kJointCls;
}

struct PredictOptions {
  std::string checkpoint;
  std::string detector;
  std::string dataset;
  std::string split = "test";
  std::string out;
  std::optional<double> score_floor;
};

int cmd_predict(const PredictOptions& opt, std::ostream& out) {
  const io::Checkpoint ck = io::read_checkpoint(opt.checkpoint);
  const Dataset ds = io::read_dataset_split(opt.dataset, opt.split);
  check_layout(ck, ds, "checkpoint");
  const FeatureBatch features = proposal_features(ds);
  const auto pose = predict(ck.params, ck.net, features);

  std::vector<Prediction> scores;
  json detector_provenance = nullptr;
  const bool has_detection = scores_detections(ck.net);
  if (!opt.detector.empty()) {
    const io::Checkpoint det = io::read_checkpoint(opt.detector);
    check_layout(det, ds, "detector");
    if (!scores_detections(det.net)) {
      throw Error(ErrorCode::kLayoutError, "the detector checkpoint has no detection head");
    }
    scores = predict(det.params, det.net, features);
    detector_provenance = det.provenance;
  } else if (!has_detection) {
    throw Error(ErrorCode::kLayoutError,
                "a pose-only checkpoint needs --detector to score its detections");
  }

  double floor = 0.0;
  if (opt.score_floor) {
    floor = *opt.score_floor;
  } else if (ck.provenance.contains("config")) {
    floor = ck.provenance["config"]["predict"].value("score_floor", 0.0);
  }
  const auto dets = make_detections(ds, pose, scores, floor);
  const json provenance = {{"command", "predict"},
                           {"split", opt.split},
                           {"score_floor", floor},
                           {"model", ck.provenance},
                           {"detector", detector_provenance}};
  io::StagedFiles staged;
  io::write_detections(staged.open(opt.out), dets, provenance);
  staged.commit();
  out << dets.size() << " detections on " << ds.sample_count() << " proposals -> " << opt.out
      << '\n';
  return kExitOk;
}

struct EvalCliOptions {
  std::string gt;
  std::string det;
  std::vector<int> bins = {4, 8, 16, 24};
  double iou = 0.5;
  std::string ap_rule = "allpoints";
  std::string out;
};

int cmd_eval(const EvalCliOptions& opt, std::ostream& out) {
  EvalOptions options;
  options.bins = opt.bins;
  options.iou_threshold = opt.iou;
  options.rule = io::parse_ap_rule(opt.ap_rule);
  const auto gts = io::read_ground_truth(opt.gt);
  const auto dets = io::read_detections(opt.det);
  const EvalReport report = evaluate(gts, dets, options);
  out << io::format_report_table(report);
  if (!opt.out.empty()) {
    json doc = io::to_json(report);
    doc["provenance"] = {{"command", "eval"},
                         {"bins", opt.bins},
                         {"iou", opt.iou},
                         {"ap_rule", opt.ap_rule},
                         {"n_ground_truth", gts.size()},
                         {"n_detections", dets.size()}};
    io::StagedFiles staged;
    staged.open(opt.out) << doc.dump(2) << '\n';
    staged.commit();
  }
  return kExitOk;
}

struct GradcheckCliOptions {
  std::uint64_t seed = 0;
  int instances = 20;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckCliOptions& opt, std::ostream& out) {
  GradCheckOptions options;
  options.seed = opt.seed;
  options.instances = opt.instances;
  options.corrupt = opt.corrupt;
  const auto cases = run_gradcheck(options);
  bool ok = true;
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %9s %9s %8s %12s %10s  %s\n", "case", "instances",
                "checked", "skipped", "max_rel_err", "tolerance", "verdict");
  out << line;
  for (const GradCheckCase& c : cases) {
    std::snprintf(line, sizeof line, "%-28s %9d %9zu %8zu %12.3e %10.1e  %s\n", c.name.c_str(),
                  c.instances, c.checked, c.skipped, c.max_rel_error, c.tolerance,
                  c.passed() ? "PASS" : "FAIL");
    out << line;
    ok = ok && c.passed();
  }
  return ok ? kExitOk : kExitFailed;
}

int cmd_codec(double angle_deg, const std::string& kind_name, std::ostream& out) {
  EmbeddingKind kind;
  if (kind_name == "2d") {
    kind = EmbeddingKind::kTwoD;
  } else if (kind_name == "3d") {
    kind = EmbeddingKind::kThreeD;
  } else {
    throw Error(ErrorCode::kInvalidParameter, "--kind must be 2d or 3d");
  }
  const AngleRad theta = AngleRad::from_degrees(angle_deg);
  const PoseEmbedding e = encode(theta, kind);
  out << "embedding: [";
  for (int i = 0; i < embedding_dim(kind); ++i) {
    double v = e[i];
    if (std::fabs(v) < 1e-15) v = 0.0;
    out << (i ? ", " : "") << fmt(v, 12);
  }
  out << "]\n";
  out << "round_trip_deg: " << fmt(decode(e).degrees(), 12) << '\n';
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDivergence: return kExitDivergence;
    default: return kExitInput;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Viewpoint estimation benchmark: data generation, training, prediction and evaluation"};
  app.name("viewbench");
  app.require_subcommand(1);

  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "YAML run configuration");
    sub->add_option("--seed", common.seed, "Override every seed in the configuration");
    sub->add_option("--out", common.out, "Output directory");
  };

  CLI::App* gen = app.add_subcommand("generate", "Generate the synthetic train/test datasets");
  add_common(gen);

  CLI::App* tr = app.add_subcommand("train", "Train a network on a generated dataset");
  add_common(tr);
  std::string dataset_override;
  tr->add_option("--dataset", dataset_override, "Dataset directory (overrides the configuration)");

  PredictOptions pred;
  CLI::App* pr = app.add_subcommand("predict", "Write detections for a dataset split");
  pr->add_option("--checkpoint", pred.checkpoint, "Model checkpoint")->required();
  pr->add_option("--dataset", pred.dataset, "Dataset directory")->required();
  pr->add_option("--split", pred.split, "Dataset split")->capture_default_str();
  pr->add_option("--out", pred.out, "Detection record file")->required();
  pr->add_option("--detector", pred.detector, "Checkpoint that scores detections of a pose-only model");
  pr->add_option("--score-floor", pred.score_floor, "Drop detections scoring below this value");

  EvalCliOptions ev;
  CLI::App* ec = app.add_subcommand("eval", "Score detections against ground truth");
  ec->add_option("--gt", ev.gt, "Ground-truth record file")->required();
  ec->add_option("--det", ev.det, "Detection record file")->required();
  ec->add_option("--bins", ev.bins, "Viewpoint bin counts")->delimiter(',')->capture_default_str();
  ec->add_option("--iou", ev.iou, "IoU threshold")->capture_default_str();
  ec->add_option("--ap-rule", ev.ap_rule, "allpoints or elevenpoint")
      ->check(CLI::IsMember({"allpoints", "elevenpoint"}))
      ->capture_default_str();
  ec->add_option("--out", ev.out, "Write the report as JSON");

  GradcheckCliOptions gc;
  CLI::App* gr = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  gr->add_option("--seed", gc.seed, "Seed of the random instances")->capture_default_str();
  gr->add_option("--instances", gc.instances, "Instances per case")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gr->add_flag("--corrupt", gc.corrupt, "Perturb one analytic gradient (negative control)");

  double angle = 0.0;
  std::string kind = "2d";
  CLI::App* co = app.add_subcommand("codec", "Print a pose embedding and its decoded angle");
  co->add_option("--angle", angle, "Azimuth in degrees")->required();
  co->add_option("--kind", kind, "2d or 3d")->check(CLI::IsMember({"2d", "3d"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "viewbench: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (gen->parsed()) return cmd_generate(common, out);
    if (tr->parsed()) return cmd_train(common, dataset_override, out);
    if (pr->parsed()) return cmd_predict(pred, out);
    if (ec->parsed()) return cmd_eval(ev, out);
    if (gr->parsed()) return cmd_gradcheck(gc, out);
    if (co->parsed()) return cmd_codec(angle, kind, out);
  } catch (const DivergenceError& e) {
    err << "viewbench: training diverged at iteration " << e.iteration() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    err << "viewbench: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "viewbench: internal error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitInput;
}

}  // namespace viewbench
