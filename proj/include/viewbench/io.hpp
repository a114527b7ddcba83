#pragma once

// File formats used by the command-line tool.
//
// Record files are JSON Lines: a header object on the first line (it carries
// a "format" key and the configuration that produced the file), followed by
// one record per line. Angles are written in degrees, boxes as four flat
// fields. Checkpoints are a little-endian binary container, see
// write_checkpoint(). All writers go through StagedFiles so a failure never
// leaves a partial output behind.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewbench/evalmetrics.hpp"
#include "viewbench/synthbench.hpp"
#include "viewbench/tinynet.hpp"

namespace viewbench::io {

using nlohmann::json;

/// Writes a group of files to temporaries and renames them into place on
/// commit(). Uncommitted temporaries are removed on destruction.
class StagedFiles {
 public:
  StagedFiles() = default;
  StagedFiles(const StagedFiles&) = delete;
  StagedFiles& operator=(const StagedFiles&) = delete;
  ~StagedFiles();

  std::ostream& open(const std::filesystem::path& target, bool binary = false);
  void commit();

 private:
  struct Entry {
    std::filesystem::path target;
    std::filesystem::path temp;
    std::unique_ptr<std::ofstream> stream;
  };
  std::vector<Entry> entries_;
  bool committed_ = false;
};

// --- records -------------------------------------------------------------

json to_json(const GroundTruthRecord& record);
json to_json(const DetectionRecord& record);
GroundTruthRecord ground_truth_from_json(const json& j);
DetectionRecord detection_from_json(const json& j);

void write_ground_truth(std::ostream& out, std::span<const GroundTruthRecord> records,
                        const json& provenance);
void write_detections(std::ostream& out, std::span<const DetectionRecord> records,
                      const json& provenance);

/// Throw Error(kParse) naming the file and 1-based line of the first bad
/// record. An empty file reads as zero records.
std::vector<GroundTruthRecord> read_ground_truth(const std::filesystem::path& path);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);

// --- run configuration ---------------------------------------------------

struct ClassConfig {
  int symmetry_order = 1;
  double noise_sigma = 0.1;
  int n_harmonics = 3;
};

struct GeneratorSection {
  std::uint64_t seed = 0;
  int train_scenes = 200;
  int test_scenes = 100;
  int feature_dim = 32;
  int min_objects = 1;
  int max_objects = 3;
  int proposals_per_gt = 4;
  int test_proposals_per_gt = 1;
  int background_per_scene = 8;
  double jitter_scale = 0.1;
  double min_box_size = 0.15;
  double max_box_size = 0.4;
  bool binary_features = false;
  std::vector<double> class_weights;
  std::vector<ClassConfig> classes = {{1, 0.1, 3}, {1, 0.1, 3}, {2, 0.1, 3}, {4, 0.1, 3}};
};

struct RunConfig {
  GeneratorSection generator;
  NetConfig network;  // input_dim and n_classes are taken from the dataset
  TrainConfig training;
  long checkpoint_interval = 0;  // 0 = final checkpoint only
  LossSpec loss;
  std::string dataset_dir = "data";
  std::string output_dir = "run";
  double score_floor = 0.0;
};

/// Parses a YAML run configuration. Unknown keys and bad values throw
/// Error(kConfigError) with a "file:line: message" text.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::string& source_name = "<config>");

json to_json(const RunConfig& config);
json to_json(const NetConfig& config);
json to_json(const TrainConfig& config);
json to_json(const LossSpec& spec);
NetConfig net_config_from_json(const json& j);
LossSpec loss_spec_from_json(const json& j);

std::string head_kind_name(HeadKind kind);
std::string loss_kind_name(LossKind kind);

// --- datasets ------------------------------------------------------------

struct DatasetFiles {
  Dataset train;
  Dataset test;
  json manifest;
};

/// Generates both splits described by the configuration.
DatasetFiles generate_datasets(const GeneratorSection& generator);

/// Writes manifest.json plus <split>.gt.jsonl and <split>.proposals.jsonl
/// (and <split>.features.bin when binary features are on) into `dir`.
void write_dataset(const std::filesystem::path& dir, const DatasetFiles& files,
                   const json& provenance, bool binary_features);

Dataset read_dataset_split(const std::filesystem::path& dir, const std::string& split);
json read_manifest(const std::filesystem::path& dir);

// --- checkpoints ---------------------------------------------------------

struct Checkpoint {
  NetConfig net;
  LossSpec loss;
  long iteration = 0;
  ModelParams params;
  json provenance;
};

/// Layout: "VBCKPT01", u64 header length, header JSON (net, loss,
/// iteration, provenance), then for each of trunk / branch / pose_branch a
/// u32 layer count and per layer u32 out_dim, u32 in_dim, weights, biases,
/// weight velocity, bias velocity as row-major little-endian doubles.
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// --- logs and reports ----------------------------------------------------

void write_train_log(std::ostream& out, std::span<const LogEntry> log, const json& provenance);
std::vector<LogEntry> read_train_log(const std::filesystem::path& path);

json to_json(const EvalReport& report);
std::string format_report_table(const EvalReport& report);

std::string ap_rule_name(ApRule rule);
ApRule parse_ap_rule(const std::string& name);

}  // namespace viewbench::io
