#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbmloc/architectures.hpp"
#include "cbmloc/cbm.hpp"
#include "cbmloc/metrics.hpp"
#include "cbmloc/synthgen.hpp"
#include "cbmloc/train.hpp"

namespace cbmloc {

/// Invalid experiment configuration (unknown key, bad value, wrong schema).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
  kDepthSweep,
  kFixedParamsSweep,
  kFixedRfSweep,
  kEpochSweep,
  kWeightDecaySweep,
  kAdversarialSweep,
  kDiversitySweep,
  kMaskingEval,
  kMlpGrid,
  kNoiseSweep,
  kResidualSweep,
  kConstrainedLeakageSweep,
  kTheoryVerify,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);

/// One swept value: numbers (a bool is 0/1, an MLP cell is [depth, width]) or a
/// word such as a mask kind.
struct GridValue {
  std::vector<double> numbers;
  std::string text;

  [[nodiscard]] double number() const;
  [[nodiscard]] std::string label() const;
  bool operator==(const GridValue&) const = default;
};

struct ModelSpec {
  std::string family = "cnn";  // cnn | mlp
  DepthVariant variant = DepthVariant::kGrow;
  int depth = 7;
  int mlp_width = 10;
};

inline constexpr int kSchemaVersion = 1;

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ExperimentKind kind = ExperimentKind::kDepthSweep;
  SynthConfig dataset;            // samples = 0 picks 256 (1-2 objects) or 1024 (4-8 objects)
  int test_samples = 0;           // 0 = same as training
  std::vector<int> objects;       // dataset sizes to sweep; empty = dataset.num_objects
  ModelSpec model;
  TrainConfig train;
  TrainConfig label_train;
  PGDConfig pgd;
  MaskSpec mask;
  std::vector<std::string> metrics;  // empty = kind default
  std::vector<GridValue> grid;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int trials = 1000;  // theory_verify
  int workers = 1;
  std::string output_dir = "results";
};

ExperimentConfig default_experiment_config(ExperimentKind kind);

/// Parses a JSON document; missing keys take defaults, unknown keys and
/// invalid values throw ConfigError.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical JSON (all fields, fixed key order).
std::string to_json(const ExperimentConfig& cfg);
/// FNV-1a of the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

/// Metrics evaluated by default: leakage, intervention, relevant/irrelevant masking.
std::vector<std::string> effective_metrics(const ExperimentConfig& cfg);
std::vector<int> effective_objects(const ExperimentConfig& cfg);
int default_sample_count(int num_objects);

struct ResultRow {
  std::string experiment;
  std::string x;
  int num_objects = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  std::size_t n_excluded = 0;
  double concept_accuracy = 0.0;
  double task_accuracy = 0.0;
  std::string config_hash;
  std::string model_checksum;
  std::string status = "ok";
  std::string message;
};

struct RunResult {
  std::vector<ResultRow> rows;
  std::size_t failures = 0;
};

using ProgressCallback = std::function<void(const std::string&)>;

/// Executes every (grid point, dataset, seed) cell and returns rows in
/// deterministic (grid, objects, seed, metric) order. Cell failures are recorded
/// as rows with status "failed"; the run continues.
RunResult run_experiment(const ExperimentConfig& cfg, const ProgressCallback& progress = {});

/// Runs and writes config.json, rows.csv and summary.json to `out_dir`.
RunResult run_and_write(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                        const ProgressCallback& progress = {});

std::string rows_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_rows_csv(const std::string& text);

struct SummaryEntry {
  std::string metric;
  int num_objects = 0;
  std::string x;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single value)
  std::size_t n = 0;
};

/// Groups successful rows by (metric, objects, x) in first-appearance order.
std::vector<SummaryEntry> summarize(const std::vector<ResultRow>& rows);
std::string summary_json(const ExperimentConfig& cfg, const std::vector<SummaryEntry>& summary);

/// Reads rows.csv from `dir`, writes plot.csv (series,x,mean,std,n) and
/// returns its contents.
std::string report(const std::filesystem::path& dir);

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Builds the concept predictor a cell trains (exposed for tests and tools).
NetworkConfig cell_network_config(const ExperimentConfig& cfg, const GridValue& x, int num_objects,
                                  std::uint64_t seed);

/// Training and test datasets for a cell (test split: same config, derived seed).
std::pair<Dataset, Dataset> cell_datasets(const ExperimentConfig& cfg, const GridValue& x, int num_objects,
                                          std::uint64_t seed);

}  // namespace cbmloc
