#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adascope/csbm.hpp"
#include "adascope/encoding.hpp"
#include "adascope/io.hpp"
#include "adascope/models.hpp"
#include "adascope/scope.hpp"

namespace adascope {

struct SplitRatios {
  double train = 0.5;
  double val = 0.25;
  double test = 0.25;
};

struct DataSplits {
  NodeSet train;
  NodeSet val;
  NodeSet test;
};

/// Uniform random partition of [0, n); train and val sizes are rounded, test
/// takes the rest. Each part is sorted.
DataSplits split_dataset(std::size_t n, const SplitRatios& ratios, std::uint64_t seed);

/// Entry k: fraction of `nodes` that at least one of depths 0..k classifies correctly.
std::vector<double> oracle_accuracy(const DepthFamily& family, const LabelVector& y, const NodeSet& nodes);

/// Entry k: fraction of `nodes` that at least one of the first k+1 models
/// classifies correctly. `member_predictions[i]` holds model i's class per node.
std::vector<double> ensemble_baseline(const std::vector<std::vector<int>>& member_predictions,
                                      const LabelVector& y, const NodeSet& nodes);

/// Family rebuilt from stored logits (no member parameters).
DepthFamily family_from_logits(Matrix logits, int num_classes, Architecture arch);

struct ExperimentConfig {
  std::optional<fs::path> dataset;  // manifest path
  std::optional<CsbmSpec> csbm;
  bool regenerate_csbm_per_seed = true;
  bool standardize_features = false;

  Architecture arch = Architecture::kSgc;
  int lmax = 6;
  SplitRatios ratios;
  std::vector<std::uint64_t> seeds{0};
  ModelSpec model;
  ScopeTrainConfig scope;
  SplitConfig split;
  EncodingConfig encoding;
  int ensemble_size = 0;  // extra best-depth models per seed; 0 disables the ensemble curve

  fs::path out_dir = "run";
  bool save_checkpoints = false;

  void validate() const;
};

/// Reads a config; relative dataset paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir = {});
json to_json(const ExperimentConfig& cfg);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<double> depth_train;
  std::vector<double> depth_val;
  std::vector<double> depth_test;
  int best_depth_by_val = 0;
  double best_single_test = 0.0;
  double as_test = 0.0;
  double as_val_routing = 0.0;
  std::vector<double> oracle_curve;
  std::vector<double> ensemble_curve;
  std::vector<int> selection_histogram;
  double average_homophily = 0.0;
  std::size_t scope_train_size = 0;
  std::size_t scope_val_size = 0;
  std::size_t masked_all_correct = 0;
  std::size_t masked_all_wrong = 0;
  NodeSet test_nodes;
  std::vector<int> chosen_depth;
  std::vector<int> prediction;
  std::vector<int> truth;
};

struct MetricsReport {
  json config;
  int lmax = 0;
  std::vector<SeedResult> seeds;
  std::vector<std::pair<std::string, double>> timings;  // excluded from report.json
};

/// Every stage, end to end, for each configured seed.
MetricsReport run_pipeline(const ExperimentConfig& cfg);

/// Per-seed core used by run_pipeline; exposed for the CLI and tests.
struct SeedArtifacts {
  Dataset data;
  DataSplits splits;
  DepthFamily family;
  StructuralEncoding encoding;
  ScopeLabelMatrix labels;
  ScopeSplit scope_split;
  TrainedScopePredictor predictor;
};

Dataset load_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed);

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, SeedArtifacts* keep = nullptr,
                    std::vector<std::pair<std::string, double>>* timings = nullptr);

/// Throws unless every seed satisfies routed <= oracle(lmax).
void check_report(const MetricsReport& report);

json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const json& j);

struct Stat {
  double mean = 0.0;
  double sd = 0.0;
};
Stat mean_sd(const std::vector<double>& values);

/// Writes report.json, timings.json, curves.csv and nodes_seed<k>.csv.
void export_metrics(const MetricsReport& report, const fs::path& dir);

}  // namespace adascope
