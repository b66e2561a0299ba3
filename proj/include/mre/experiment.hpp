#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mre/eval.hpp"
#include "mre/synth.hpp"
#include "mre/training.hpp"

namespace mre {

struct DataConfig {
  std::string manifest;  // empty: generate `cohort` under <out_dir>/data
  CohortSpec cohort;
};

struct ShotConfig {
  std::vector<std::size_t> train{0};
  std::vector<std::size_t> test;  // empty: every subject not trained on
  std::size_t n = 1;              // training subjects per run in rotation mode
};

struct EvalConfig {
  WindowSpec window;
  std::size_t batch = 4;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  ShotConfig shots;
  bool rotation = false;  // run once per subject, training on n consecutive subjects
  EvalConfig eval;
  std::uint64_t seed = 1;
  bool resume = false;

  void validate() const;
};

/// Structured-text form; keys mirror the field names.
std::string to_json(const ExperimentConfig& cfg);
/// Unknown keys are rejected so typos in configs fail loudly.
ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Applies "dotted.key=value" overrides; values parse as JSON, falling back to
/// a plain string.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& assignments);

struct RunSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

std::vector<RunSplit> plan_runs(const ExperimentConfig& cfg, std::size_t subjects);

/// Seeds for model initialization and patch sampling of one run.
std::uint64_t derive_seed(std::uint64_t seed, std::size_t run, std::uint64_t stream);

// One evaluated (subject, category) cell.
struct MetricRow {
  std::size_t run = 0;
  std::size_t subject = 0;
  std::size_t category = 0;
  double dice = 0.0;
  double hd95 = 0.0;
  bool hd95_sentinel = false;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t count = 0;
};

Summary summarize(const std::vector<double>& values);

struct Aggregate {
  Summary dice;  // over runs of each run's mean Dice
  Summary hd95;
  std::vector<Summary> dice_per_category;  // index k-1 for category k
  std::vector<Summary> hd95_per_category;
  std::size_t runs = 0;
  std::size_t hd95_sentinels = 0;
};

/// Pure function of the rows.
Aggregate aggregate_rows(const std::vector<MetricRow>& rows, std::size_t K);

struct MetricsReport {
  std::string config_json;
  std::string manifest_id;  // git blob id of manifest.json
  std::vector<RunSplit> splits;
  std::vector<MetricRow> rows;
  Aggregate aggregate;
};

std::string report_json(const MetricsReport& report);
std::string rows_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> parse_rows_csv(const std::string& text);

/// Evaluates categories 1..K-1 of one prediction against its truth.
std::vector<MetricRow> evaluate_prediction(const LabelMap& pred, const LabelMap& truth, std::size_t K,
                                           std::size_t run, std::size_t subject);

struct ExperimentOptions {
  std::ostream* log = nullptr;
};

/// Trains and evaluates every run, writing per-run and aggregate reports
/// (report.json, metrics.csv) under out_dir.
MetricsReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                             const ExperimentOptions& options = {});

enum class AblationAxis { n_e, modes, components, distance, mixing };
AblationAxis parse_axis(const std::string& s);
std::string to_string(AblationAxis axis);

struct AblationCell {
  std::string name;
  ExperimentConfig config;
};

/// Grid of one axis derived from the base config.
std::vector<AblationCell> ablation_grid(const ExperimentConfig& base, AblationAxis axis);

struct AblationResult {
  std::string name;
  Aggregate aggregate;
};

/// Runs every cell under out_dir/<cell> and writes out_dir/ablation_<axis>.csv.
std::vector<AblationResult> run_ablation_suite(const ExperimentConfig& base, AblationAxis axis,
                                               const std::filesystem::path& out_dir,
                                               const ExperimentOptions& options = {});
std::string ablation_csv(AblationAxis axis, const std::vector<AblationResult>& results);

}  // namespace mre
