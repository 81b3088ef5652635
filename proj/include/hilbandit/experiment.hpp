#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hilbandit/bandit.hpp"
#include "hilbandit/metrics.hpp"
#include "hilbandit/sim.hpp"
#include "hilbandit/stats.hpp"
#include "hilbandit/workload.hpp"

namespace hilbandit::experiment {

inline constexpr int kConfigSchemaVersion = 1;

struct WorkloadSetting {
  std::string name;
  std::shared_ptr<const workload::WorkloadModel> policy_model;
  std::shared_ptr<const workload::WorkloadModel> eval_model;
  std::string policy_source;
  std::string eval_source;

  bool cross_model() const { return policy_source != eval_source; }
};

struct MethodSpec {
  bandit::PolicyKind kind = bandit::PolicyKind::LinUCB;
  /// Gap scale w (QG) or decay rate c (ExpDecay); unused otherwise.
  std::vector<double> candidates;

  bool needs_validation() const;
  std::string name() const { return bandit::to_string(kind); }
};

struct ExperimentConfig {
  std::uint64_t root_seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  int policy_seeds = 5;
  sim::FoodDatasetSpec foods;
  int n_foods = 5;
  int max_attempts = 10;
  double wl0 = 0.5;
  double alpha = 0.5;
  double lambda = 1.0;
  bool update_on_query = true;
  study::QueryType counterfactual{};
  std::vector<WorkloadSetting> settings;
  std::vector<MethodSpec> methods;
  std::vector<double> w_task = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::filesystem::path output_dir = "results";
  int jobs = 1;
  bool write_traces = true;

  void validate() const;
};

std::vector<MethodSpec> default_methods();

/// Parses the JSON config. Relative model paths resolve against `base_dir`.
/// Errors are ConfigError naming the offending field path.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

/// HILBANDIT_OUT replaces output_dir, HILBANDIT_JOBS replaces jobs.
void apply_env_overrides(ExperimentConfig& config);

struct Environment {
  sim::FoodDataset data;
  bandit::BanditModel pretrained;
};

Environment build_environment(const ExperimentConfig& config);

/// Test types must never appear among pretrain or validation types.
void check_split_hygiene(const sim::FoodDataset& data);

bandit::PolicyConfig make_policy(const ExperimentConfig& config, const WorkloadSetting& setting,
                                 bandit::PolicyKind kind, double hyper);

/// One entry per evaluation seed; randomized policies are averaged over policy seeds.
/// Metrics carry w_task = 1; use with_w_task to re-weight.
struct Evaluation {
  std::vector<metrics::EpisodeMetrics> per_seed;
  /// Trace text per (seed, policy seed), seed-major.
  std::vector<std::string> traces;
};

Evaluation evaluate(const Environment& env, const ExperimentConfig& config, const bandit::PolicyConfig& policy,
                    const std::shared_ptr<const workload::WorkloadModel>& eval_model, sim::Split split,
                    bool keep_traces = false);

metrics::EpisodeMetrics with_w_task(metrics::EpisodeMetrics m, double w_task);

struct ValidationEntry {
  std::string setting;
  std::string method;
  double candidate = 0.0;
  double w_task = 0.0;
  double mean_m_wt = 0.0;
  bool selected = false;
};

struct TableRow {
  std::string method;
  std::optional<double> hyper;
  std::vector<metrics::EpisodeMetrics> per_seed;
  metrics::MetricsSummary summary;
};

struct Table {
  std::string setting;
  double w_task = 0.0;
  std::vector<TableRow> rows;
};

struct Comparison {
  std::string setting;
  double w_task = 0.0;
  std::string method_a;
  std::string method_b;
  std::optional<stats::TestResult> test;  // empty when every paired difference is zero
  std::size_t n = 0;
};

struct TraceFile {
  std::filesystem::path relative_path;
  std::string text;
};

struct ResultsBundle {
  std::vector<ValidationEntry> validation;
  std::vector<Table> tables;
  std::vector<Comparison> comparisons;
  std::vector<TraceFile> traces;
  std::string manifest;
};

ResultsBundle run_experiment(const ExperimentConfig& config);

/// Writes tables/, validation_log.csv, comparisons.csv, manifest.json and traces/ under `dir`.
void emit_tables(const ResultsBundle& bundle, const std::filesystem::path& dir);

std::string table_to_csv(const Table& table, std::size_t seeds);
std::string table_filename(const Table& table);

}  // namespace hilbandit::experiment
