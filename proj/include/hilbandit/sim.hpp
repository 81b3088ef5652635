#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hilbandit/bandit.hpp"
#include "hilbandit/rng.hpp"
#include "hilbandit/study.hpp"
#include "hilbandit/workload.hpp"

namespace hilbandit::sim {

using bandit::ActionId;
using numerics::Vector;

enum class Split { Pretrain, Validation, Test };

const char* to_string(Split s);
Split parse_split(const std::string& s);

using SuccessRow = std::array<double, bandit::kRobotActions>;

struct FoodType {
  std::string name;
  Split split = Split::Pretrain;
  std::vector<Vector> contexts;
  std::vector<SuccessRow> success;
};

struct FoodDatasetSpec {
  std::uint64_t seed = 0;
  int context_dim = 32;
  int n_types = 16;
  int n_trials = 30;
  double context_noise = 0.05;
  double epsilon = 0.02;
  /// Types from the end of the list held out for validation and test.
  int validation_types = 2;
  int test_types = 2;
};

struct FoodDataset {
  int context_dim = 0;
  double epsilon = 0.02;
  std::vector<FoodType> types;

  std::vector<int> types_in(Split s) const;
  const Vector& context(int type, int trial) const { return types.at(type).contexts.at(trial); }
  double success(int type, int trial, int action) const { return types.at(type).success.at(trial).at(action); }
};

FoodDataset generate_food_dataset(const FoodDatasetSpec& spec);

/// argmax_a s_x(x, a) over robot actions, lowest index on ties.
ActionId expert_action(const SuccessRow& row);
ActionId expert_action(const FoodDataset& data, int type, int trial);
/// Looks the context up in the dataset; UnknownContext when absent.
ActionId expert_action(const FoodDataset& data, const Vector& x);

/// One Bernoulli-labelled sample per (pretrain trial, action).
std::vector<bandit::LabeledContext> pretrain_samples(const FoodDataset& data, std::uint64_t seed);

struct EpisodeConfig {
  /// Explicit food type sequence; drawn uniformly from `split` when empty.
  std::vector<int> foods;
  Split split = Split::Test;
  int n_foods = 5;
  int max_attempts = 10;
  double wl0 = 0.5;
  bandit::PolicyConfig policy;
  /// Model that defines the workload state and the metric WL_T. Falls back to the policy's model.
  std::shared_ptr<const workload::WorkloadModel> eval_workload;
  /// Expert-executed steps after a query update that action's estimator.
  bool update_on_query = true;

  void validate() const;
};

struct StepRecord {
  int t = 0;
  int food_pos = 0;
  int food_type = 0;
  int trial = 0;
  int attempt = 0;
  ActionId chosen;
  ActionId executed;
  int reward = 0;
  double r_task = 0.0;
  bool queried = false;   // first deferral for this food happened at this step
  bool committed = false;  // executed on the expert's behalf
  bool human = false;      // expert answer came from a person, not the oracle
  double workload = 0.0;   // evaluation-model WL_t after this step
  double gap = std::numeric_limits<double>::quiet_NaN();
  double threshold = std::numeric_limits<double>::quiet_NaN();
};

struct FoodOutcome {
  int type = 0;
  int attempts = 0;
  bool converged = false;
  bool queried = false;
};

struct EpisodeTrace {
  double wl0 = 0.5;
  int max_attempts = 10;
  std::vector<StepRecord> steps;
  std::vector<FoodOutcome> foods;
  std::vector<study::TimedQuery> queries;
  double wl_final = 0.5;
};

/// Sequential bite-acquisition episode. Owns its copy of the bandit model.
class Episode {
 public:
  Episode(const FoodDataset& data, EpisodeConfig config, bandit::BanditModel model, std::uint64_t seed);

  bool finished() const { return food_pos_ >= static_cast<int>(foods_.size()); }
  int timestep() const { return static_cast<int>(trace_.steps.size()) + 1; }
  int food_pos() const { return food_pos_; }
  int food_type() const { return foods_.at(food_pos_); }
  int trial() const { return trial_; }
  int attempt() const { return attempt_; }
  bool first_step_of_food() const { return attempt_ == 0; }
  bool committed() const { return committed_.has_value(); }
  const Vector& context() const;

  /// Policy decision for the current step; committed foods always return the query action.
  bandit::GapDecision decide(Rng& policy_rng) const;

  /// Execute one step. The query action defers to the expert; `expert_override` replaces
  /// the oracle's answer (a human expert) and persists for the rest of the food item.
  StepRecord step(ActionId action, std::optional<ActionId> expert_override = std::nullopt,
                  const bandit::GapDecision* decision = nullptr);

  const EpisodeTrace& trace() const { return trace_; }
  const bandit::BanditModel& model() const { return model_; }
  const EpisodeConfig& config() const { return config_; }
  const std::vector<int>& foods() const { return foods_; }
  double current_workload() const;

 private:
  void draw_trial();
  void next_food();

  const FoodDataset* data_;
  EpisodeConfig config_;
  bandit::BanditModel model_;
  std::shared_ptr<const workload::WorkloadModel> eval_;
  Rng trial_rng_;
  Rng reward_rng_;
  std::vector<int> foods_;
  int food_pos_ = 0;
  int trial_ = 0;
  int attempt_ = 0;
  std::optional<ActionId> committed_;
  bool committed_is_human_ = false;
  EpisodeTrace trace_;
};

EpisodeTrace run_episode(const FoodDataset& data, const EpisodeConfig& config, const bandit::BanditModel& model,
                         std::uint64_t seed, std::uint64_t policy_seed = 0);

/// Re-executes recorded decisions (and any expert overrides) and returns the fresh trace.
EpisodeTrace replay_episode(const FoodDataset& data, const EpisodeConfig& config, const bandit::BanditModel& model,
                            std::uint64_t seed, std::span<const StepRecord> recorded);

inline constexpr int kTraceSchemaVersion = 1;

std::string trace_to_text(const EpisodeTrace& trace);
EpisodeTrace trace_from_text(const std::string& text);
void save_trace(const std::filesystem::path& path, const EpisodeTrace& trace);
EpisodeTrace load_trace(const std::filesystem::path& path);

void save_food_dataset(const std::filesystem::path& path, const FoodDataset& data);
FoodDataset load_food_dataset(const std::filesystem::path& path);

}  // namespace hilbandit::sim
