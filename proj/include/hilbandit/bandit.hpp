#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hilbandit/numerics.hpp"
#include "hilbandit/rng.hpp"
#include "hilbandit/workload.hpp"

namespace hilbandit::bandit {

using numerics::Matrix;
using numerics::Vector;

inline constexpr int kRobotActions = 6;

/// Robot actions 0..5 are pitch (TA, VS, TV) x roll (0, 90): index = 2*pitch + roll.
/// Index 6 is the query action.
struct ActionId {
  int value = 0;

  static constexpr ActionId query() { return {kRobotActions}; }
  constexpr bool is_query() const { return value == kRobotActions; }
  constexpr bool is_robot() const { return value >= 0 && value < kRobotActions; }
  friend constexpr bool operator==(ActionId, ActionId) = default;
};

std::string action_label(ActionId a);

struct ArmScore {
  double mean = 0.0;
  double bonus = 0.0;
  double value = 0.0;
};

using Scores = std::array<ArmScore, kRobotActions>;

struct LabeledContext {
  Vector context;
  int action = 0;
  double reward = 0.0;
};

/// Per-action ridge estimators: A_a = X_a'X_a + lambda I, b_a = X_a'y_a, theta_a = A_a^{-1} b_a.
class BanditModel {
 public:
  BanditModel(int context_dim, double alpha = 0.5, double lambda = 1.0);

  int context_dim() const { return dim_; }
  double alpha() const { return alpha_; }
  double lambda() const { return lambda_; }

  Scores ucb(const Vector& x) const;
  void update(const Vector& x, int action, double reward);
  void pretrain(std::span<const LabeledContext> data);

  const Matrix& gram(int a) const { return arms_.at(a).gram; }
  const Vector& response(int a) const { return arms_.at(a).response; }
  const Vector& weights(int a) const { return arms_.at(a).theta; }

  std::string to_text() const;
  static BanditModel from_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static BanditModel load(const std::filesystem::path& path);

 private:
  struct Arm {
    Matrix gram;
    Vector response;
    Vector theta;
  };

  void check_dim(const Vector& x) const;
  void refresh(Arm& arm) const;

  int dim_;
  double alpha_;
  double lambda_;
  std::vector<Arm> arms_;
};

/// argmax UCB over robot actions, lowest index on ties.
ActionId select_linucb(const Scores& scores);
ActionId select_linucb(const BanditModel& model, const Vector& x);

ActionId select_alwaysquery();

/// Queries with probability exp(-c N) on the first step of a food item, else LinUCB.
ActionId select_expdecay(const BanditModel& model, const Vector& x, int foods_seen, bool first_step_of_food,
                         double decay_c, Rng& rng);

struct GapStat {
  int best = 0;       // argmax of the mean estimate
  int runner_up = 0;  // argmax of the mean over the other actions
  double gap = 0.0;   // optimistic runner-up minus pessimistic best
};

GapStat performance_gap(const Scores& scores, double alpha);

struct GapDecision {
  ActionId action;
  GapStat stat;
  double predicted_workload = 0.0;
  double threshold = 0.0;
};

/// Query-gap rule: defer iff G > w * f(WL_0, Q_t + counterfactual query at `now`).
GapDecision select_qg(const BanditModel& model, const Vector& x, double wl0,
                      std::span<const study::TimedQuery> history, int now, double w,
                      const workload::WorkloadModel& f, const study::QueryType& counterfactual = {});

enum class PolicyKind { LinUCB, AlwaysQuery, ExpDecay, QueryGap };

const char* to_string(PolicyKind k);
PolicyKind parse_policy(const std::string& s);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::LinUCB;
  double decay_c = 0.5;
  double gap_w = 4.0;
  std::shared_ptr<const workload::WorkloadModel> workload;
  study::QueryType counterfactual{};

  std::string label() const;
};

}  // namespace hilbandit::bandit
