#include "hilbandit/bandit.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hilbandit::bandit {

using nlohmann::json;

std::string action_label(ActionId a) {
  if (a.is_query()) return "query";
  static const char* pitch[] = {"TA", "VS", "TV"};
  static const char* roll[] = {"0", "90"};
  if (!a.is_robot()) return "invalid";
  return std::string(pitch[a.value / 2]) + "-" + roll[a.value % 2];
}

BanditModel::BanditModel(int context_dim, double alpha, double lambda)
    : dim_(context_dim), alpha_(alpha), lambda_(lambda) {
  if (context_dim < 1) throw Error(ErrorKind::ConfigError, "context dimension must be >= 1");
  if (!(alpha > 0.0)) throw Error(ErrorKind::ConfigError, "alpha must be > 0");
  if (!(lambda > 0.0)) throw Error(ErrorKind::ConfigError, "lambda must be > 0");
  arms_.resize(kRobotActions);
  for (auto& arm : arms_) {
    arm.gram = lambda * Matrix::Identity(dim_, dim_);
    arm.response = Vector::Zero(dim_);
    arm.theta = Vector::Zero(dim_);
  }
}

void BanditModel::check_dim(const Vector& x) const {
  if (x.size() != dim_) {
    throw Error(ErrorKind::DimensionMismatch,
                "context has dimension " + std::to_string(x.size()) + ", model expects " + std::to_string(dim_));
  }
}

void BanditModel::refresh(Arm& arm) const { arm.theta = numerics::cholesky_solve(arm.gram, arm.response); }

Scores BanditModel::ucb(const Vector& x) const {
  check_dim(x);
  Scores out;
  for (int a = 0; a < kRobotActions; ++a) {
    const auto& arm = arms_[a];
    const Vector z = numerics::cholesky_solve(arm.gram, x);
    out[a].mean = arm.theta.dot(x);
    out[a].bonus = std::sqrt(std::max(0.0, x.dot(z)));
    out[a].value = out[a].mean + alpha_ * out[a].bonus;
  }
  return out;
}

void BanditModel::update(const Vector& x, int action, double reward) {
  check_dim(x);
  if (action < 0 || action >= kRobotActions) throw Error(ErrorKind::InvalidAction, "update needs a robot action");
  auto& arm = arms_[action];
  arm.gram.noalias() += x * x.transpose();
  arm.response += reward * x;
  refresh(arm);
}

void BanditModel::pretrain(std::span<const LabeledContext> data) {
  for (const auto& s : data) {
    check_dim(s.context);
    if (s.action < 0 || s.action >= kRobotActions) throw Error(ErrorKind::InvalidAction, "pretrain needs robot actions");
  }
  std::vector<bool> touched(kRobotActions, false);
  for (const auto& s : data) {
    auto& arm = arms_[s.action];
    arm.gram.noalias() += s.context * s.context.transpose();
    arm.response += s.reward * s.context;
    touched[s.action] = true;
  }
  for (int a = 0; a < kRobotActions; ++a)
    if (touched[a]) refresh(arms_[a]);
}

std::string BanditModel::to_text() const {
  json arms = json::array();
  for (const auto& arm : arms_) {
    std::vector<double> g(arm.gram.data(), arm.gram.data() + arm.gram.size());
    std::vector<double> b(arm.response.data(), arm.response.data() + arm.response.size());
    arms.push_back({{"gram", g}, {"response", b}});
  }
  json j{{"schema", "hilbandit.bandit"}, {"version", 1},  {"context_dim", dim_},
         {"alpha", alpha_},              {"lambda", lambda_}, {"arms", arms}};
  return j.dump() + "\n";
}

BanditModel BanditModel::from_text(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("schema").get<std::string>() != "hilbandit.bandit") throw Error(ErrorKind::ParseError, "not a bandit checkpoint");
    if (j.at("version").get<int>() != 1) throw Error(ErrorKind::SchemaVersionMismatch, "bandit checkpoint version");
    BanditModel m(j.at("context_dim").get<int>(), j.at("alpha").get<double>(), j.at("lambda").get<double>());
    const auto& arms = j.at("arms");
    if (arms.size() != kRobotActions) throw Error(ErrorKind::ParseError, "checkpoint needs 6 arms");
    for (int a = 0; a < kRobotActions; ++a) {
      const auto g = arms[a].at("gram").get<std::vector<double>>();
      const auto b = arms[a].at("response").get<std::vector<double>>();
      if (g.size() != static_cast<size_t>(m.dim_ * m.dim_) || b.size() != static_cast<size_t>(m.dim_))
        throw Error(ErrorKind::ParseError, "arm dimensions do not match context_dim");
      m.arms_[a].gram = Eigen::Map<const Matrix>(g.data(), m.dim_, m.dim_);
      m.arms_[a].response = Eigen::Map<const Vector>(b.data(), m.dim_);
      m.refresh(m.arms_[a]);
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("bandit checkpoint: ") + e.what());
  }
}

void BanditModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << to_text();
}

BanditModel BanditModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

ActionId select_linucb(const Scores& scores) {
  int best = 0;
  for (int a = 1; a < kRobotActions; ++a)
    if (scores[a].value > scores[best].value) best = a;
  return {best};
}

ActionId select_linucb(const BanditModel& model, const Vector& x) { return select_linucb(model.ucb(x)); }

ActionId select_alwaysquery() { return ActionId::query(); }

ActionId select_expdecay(const BanditModel& model, const Vector& x, int foods_seen, bool first_step_of_food,
                         double decay_c, Rng& rng) {
  if (first_step_of_food) {
    const double p = std::exp(-decay_c * foods_seen);
    if (bernoulli(rng, p)) return ActionId::query();
  }
  return select_linucb(model, x);
}

GapStat performance_gap(const Scores& scores, double alpha) {
  GapStat s;
  for (int a = 1; a < kRobotActions; ++a)
    if (scores[a].mean > scores[s.best].mean) s.best = a;
  s.runner_up = s.best == 0 ? 1 : 0;
  for (int a = 0; a < kRobotActions; ++a)
    if (a != s.best && scores[a].mean > scores[s.runner_up].mean) s.runner_up = a;
  const auto& hi = scores[s.runner_up];
  const auto& lo = scores[s.best];
  s.gap = (hi.mean + alpha * hi.bonus) - (lo.mean - alpha * lo.bonus);
  return s;
}

GapDecision select_qg(const BanditModel& model, const Vector& x, double wl0,
                      std::span<const study::TimedQuery> history, int now, double w,
                      const workload::WorkloadModel& f, const study::QueryType& counterfactual) {
  const auto scores = model.ucb(x);
  GapDecision d;
  d.stat = performance_gap(scores, model.alpha());
  std::vector<study::TimedQuery> hypothetical(history.begin(), history.end());
  hypothetical.push_back({now, counterfactual});
  d.predicted_workload = workload::predict(f, wl0, hypothetical, now);
  d.threshold = w * d.predicted_workload;
  d.action = d.stat.gap > d.threshold ? ActionId::query() : select_linucb(scores);
  return d;
}

const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::LinUCB: return "LinUCB";
    case PolicyKind::AlwaysQuery: return "AlwaysQuery";
    case PolicyKind::ExpDecay: return "LinUCB-ExpDecay";
    case PolicyKind::QueryGap: return "LinUCB-QG";
  }
  return "?";
}

PolicyKind parse_policy(const std::string& s) {
  if (s == "LinUCB" || s == "linucb") return PolicyKind::LinUCB;
  if (s == "AlwaysQuery" || s == "always_query") return PolicyKind::AlwaysQuery;
  if (s == "LinUCB-ExpDecay" || s == "ExpDecay" || s == "expdecay" || s == "exp_decay") return PolicyKind::ExpDecay;
  if (s == "LinUCB-QG" || s == "QG" || s == "QueryGap" || s == "qg" || s == "query_gap") return PolicyKind::QueryGap;
  throw Error(ErrorKind::ConfigError, "unknown policy '" + s + "'");
}

std::string PolicyConfig::label() const {
  char buf[64];
  switch (kind) {
    case PolicyKind::ExpDecay: std::snprintf(buf, sizeof buf, "LinUCB-ExpDecay(c=%g)", decay_c); return buf;
    case PolicyKind::QueryGap: std::snprintf(buf, sizeof buf, "LinUCB-QG(w=%g)", gap_w); return buf;
    default: return to_string(kind);
  }
}

}  // namespace hilbandit::bandit
