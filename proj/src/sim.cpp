#include "hilbandit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace hilbandit::sim {

using nlohmann::json;
using numerics::Matrix;

const char* to_string(Split s) {
  switch (s) {
    case Split::Pretrain: return "pretrain";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "pretrain") return Split::Pretrain;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  throw Error(ErrorKind::ConfigError, "unknown split '" + s + "'");
}

std::vector<int> FoodDataset::types_in(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < types.size(); ++i)
    if (types[i].split == s) out.push_back(static_cast<int>(i));
  return out;
}

FoodDataset generate_food_dataset(const FoodDatasetSpec& spec) {
  if (spec.n_types < 4) throw Error(ErrorKind::ConfigError, "need at least 4 food types to populate every split");
  if (spec.context_dim < 1 || spec.n_trials < 1) throw Error(ErrorKind::ConfigError, "bad food dataset dimensions");
  if (!(spec.epsilon >= 0.0 && spec.epsilon < 0.5)) throw Error(ErrorKind::ConfigError, "epsilon must be in [0, 0.5)");

  Rng rng = make_rng(spec.seed, {0xF00D});
  std::normal_distribution<double> normal(0.0, 1.0);
  const int d = spec.context_dim;
  const int n = spec.n_types;

  // Per-type mean contexts: orthonormal while the dimension allows it.
  Matrix means(n, d);
  for (int f = 0; f < n; ++f) {
    Vector v(d);
    for (int k = 0; k < d; ++k) v(k) = normal(rng);
    for (int g = 0; g < std::min(f, d); ++g) v -= v.dot(means.row(g).transpose()) * means.row(g).transpose();
    means.row(f) = v.normalized().transpose();
  }

  // Target success table with one clearly best action per type.
  Matrix table(n, bandit::kRobotActions);
  for (int f = 0; f < n; ++f) {
    const int best = std::uniform_int_distribution<int>(0, bandit::kRobotActions - 1)(rng);
    for (int a = 0; a < bandit::kRobotActions; ++a) {
      table(f, a) = a == best ? 0.6 + 0.3 * uniform01(rng) : 0.05 + 0.35 * uniform01(rng);
    }
  }

  // Ground-truth linear reward weights realizing the table on the mean contexts.
  Matrix truth(bandit::kRobotActions, d);
  for (int a = 0; a < bandit::kRobotActions; ++a) truth.row(a) = numerics::min_norm_lstsq(means, table.col(a)).transpose();

  int val = spec.validation_types, test = spec.test_types;
  while (val + test >= n) (val >= test ? val : test) -= 1;
  val = std::max(val, 1);
  test = std::max(test, 1);

  FoodDataset data;
  data.context_dim = d;
  data.epsilon = spec.epsilon;
  data.types.resize(static_cast<size_t>(n));
  const double scale = spec.context_noise / std::sqrt(static_cast<double>(d));
  for (int f = 0; f < n; ++f) {
    auto& ft = data.types[f];
    char name[16];
    std::snprintf(name, sizeof name, "food%02d", f);
    ft.name = name;
    ft.split = f >= n - test ? Split::Test : (f >= n - test - val ? Split::Validation : Split::Pretrain);
    for (int trial = 0; trial < spec.n_trials; ++trial) {
      Vector x = means.row(f).transpose();
      for (int k = 0; k < d; ++k) x(k) += scale * normal(rng);
      SuccessRow row;
      for (int a = 0; a < bandit::kRobotActions; ++a)
        row[a] = std::clamp(truth.row(a).dot(x), spec.epsilon, 1.0 - spec.epsilon);
      ft.contexts.push_back(std::move(x));
      ft.success.push_back(row);
    }
  }
  return data;
}

ActionId expert_action(const SuccessRow& row) {
  int best = 0;
  for (int a = 1; a < bandit::kRobotActions; ++a)
    if (row[a] > row[best]) best = a;
  return {best};
}

ActionId expert_action(const FoodDataset& data, int type, int trial) {
  if (type < 0 || type >= static_cast<int>(data.types.size()) || trial < 0 ||
      trial >= static_cast<int>(data.types[type].success.size())) {
    throw Error(ErrorKind::UnknownContext, "no trial " + std::to_string(trial) + " for food type " + std::to_string(type));
  }
  return expert_action(data.types[type].success[trial]);
}

ActionId expert_action(const FoodDataset& data, const Vector& x) {
  for (const auto& ft : data.types)
    for (size_t i = 0; i < ft.contexts.size(); ++i)
      if (ft.contexts[i].size() == x.size() && ft.contexts[i] == x) return expert_action(ft.success[i]);
  throw Error(ErrorKind::UnknownContext, "context is not part of the food dataset");
}

std::vector<bandit::LabeledContext> pretrain_samples(const FoodDataset& data, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x9E7});
  std::vector<bandit::LabeledContext> out;
  for (int f : data.types_in(Split::Pretrain)) {
    const auto& ft = data.types[f];
    for (size_t i = 0; i < ft.contexts.size(); ++i)
      for (int a = 0; a < bandit::kRobotActions; ++a)
        out.push_back({ft.contexts[i], a, bernoulli(rng, ft.success[i][a]) ? 1.0 : 0.0});
  }
  return out;
}

void EpisodeConfig::validate() const {
  if (max_attempts < 1) throw Error(ErrorKind::ConfigError, "max_attempts must be >= 1");
  if (!(wl0 >= 0.0 && wl0 <= 1.0)) throw Error(ErrorKind::ConfigError, "wl0 must lie in [0, 1]");
  if (foods.empty() && n_foods < 1) throw Error(ErrorKind::ConfigError, "n_foods must be >= 1");
  if (policy.kind == bandit::PolicyKind::QueryGap && !policy.workload)
    throw Error(ErrorKind::ConfigError, "LinUCB-QG needs a workload model");
  if (policy.decay_c < 0.0) throw Error(ErrorKind::ConfigError, "decay rate c must be >= 0");
  if (policy.gap_w < 0.0) throw Error(ErrorKind::ConfigError, "gap scale w must be >= 0");
}

Episode::Episode(const FoodDataset& data, EpisodeConfig config, bandit::BanditModel model, std::uint64_t seed)
    : data_(&data),
      config_(std::move(config)),
      model_(std::move(model)),
      trial_rng_(make_rng(seed, {2})),
      reward_rng_(make_rng(seed, {3})) {
  config_.validate();
  if (model_.context_dim() != data.context_dim) {
    throw Error(ErrorKind::DimensionMismatch, "bandit model and food dataset disagree on context dimension");
  }
  eval_ = config_.eval_workload ? config_.eval_workload : config_.policy.workload;
  if (!eval_) eval_ = std::make_shared<const workload::WorkloadModel>(workload::ConstantModel{});

  if (config_.foods.empty()) {
    const auto pool = data.types_in(config_.split);
    if (pool.empty()) throw Error(ErrorKind::ConfigError, std::string("split '") + to_string(config_.split) + "' is empty");
    Rng order = make_rng(seed, {1});
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    for (int i = 0; i < config_.n_foods; ++i) foods_.push_back(pool[pick(order)]);
  } else {
    for (int f : config_.foods)
      if (f < 0 || f >= static_cast<int>(data.types.size()))
        throw Error(ErrorKind::ConfigError, "food type " + std::to_string(f) + " not in dataset");
    foods_ = config_.foods;
  }
  trace_.wl0 = config_.wl0;
  trace_.max_attempts = config_.max_attempts;
  trace_.wl_final = config_.wl0;
  trace_.foods.push_back({foods_.front(), 0, false, false});
  draw_trial();
}

const Vector& Episode::context() const {
  if (finished()) throw Error(ErrorKind::EpisodeFinished, "episode has no current context");
  return data_->context(food_type(), trial_);
}

void Episode::draw_trial() {
  const auto n = data_->types[food_type()].contexts.size();
  trial_ = static_cast<int>(std::uniform_int_distribution<size_t>(0, n - 1)(trial_rng_));
}

void Episode::next_food() {
  ++food_pos_;
  attempt_ = 0;
  committed_.reset();
  committed_is_human_ = false;
  if (!finished()) {
    trace_.foods.push_back({food_type(), 0, false, false});
    draw_trial();
  }
}

double Episode::current_workload() const {
  return std::clamp(workload::predict(*eval_, config_.wl0, trace_.queries, static_cast<int>(trace_.steps.size())), 0.0,
                    1.0);
}

bandit::GapDecision Episode::decide(Rng& policy_rng) const {
  if (finished()) throw Error(ErrorKind::EpisodeFinished, "episode is over");
  bandit::GapDecision d;
  d.stat.gap = std::numeric_limits<double>::quiet_NaN();
  d.threshold = std::numeric_limits<double>::quiet_NaN();
  if (committed_) {
    d.action = ActionId::query();
    return d;
  }
  const auto& x = context();
  const auto& pol = config_.policy;
  switch (pol.kind) {
    case bandit::PolicyKind::LinUCB: d.action = bandit::select_linucb(model_, x); break;
    case bandit::PolicyKind::AlwaysQuery: d.action = bandit::select_alwaysquery(); break;
    case bandit::PolicyKind::ExpDecay:
      d.action = bandit::select_expdecay(model_, x, food_pos_, first_step_of_food(), pol.decay_c, policy_rng);
      break;
    case bandit::PolicyKind::QueryGap:
      d = bandit::select_qg(model_, x, config_.wl0, trace_.queries, timestep(), pol.gap_w, *pol.workload,
                            pol.counterfactual);
      break;
  }
  return d;
}

StepRecord Episode::step(ActionId action, std::optional<ActionId> expert_override, const bandit::GapDecision* decision) {
  if (finished()) throw Error(ErrorKind::EpisodeFinished, "episode is over");
  if (!action.is_robot() && !action.is_query()) throw Error(ErrorKind::InvalidAction, "unknown action id");
  if (expert_override && !expert_override->is_robot())
    throw Error(ErrorKind::InvalidAction, "the expert must answer with a robot action");

  StepRecord rec;
  rec.t = timestep();
  rec.food_pos = food_pos_;
  rec.food_type = food_type();
  rec.trial = trial_;
  rec.attempt = attempt_ + 1;
  rec.chosen = action;
  const Vector& x = context();
  auto& outcome = trace_.foods.back();

  if (action.is_query() || committed_) {
    rec.chosen = ActionId::query();
    if (!committed_) {
      rec.queried = true;
      outcome.queried = true;
      committed_is_human_ = expert_override.has_value();
      committed_ = committed_is_human_ ? *expert_override : expert_action(*data_, rec.food_type, trial_);
      trace_.queries.push_back({rec.t, config_.policy.counterfactual});
    }
    rec.committed = true;
    rec.human = committed_is_human_;
    rec.executed = committed_is_human_ ? *committed_ : expert_action(*data_, rec.food_type, trial_);
  } else {
    rec.executed = action;
  }

  const double p = data_->success(rec.food_type, trial_, rec.executed.value);
  rec.reward = bernoulli(reward_rng_, p) ? 1 : 0;
  rec.r_task = p;
  if (!rec.committed || config_.update_on_query) model_.update(x, rec.executed.value, rec.reward);
  rec.workload = std::clamp(workload::predict(*eval_, config_.wl0, trace_.queries, rec.t), 0.0, 1.0);
  if (decision) {
    rec.gap = decision->stat.gap;
    rec.threshold = decision->threshold;
  }
  trace_.steps.push_back(rec);

  ++attempt_;
  outcome.attempts = attempt_;
  if (rec.reward == 1) {
    outcome.converged = true;
    next_food();
  } else if (attempt_ >= config_.max_attempts) {
    next_food();
  } else {
    draw_trial();
  }
  if (finished()) trace_.wl_final = rec.workload;
  return rec;
}

EpisodeTrace run_episode(const FoodDataset& data, const EpisodeConfig& config, const bandit::BanditModel& model,
                         std::uint64_t seed, std::uint64_t policy_seed) {
  Episode ep(data, config, model, seed);
  Rng policy_rng = make_rng(policy_seed, {0xA11CE});
  while (!ep.finished()) {
    const auto d = ep.decide(policy_rng);
    ep.step(d.action, std::nullopt, &d);
  }
  return ep.trace();
}

EpisodeTrace replay_episode(const FoodDataset& data, const EpisodeConfig& config, const bandit::BanditModel& model,
                            std::uint64_t seed, std::span<const StepRecord> recorded) {
  Episode ep(data, config, model, seed);
  for (const auto& rec : recorded) {
    if (ep.finished()) throw Error(ErrorKind::EpisodeFinished, "recorded trace is longer than the replayed episode");
    std::optional<ActionId> override;
    if (rec.queried && rec.human) override = rec.executed;
    bandit::GapDecision d;
    d.stat.gap = rec.gap;
    d.threshold = rec.threshold;
    ep.step(rec.chosen, override, &d);
  }
  return ep.trace();
}

namespace {

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

double from_nullable(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json query_json(const study::TimedQuery& q) {
  return {{"t", q.timestep},
          {"difficulty", study::to_string(q.type.difficulty)},
          {"response", study::to_string(q.type.response)},
          {"distraction", study::to_string(q.type.distraction)}};
}

}  // namespace

std::string trace_to_text(const EpisodeTrace& trace) {
  std::string out;
  json foods = json::array();
  for (const auto& f : trace.foods) foods.push_back(f.type);
  out += json{{"schema", "hilbandit.trace"},
              {"version", kTraceSchemaVersion},
              {"wl0", trace.wl0},
              {"max_attempts", trace.max_attempts},
              {"foods", foods}}
             .dump();
  out += '\n';
  for (const auto& s : trace.steps) {
    out += json{{"record", "step"},
                {"t", s.t},
                {"food_pos", s.food_pos},
                {"food_type", s.food_type},
                {"trial", s.trial},
                {"attempt", s.attempt},
                {"chosen", s.chosen.value},
                {"executed", s.executed.value},
                {"reward", s.reward},
                {"r_task", s.r_task},
                {"queried", s.queried},
                {"committed", s.committed},
                {"human", s.human},
                {"workload", s.workload},
                {"gap", nullable(s.gap)},
                {"threshold", nullable(s.threshold)}}
               .dump();
    out += '\n';
  }
  json outcomes = json::array();
  for (const auto& f : trace.foods)
    outcomes.push_back({{"type", f.type}, {"attempts", f.attempts}, {"converged", f.converged}, {"queried", f.queried}});
  json queries = json::array();
  for (const auto& q : trace.queries) queries.push_back(query_json(q));
  out += json{{"record", "summary"}, {"wl_final", trace.wl_final}, {"outcomes", outcomes}, {"queries", queries}}.dump();
  out += '\n';
  return out;
}

EpisodeTrace trace_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  EpisodeTrace trace;
  size_t lineno = 0;
  bool header = false, summary = false;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (!header) {
        if (j.at("schema").get<std::string>() != "hilbandit.trace") throw Error(ErrorKind::ParseError, "not a trace file");
        if (j.at("version").get<int>() != kTraceSchemaVersion)
          throw Error(ErrorKind::SchemaVersionMismatch, "trace version " + j.at("version").dump());
        trace.wl0 = j.at("wl0").get<double>();
        trace.max_attempts = j.at("max_attempts").get<int>();
        header = true;
        continue;
      }
      const auto kind = j.at("record").get<std::string>();
      if (kind == "step") {
        StepRecord s;
        s.t = j.at("t").get<int>();
        s.food_pos = j.at("food_pos").get<int>();
        s.food_type = j.at("food_type").get<int>();
        s.trial = j.at("trial").get<int>();
        s.attempt = j.at("attempt").get<int>();
        s.chosen = {j.at("chosen").get<int>()};
        s.executed = {j.at("executed").get<int>()};
        s.reward = j.at("reward").get<int>();
        s.r_task = j.at("r_task").get<double>();
        s.queried = j.at("queried").get<bool>();
        s.committed = j.at("committed").get<bool>();
        s.human = j.at("human").get<bool>();
        s.workload = j.at("workload").get<double>();
        s.gap = from_nullable(j.at("gap"));
        s.threshold = from_nullable(j.at("threshold"));
        trace.steps.push_back(s);
      } else if (kind == "summary") {
        trace.wl_final = j.at("wl_final").get<double>();
        for (const auto& o : j.at("outcomes"))
          trace.foods.push_back({o.at("type").get<int>(), o.at("attempts").get<int>(), o.at("converged").get<bool>(),
                                 o.at("queried").get<bool>()});
        for (const auto& q : j.at("queries"))
          trace.queries.push_back({q.at("t").get<int>(),
                                   {study::parse_difficulty(q.at("difficulty").get<std::string>()),
                                    study::parse_response(q.at("response").get<std::string>()),
                                    study::parse_distraction(q.at("distraction").get<std::string>())}});
        summary = true;
      } else {
        throw Error(ErrorKind::ParseError, "unknown record '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, "trace line " + std::to_string(lineno) + ": " + e.what());
  }
  if (!header || !summary) throw Error(ErrorKind::ParseError, "trace is truncated");
  return trace;
}

void save_trace(const std::filesystem::path& path, const EpisodeTrace& trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << trace_to_text(trace);
}

EpisodeTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return trace_from_text(ss.str());
}

void save_food_dataset(const std::filesystem::path& path, const FoodDataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << json{{"schema", "hilbandit.foods"}, {"version", 1}, {"context_dim", data.context_dim}, {"epsilon", data.epsilon}}
             .dump()
      << '\n';
  for (const auto& ft : data.types) {
    json contexts = json::array();
    for (const auto& x : ft.contexts) contexts.push_back(std::vector<double>(x.data(), x.data() + x.size()));
    out << json{{"type", ft.name}, {"split", to_string(ft.split)}, {"contexts", contexts}, {"success", ft.success}}.dump()
        << '\n';
  }
}

FoodDataset load_food_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  FoodDataset data;
  std::string line;
  size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (lineno == 1) {
        if (j.at("schema").get<std::string>() != "hilbandit.foods") throw Error(ErrorKind::ParseError, "not a food dataset");
        if (j.at("version").get<int>() != 1) throw Error(ErrorKind::SchemaVersionMismatch, "food dataset version");
        data.context_dim = j.at("context_dim").get<int>();
        data.epsilon = j.at("epsilon").get<double>();
        continue;
      }
      FoodType ft;
      ft.name = j.at("type").get<std::string>();
      ft.split = parse_split(j.at("split").get<std::string>());
      for (const auto& c : j.at("contexts")) {
        const auto v = c.get<std::vector<double>>();
        if (static_cast<int>(v.size()) != data.context_dim)
          throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": context width mismatch");
        ft.contexts.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
      }
      ft.success = j.at("success").get<std::vector<SuccessRow>>();
      if (ft.success.size() != ft.contexts.size())
        throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": trial count mismatch");
      data.types.push_back(std::move(ft));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, "food dataset line " + std::to_string(lineno) + ": " + e.what());
  }
  return data;
}

}  // namespace hilbandit::sim
