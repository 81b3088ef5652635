#include "hilbandit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace hilbandit::experiment {

using nlohmann::json;

namespace {

// Seed stream tags.
constexpr std::uint64_t kFoodsStream = 1;
constexpr std::uint64_t kPretrainStream = 2;
constexpr std::uint64_t kEpisodeStream = 3;
constexpr std::uint64_t kPolicyStream = 4;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::ConfigError, path + ": " + what);
}

/// JSON view that remembers where it sits in the document.
struct Node {
  const json& j;
  std::string path;

  bool has(const char* key) const { return j.is_object() && j.contains(key); }
  Node at(const char* key) const {
    if (!has(key)) config_error(path, std::string("missing field '") + key + "'");
    return {j.at(key), path + "." + key};
  }
  Node at(size_t i) const { return {j.at(i), path + "[" + std::to_string(i) + "]"}; }

  double num() const {
    if (!j.is_number()) config_error(path, "expected a number");
    return j.get<double>();
  }
  long integer() const {
    if (!j.is_number_integer()) config_error(path, "expected an integer");
    return j.get<long>();
  }
  bool boolean() const {
    if (!j.is_boolean()) config_error(path, "expected true or false");
    return j.get<bool>();
  }
  std::string str() const {
    if (!j.is_string()) config_error(path, "expected a string");
    return j.get<std::string>();
  }
  std::vector<double> nums() const {
    if (!j.is_array()) config_error(path, "expected an array of numbers");
    std::vector<double> out;
    for (size_t i = 0; i < j.size(); ++i) out.push_back(at(i).num());
    return out;
  }

  double num_or(const char* key, double d) const { return has(key) ? at(key).num() : d; }
  long int_or(const char* key, long d) const { return has(key) ? at(key).integer() : d; }
  bool bool_or(const char* key, bool d) const { return has(key) ? at(key).boolean() : d; }
};

template <typename F>
auto guarded(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError && e.what() == std::string_view(path)) throw;
    if (std::string_view(e.what()).rfind(path, 0) == 0) throw;
    // Drop the "Kind: " prefix of the inner message.
    std::string_view msg = e.what();
    const std::string_view prefix = to_string(e.kind());
    if (msg.rfind(prefix, 0) == 0 && msg.substr(prefix.size()).rfind(": ", 0) == 0) msg.remove_prefix(prefix.size() + 2);
    config_error(path, std::string(msg));
  }
}

workload::GrangerModel parse_inline_granger(const Node& n) {
  workload::GrangerModel m;
  m.history_len = static_cast<int>(n.int_or("history_len", 1));
  if (m.history_len < 1) config_error(n.path + ".history_len", "must be >= 1");
  m.gamma = n.num_or("gamma", 0.0);
  m.bias = n.num_or("bias", 0.0);
  if (n.has("variant")) m.variant = guarded(n.path + ".variant", [&] { return workload::parse_variant(n.at("variant").str()); });
  const size_t width = static_cast<size_t>(study::kEncodingWidth * m.history_len);
  if (n.has("lag_weights")) {
    m.lag_weights = n.at("lag_weights").nums();
    if (m.lag_weights.size() != width)
      config_error(n.path + ".lag_weights", "needs " + std::to_string(width) + " entries (8 per lag)");
  } else {
    m.lag_weights.assign(width, n.num_or("lag_weight", 0.0));
  }
  m.clamp_output = n.bool_or("clamp", true);
  return m;
}

std::string canonical(const workload::WorkloadModel& m) { return workload::model_to_text(m); }

struct ParsedModel {
  std::shared_ptr<const workload::WorkloadModel> model;
  std::string source;
};

ParsedModel parse_model_source(const Node& n, const std::filesystem::path& base_dir) {
  if (!n.j.is_object()) config_error(n.path, "expected a model source object");
  ParsedModel out;
  if (n.has("constant")) {
    out.model = std::make_shared<workload::WorkloadModel>(workload::ConstantModel{});
  } else if (n.has("average")) {
    out.model = std::make_shared<workload::WorkloadModel>(workload::AverageModel{n.at("average").num()});
  } else if (n.has("granger")) {
    out.model = std::make_shared<workload::WorkloadModel>(parse_inline_granger(n.at("granger")));
  } else if (n.has("file")) {
    const Node f = n.at("file");
    std::filesystem::path p = f.str();
    if (p.is_relative()) p = base_dir / p;
    out.model = guarded(f.path, [&] { return std::make_shared<workload::WorkloadModel>(workload::load_model(p)); });
  } else if (n.has("fit")) {
    const Node f = n.at("fit");
    const auto pop = guarded(f.path + ".population",
                             [&] { return study::parse_population(f.has("population") ? f.at("population").str() : "d1"); });
    const int participants = static_cast<int>(f.int_or("participants", -1));
    study::PopulationProfile profile = pop == study::PopulationName::D1   ? study::PopulationProfile::d1()
                                       : pop == study::PopulationName::D2 ? study::PopulationProfile::d2()
                                                                          : study::PopulationProfile::d12();
    if (participants > 0) {
      profile = pop == study::PopulationName::D1   ? study::PopulationProfile::d1(participants)
                : pop == study::PopulationName::D2 ? study::PopulationProfile::d2(participants)
                                                   : study::PopulationProfile::d12(participants);
    }
    workload::ModelSpec spec;
    spec.kind = workload::ModelKind::Granger;
    spec.variant = workload::GrangerVariant::BoxSim;
    if (f.has("variant")) spec.variant = guarded(f.path + ".variant", [&] { return workload::parse_variant(f.at("variant").str()); });
    spec.history_len = static_cast<int>(f.int_or("history_len", 5));
    if (f.has("ridge_lambda")) spec.ridge_lambda = f.at("ridge_lambda").num();
    const auto seed = static_cast<std::uint64_t>(f.int_or("seed", 0));
    out.model = guarded(f.path, [&] {
      const auto study = study::generate_synthetic_study(profile, seed);
      const auto samples = study::build_training_pairs(study, spec.history_len);
      auto m = workload::fit_model(spec, samples);
      if (auto* g = std::get_if<workload::GrangerModel>(&m)) g->clamp_output = true;
      return std::make_shared<workload::WorkloadModel>(std::move(m));
    });
  } else {
    config_error(n.path, "expected one of constant, average, granger, file, fit");
  }
  out.source = canonical(*out.model);
  return out;
}

study::QueryType parse_query_type(const Node& n) {
  study::QueryType q;
  guarded(n.path, [&] {
    if (n.has("difficulty")) q.difficulty = study::parse_difficulty(n.at("difficulty").str());
    if (n.has("response")) q.response = study::parse_response(n.at("response").str());
    if (n.has("distraction")) q.distraction = study::parse_distraction(n.at("distraction").str());
    return 0;
  });
  return q;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return out;
}

/// Runs `n` independent tasks on `jobs` threads.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& task) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

bool MethodSpec::needs_validation() const {
  return kind == bandit::PolicyKind::ExpDecay || kind == bandit::PolicyKind::QueryGap;
}

std::vector<MethodSpec> default_methods() {
  return {{bandit::PolicyKind::LinUCB, {}},
          {bandit::PolicyKind::AlwaysQuery, {}},
          {bandit::PolicyKind::ExpDecay, {0.1, 0.25, 0.5, 1.0, 2.0}},
          {bandit::PolicyKind::QueryGap, {0.5, 1.0, 2.0, 4.0, 8.0}}};
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) config_error("seeds", "needs at least one seed");
  if (policy_seeds < 1) config_error("policy_seeds", "must be >= 1");
  if (settings.empty()) config_error("settings", "needs at least one workload setting");
  if (methods.empty()) config_error("methods", "needs at least one method");
  if (w_task.empty()) config_error("w_task", "grid is empty");
  for (double w : w_task)
    if (!(w >= 0.0 && w <= 1.0)) config_error("w_task", "values must lie in [0, 1]");
  for (size_t i = 0; i < methods.size(); ++i)
    if (methods[i].needs_validation() && methods[i].candidates.empty())
      config_error("methods[" + std::to_string(i) + "]", "hyperparameter grid is empty");
  std::set<std::string> names;
  for (size_t i = 0; i < settings.size(); ++i) {
    if (!settings[i].policy_model || !settings[i].eval_model)
      config_error("settings[" + std::to_string(i) + "]", "missing workload model");
    if (!names.insert(settings[i].name).second)
      config_error("settings[" + std::to_string(i) + "].name", "duplicate setting name");
  }
  if (max_attempts < 1) config_error("episode.max_attempts", "must be >= 1");
  if (n_foods < 1) config_error("episode.foods", "must be >= 1");
  if (!(wl0 >= 0.0 && wl0 <= 1.0)) config_error("episode.wl0", "must lie in [0, 1]");
  if (!(alpha > 0.0)) config_error("episode.alpha", "must be > 0");
  if (!(lambda > 0.0)) config_error("episode.lambda", "must be > 0");
  if (jobs < 1) config_error("jobs", "must be >= 1");
  if (foods.n_types < 4) config_error("foods.types", "needs at least 4 food types");
  if (foods.validation_types < 1 || foods.test_types < 1 ||
      foods.validation_types + foods.test_types >= foods.n_types)
    config_error("foods", "validation and test types must leave pretrain types");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  const Node root{doc, "config"};
  if (!doc.is_object()) config_error("config", "expected an object");
  if (root.at("schema").str() != "hilbandit.experiment") config_error("config.schema", "expected 'hilbandit.experiment'");
  if (root.at("version").integer() != kConfigSchemaVersion)
    throw Error(ErrorKind::SchemaVersionMismatch,
                "config.version: expected " + std::to_string(kConfigSchemaVersion));

  ExperimentConfig c;
  c.root_seed = static_cast<std::uint64_t>(root.int_or("root_seed", 0));
  if (root.has("seeds")) {
    const Node s = root.at("seeds");
    c.seeds.clear();
    if (s.j.is_number_integer()) {
      const long n = s.integer();
      if (n < 1) config_error(s.path, "must be >= 1");
      for (long i = 0; i < n; ++i) c.seeds.push_back(static_cast<std::uint64_t>(i));
    } else if (s.j.is_array()) {
      for (size_t i = 0; i < s.j.size(); ++i) c.seeds.push_back(static_cast<std::uint64_t>(s.at(i).integer()));
    } else {
      config_error(s.path, "expected a seed count or a list of seeds");
    }
  }
  c.policy_seeds = static_cast<int>(root.int_or("policy_seeds", c.policy_seeds));

  if (root.has("foods")) {
    const Node f = root.at("foods");
    c.foods.context_dim = static_cast<int>(f.int_or("dim", c.foods.context_dim));
    c.foods.n_types = static_cast<int>(f.int_or("types", c.foods.n_types));
    c.foods.n_trials = static_cast<int>(f.int_or("trials", c.foods.n_trials));
    c.foods.context_noise = f.num_or("noise", c.foods.context_noise);
    c.foods.epsilon = f.num_or("epsilon", c.foods.epsilon);
    c.foods.validation_types = static_cast<int>(f.int_or("validation_types", c.foods.validation_types));
    c.foods.test_types = static_cast<int>(f.int_or("test_types", c.foods.test_types));
  }
  if (root.has("episode")) {
    const Node e = root.at("episode");
    c.n_foods = static_cast<int>(e.int_or("foods", c.n_foods));
    c.max_attempts = static_cast<int>(e.int_or("max_attempts", c.max_attempts));
    c.wl0 = e.num_or("wl0", c.wl0);
    c.alpha = e.num_or("alpha", c.alpha);
    c.lambda = e.num_or("lambda", c.lambda);
    c.update_on_query = e.bool_or("update_on_query", c.update_on_query);
    if (e.has("counterfactual")) c.counterfactual = parse_query_type(e.at("counterfactual"));
  }

  const Node settings = root.at("settings");
  if (!settings.j.is_array()) config_error(settings.path, "expected an array");
  for (size_t i = 0; i < settings.j.size(); ++i) {
    const Node s = settings.at(i);
    WorkloadSetting w;
    w.name = s.has("name") ? s.at("name").str() : "setting" + std::to_string(i);
    auto pm = parse_model_source(s.at("policy_model"), base_dir);
    w.policy_model = pm.model;
    w.policy_source = pm.source;
    if (s.has("eval_model")) {
      auto em = parse_model_source(s.at("eval_model"), base_dir);
      w.eval_model = em.model;
      w.eval_source = em.source;
    } else {
      w.eval_model = w.policy_model;
      w.eval_source = w.policy_source;
    }
    c.settings.push_back(std::move(w));
  }

  if (root.has("methods")) {
    const Node m = root.at("methods");
    if (!m.j.is_array()) config_error(m.path, "expected an array");
    const auto defaults = default_methods();
    for (size_t i = 0; i < m.j.size(); ++i) {
      const Node e = m.at(i);
      MethodSpec spec;
      const Node p = e.at("policy");
      spec.kind = guarded(p.path, [&] { return bandit::parse_policy(p.str()); });
      for (const auto& d : defaults)
        if (d.kind == spec.kind) spec.candidates = d.candidates;
      if (spec.kind == bandit::PolicyKind::QueryGap && e.has("w")) spec.candidates = e.at("w").nums();
      if (spec.kind == bandit::PolicyKind::ExpDecay && e.has("c")) spec.candidates = e.at("c").nums();
      if (!spec.needs_validation()) spec.candidates.clear();
      c.methods.push_back(std::move(spec));
    }
  } else {
    c.methods = default_methods();
  }
  if (root.has("w_task")) c.w_task = root.at("w_task").nums();
  if (root.has("output_dir")) {
    std::filesystem::path out = root.at("output_dir").str();
    c.output_dir = out.is_relative() ? base_dir / out : out;
  }
  c.jobs = static_cast<int>(root.int_or("jobs", c.jobs));
  c.write_traces = root.bool_or("write_traces", c.write_traces);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* out = std::getenv("HILBANDIT_OUT"); out && *out) config.output_dir = out;
  if (const char* jobs = std::getenv("HILBANDIT_JOBS"); jobs && *jobs) {
    char* end = nullptr;
    const long n = std::strtol(jobs, &end, 10);
    if (*end != '\0' || n < 1) throw Error(ErrorKind::ConfigError, "HILBANDIT_JOBS: expected a positive integer");
    config.jobs = static_cast<int>(n);
  }
}

void check_split_hygiene(const sim::FoodDataset& data) {
  const auto test = data.types_in(sim::Split::Test);
  const auto val = data.types_in(sim::Split::Validation);
  const auto pre = data.types_in(sim::Split::Pretrain);
  for (int t : test) {
    const auto& name = data.types[t].name;
    for (int o : val)
      if (data.types[o].name == name) throw Error(ErrorKind::ConfigError, "test food '" + name + "' also in validation");
    for (int o : pre)
      if (data.types[o].name == name) throw Error(ErrorKind::ConfigError, "test food '" + name + "' also in pretraining");
  }
  if (test.empty() || val.empty() || pre.empty()) throw Error(ErrorKind::ConfigError, "every split needs a food type");
}

Environment build_environment(const ExperimentConfig& config) {
  auto spec = config.foods;
  spec.seed = derive_seed(config.root_seed, {kFoodsStream});
  Environment env{sim::generate_food_dataset(spec), bandit::BanditModel(spec.context_dim, config.alpha, config.lambda)};
  check_split_hygiene(env.data);
  const auto samples = sim::pretrain_samples(env.data, derive_seed(config.root_seed, {kPretrainStream}));
  env.pretrained.pretrain(samples);
  return env;
}

bandit::PolicyConfig make_policy(const ExperimentConfig& config, const WorkloadSetting& setting,
                                 bandit::PolicyKind kind, double hyper) {
  bandit::PolicyConfig p;
  p.kind = kind;
  p.workload = setting.policy_model;
  p.counterfactual = config.counterfactual;
  if (kind == bandit::PolicyKind::ExpDecay) p.decay_c = hyper;
  if (kind == bandit::PolicyKind::QueryGap) p.gap_w = hyper;
  return p;
}

metrics::EpisodeMetrics with_w_task(metrics::EpisodeMetrics m, double w_task) {
  m.w_task = w_task;
  m.m_wt = metrics::surrogate(w_task, m.r_task_avg, m.delta_wl);
  return m;
}

Evaluation evaluate(const Environment& env, const ExperimentConfig& config, const bandit::PolicyConfig& policy,
                    const std::shared_ptr<const workload::WorkloadModel>& eval_model, sim::Split split,
                    bool keep_traces) {
  const int policy_runs = policy.kind == bandit::PolicyKind::ExpDecay ? config.policy_seeds : 1;
  sim::EpisodeConfig ep;
  ep.split = split;
  ep.n_foods = config.n_foods;
  ep.max_attempts = config.max_attempts;
  ep.wl0 = config.wl0;
  ep.policy = policy;
  ep.eval_workload = eval_model;
  ep.update_on_query = config.update_on_query;

  Evaluation out;
  for (auto seed : config.seeds) {
    const auto episode_seed = derive_seed(config.root_seed, {kEpisodeStream, static_cast<std::uint64_t>(split), seed});
    metrics::EpisodeMetrics mean;
    mean.t_conv.clear();
    for (int j = 0; j < policy_runs; ++j) {
      const auto policy_seed = derive_seed(config.root_seed, {kPolicyStream, seed, static_cast<std::uint64_t>(j)});
      const auto trace = sim::run_episode(env.data, ep, env.pretrained, episode_seed, policy_seed);
      const auto m = metrics::compute_metrics(trace, 1.0);
      if (keep_traces) out.traces.push_back(sim::trace_to_text(trace));
      mean.r_task_avg += m.r_task_avg / policy_runs;
      mean.delta_wl += m.delta_wl / policy_runs;
      mean.t_conv_avg += m.t_conv_avg / policy_runs;
      mean.f_q += m.f_q / policy_runs;
      mean.f_fail_food += m.f_fail_food / policy_runs;
      mean.f_auto_food += m.f_auto_food / policy_runs;
      if (policy_runs == 1) mean.t_conv = m.t_conv;
    }
    out.per_seed.push_back(with_w_task(mean, 1.0));
  }
  return out;
}

ResultsBundle run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Environment env = build_environment(config);

  struct Job {
    size_t setting;
    size_t method;
    double hyper;
    sim::Split split;
    Evaluation result;
  };

  // Phase 1: validation sweeps. The policy's own model scores the candidates.
  std::vector<Job> val_jobs;
  for (size_t s = 0; s < config.settings.size(); ++s)
    for (size_t m = 0; m < config.methods.size(); ++m)
      if (config.methods[m].needs_validation())
        for (double h : config.methods[m].candidates) val_jobs.push_back({s, m, h, sim::Split::Validation, {}});
  parallel_for(val_jobs.size(), config.jobs, [&](size_t i) {
    auto& j = val_jobs[i];
    const auto& setting = config.settings[j.setting];
    j.result = evaluate(env, config, make_policy(config, setting, config.methods[j.method].kind, j.hyper),
                        setting.policy_model, sim::Split::Validation);
  });

  ResultsBundle bundle;
  // selected[(setting, method, w_task index)] = hyperparameter
  std::map<std::tuple<size_t, size_t, size_t>, double> selected;
  for (size_t s = 0; s < config.settings.size(); ++s)
    for (size_t m = 0; m < config.methods.size(); ++m) {
      if (!config.methods[m].needs_validation()) continue;
      for (size_t w = 0; w < config.w_task.size(); ++w) {
        std::vector<ValidationEntry> entries;
        size_t best = 0;
        for (const auto& j : val_jobs) {
          if (j.setting != s || j.method != m) continue;
          double sum = 0.0;
          for (const auto& r : j.result.per_seed) sum += with_w_task(r, config.w_task[w]).m_wt;
          entries.push_back({config.settings[s].name, config.methods[m].name(), j.hyper, config.w_task[w],
                             sum / static_cast<double>(j.result.per_seed.size()), false});
          if (entries.back().mean_m_wt > entries[best].mean_m_wt) best = entries.size() - 1;
        }
        entries[best].selected = true;
        selected[{s, m, w}] = entries[best].candidate;
        bundle.validation.insert(bundle.validation.end(), entries.begin(), entries.end());
      }
    }

  // Phase 2: test runs for every distinct (setting, method, hyperparameter).
  std::vector<Job> test_jobs;
  std::map<std::tuple<size_t, size_t, double>, size_t> test_index;
  for (size_t s = 0; s < config.settings.size(); ++s)
    for (size_t m = 0; m < config.methods.size(); ++m)
      for (size_t w = 0; w < config.w_task.size(); ++w) {
        const double h = config.methods[m].needs_validation() ? selected.at({s, m, w}) : 0.0;
        if (test_index.emplace(std::make_tuple(s, m, h), test_jobs.size()).second)
          test_jobs.push_back({s, m, h, sim::Split::Test, {}});
      }
  parallel_for(test_jobs.size(), config.jobs, [&](size_t i) {
    auto& j = test_jobs[i];
    const auto& setting = config.settings[j.setting];
    j.result = evaluate(env, config, make_policy(config, setting, config.methods[j.method].kind, j.hyper),
                        setting.eval_model, sim::Split::Test, config.write_traces);
  });

  // Phase 3: tables and paired comparisons.
  for (size_t s = 0; s < config.settings.size(); ++s)
    for (size_t w = 0; w < config.w_task.size(); ++w) {
      Table table{config.settings[s].name, config.w_task[w], {}};
      for (size_t m = 0; m < config.methods.size(); ++m) {
        const bool tuned = config.methods[m].needs_validation();
        const double h = tuned ? selected.at({s, m, w}) : 0.0;
        const auto& job = test_jobs[test_index.at({s, m, h})];
        TableRow row;
        row.method = config.methods[m].name();
        if (tuned) row.hyper = h;
        for (const auto& r : job.result.per_seed) row.per_seed.push_back(with_w_task(r, config.w_task[w]));
        row.summary = metrics::aggregate(row.per_seed);
        table.rows.push_back(std::move(row));
      }
      for (size_t a = 0; a < table.rows.size(); ++a)
        for (size_t b = a + 1; b < table.rows.size(); ++b) {
          Comparison c{table.setting, table.w_task, table.rows[a].method, table.rows[b].method, std::nullopt,
                       table.rows[a].per_seed.size()};
          std::vector<double> diffs;
          for (size_t k = 0; k < table.rows[a].per_seed.size(); ++k)
            diffs.push_back(table.rows[a].per_seed[k].m_wt - table.rows[b].per_seed[k].m_wt);
          try {
            c.test = stats::wilcoxon_signed_rank(diffs, stats::Alternative::TwoSided);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::AllZeroDiffs) throw;
          }
          bundle.comparisons.push_back(std::move(c));
        }
      bundle.tables.push_back(std::move(table));
    }

  if (config.write_traces) {
    for (const auto& j : test_jobs) {
      const auto& method = config.methods[j.method];
      std::string dir = method.name();
      if (method.needs_validation()) dir += fmt("_%g", j.hyper);
      const int runs = method.kind == bandit::PolicyKind::ExpDecay ? config.policy_seeds : 1;
      for (size_t k = 0; k < j.result.traces.size(); ++k) {
        std::string file = "seed" + std::to_string(config.seeds[k / runs]);
        if (runs > 1) file += "_policy" + std::to_string(k % runs);
        bundle.traces.push_back({std::filesystem::path("traces") / slug(config.settings[j.setting].name) / slug(dir) /
                                     (file + ".jsonl"),
                                 j.result.traces[k]});
      }
    }
  }

  json settings = json::array();
  for (const auto& s : config.settings)
    settings.push_back({{"name", s.name},
                        {"cross_model", s.cross_model()},
                        {"policy_model", workload::describe(*s.policy_model)},
                        {"eval_model", workload::describe(*s.eval_model)},
                        {"policy_model_spec", json::parse(s.policy_source)},
                        {"eval_model_spec", json::parse(s.eval_source)}});
  json methods = json::array();
  for (const auto& m : config.methods) methods.push_back({{"policy", m.name()}, {"candidates", m.candidates}});
  json food_split = json::object();
  for (auto sp : {sim::Split::Pretrain, sim::Split::Validation, sim::Split::Test}) {
    json names = json::array();
    for (int t : env.data.types_in(sp)) names.push_back(env.data.types[t].name);
    food_split[sim::to_string(sp)] = names;
  }
  bundle.manifest = json{{"schema", "hilbandit.results"},
                         {"version", 1},
                         {"root_seed", config.root_seed},
                         {"seeds", config.seeds},
                         {"policy_seeds", config.policy_seeds},
                         {"food_splits", food_split},
                         {"settings", settings},
                         {"methods", methods},
                         {"w_task", config.w_task}}
                        .dump(2) +
                    "\n";
  return bundle;
}

std::string table_filename(const Table& table) {
  return slug(table.setting) + "_wtask" + fmt("%.2f", table.w_task) + ".csv";
}

std::string table_to_csv(const Table& table, std::size_t seeds) {
  std::string out;
  out += "# setting=" + table.setting + " w_task=" + fmt("%.2f", table.w_task) + " seeds=" + std::to_string(seeds) +
         "; cells are mean±std (unbiased) over evaluation seeds; randomized policies averaged over policy seeds "
         "first; paired tests in comparisons.csv use Wilcoxon signed-rank, zero differences dropped, midranks for "
         "ties, exact for n<=12, else normal approximation with tie correction and 0.5 continuity correction\n";
  out += "method,hyperparameter,r_task_avg,M_wt,f_q,delta_wl,t_conv,f_fail,f_auto\n";
  for (const auto& r : table.rows) {
    out += r.method + "," + (r.hyper ? fmt("%g", *r.hyper) : std::string("-"));
    for (const auto* s : {&r.summary.r_task_avg, &r.summary.m_wt, &r.summary.f_q, &r.summary.delta_wl,
                          &r.summary.t_conv, &r.summary.f_fail_food, &r.summary.f_auto_food})
      out += "," + metrics::format_pm(*s);
    out += "\n";
  }
  return out;
}

void emit_tables(const ResultsBundle& bundle, const std::filesystem::path& dir) {
  auto write = [&](const std::filesystem::path& rel, const std::string& text) {
    const auto path = dir / rel;
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
  };
  for (const auto& t : bundle.tables)
    write(std::filesystem::path("tables") / table_filename(t), table_to_csv(t, t.rows.empty() ? 0 : t.rows[0].per_seed.size()));

  std::string val = "setting,method,candidate,w_task,mean_M_wt,selected\n";
  for (const auto& v : bundle.validation)
    val += v.setting + "," + v.method + "," + fmt("%g", v.candidate) + "," + fmt("%.2f", v.w_task) + "," +
           fmt("%.6f", v.mean_m_wt) + "," + (v.selected ? "1" : "0") + "\n";
  write("validation_log.csv", val);

  std::string cmp =
      "# Wilcoxon signed-rank on paired per-seed M_wt differences (a - b), two-sided; zero differences dropped\n"
      "setting,w_task,method_a,method_b,n,W,p,exact\n";
  for (const auto& c : bundle.comparisons) {
    cmp += c.setting + "," + fmt("%.2f", c.w_task) + "," + c.method_a + "," + c.method_b + "," + std::to_string(c.n) + ",";
    if (c.test)
      cmp += fmt("%.1f", c.test->statistic) + "," + fmt("%.4f", c.test->p) + "," + (c.test->exact ? "1" : "0");
    else
      cmp += "-,1.0000,-";
    cmp += "\n";
  }
  write("comparisons.csv", cmp);
  write("manifest.json", bundle.manifest);
  for (const auto& t : bundle.traces) write(t.relative_path, t.text);
}

}  // namespace hilbandit::experiment
