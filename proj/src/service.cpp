#include "hilbandit/service.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hilbandit::service {

using nlohmann::json;

const char* to_string(Phase p) {
  switch (p) {
    case Phase::AwaitingPolicy: return "awaiting_policy";
    case Phase::AwaitingHumanAction: return "awaiting_human_action";
    case Phase::AwaitingSurvey: return "awaiting_survey";
    case Phase::Finished: return "finished";
  }
  return "?";
}

Phase parse_phase(const std::string& s) {
  for (auto p : {Phase::AwaitingPolicy, Phase::AwaitingHumanAction, Phase::AwaitingSurvey, Phase::Finished})
    if (s == to_string(p)) return p;
  throw Error(ErrorKind::ParseError, "unknown phase '" + s + "'");
}

namespace {

const char* survey_mode_name(SurveyMode m) { return m == SurveyMode::PerQuery ? "per_query" : "pre_post"; }

json tlx_json(const study::TlxResponse& t) {
  return {{"mental", t.mental},
          {"temporal", t.temporal},
          {"performance", t.performance},
          {"effort", t.effort},
          {"frustration", t.frustration}};
}

study::TlxResponse tlx_from(const json& j) {
  study::TlxResponse t;
  t.mental = j.at("mental").get<int>();
  t.temporal = j.at("temporal").get<int>();
  t.performance = j.at("performance").get<int>();
  t.effort = j.at("effort").get<int>();
  t.frustration = j.at("frustration").get<int>();
  return t;
}

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

SessionConfig SessionConfig::from_json(const std::string& text) {
  SessionConfig c;
  try {
    const json j = text.empty() ? json::object() : json::parse(text);
    if (!j.is_object()) throw Error(ErrorKind::ConfigError, "session config must be an object");
    if (j.contains("policy")) c.policy = bandit::parse_policy(j.at("policy").get<std::string>());
    c.gap_w = j.value("w", c.gap_w);
    c.decay_c = j.value("c", c.decay_c);
    if (j.contains("foods")) c.foods = j.at("foods").get<std::vector<int>>();
    if (j.contains("split")) c.split = sim::parse_split(j.at("split").get<std::string>());
    c.n_foods = j.value("n_foods", c.n_foods);
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    c.wl0 = j.value("wl0", c.wl0);
    c.seed = j.value("seed", c.seed);
    c.policy_seed = j.value("policy_seed", c.policy_seed);
    if (j.contains("survey")) {
      const auto s = j.at("survey").get<std::string>();
      if (s == "per_query") c.survey = SurveyMode::PerQuery;
      else if (s == "pre_post") c.survey = SurveyMode::PrePost;
      else throw Error(ErrorKind::ConfigError, "survey: expected per_query or pre_post");
    }
    c.reveal_success = j.value("reveal_success", c.reveal_success);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("session config: ") + e.what());
  }
  return c;
}

std::string SessionConfig::to_json() const {
  return json{{"policy", bandit::to_string(policy)},
              {"w", gap_w},
              {"c", decay_c},
              {"foods", foods},
              {"split", sim::to_string(split)},
              {"n_foods", n_foods},
              {"max_attempts", max_attempts},
              {"wl0", wl0},
              {"seed", seed},
              {"policy_seed", policy_seed},
              {"survey", survey_mode_name(survey)},
              {"reveal_success", reveal_success}}
      .dump();
}

struct Service::Session {
  std::string id;
  SessionConfig config;
  std::unique_ptr<sim::Episode> episode;
  Rng policy_rng;
  Phase phase = Phase::AwaitingPolicy;
  std::optional<bandit::GapDecision> pending;
  std::optional<bandit::GapDecision> last_decision;
  int survey_timestep = 0;
  bool pre_done = false;
  bool post_done = false;
  std::vector<Event> events;
  std::vector<SurveyRecord> surveys;
  std::vector<RegretRecord> regret;
  std::vector<std::string> inputs;
  mutable std::mutex mu;
  mutable std::condition_variable cv;

  void emit(const std::string& type, json data) {
    Event e;
    e.seq = events.size() + 1;
    e.type = type;
    e.data = data.dump();
    events.push_back(std::move(e));
  }
};

Service::Service(Environment env, ServiceOptions options) : env_(std::move(env)), options_(std::move(options)) {
  if (!env_.workload) env_.workload = std::make_shared<workload::WorkloadModel>(workload::ConstantModel{});
  if (!options_.data_dir.empty()) load_sessions();
}

Service::~Service() { shutdown(); }

void Service::shutdown() {
  stopping_ = true;
  std::lock_guard lock(store_mutex_);
  for (auto& [id, s] : sessions_) {
    std::lock_guard slock(s->mu);
    s->cv.notify_all();
  }
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
  std::lock_guard lock(store_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::UnknownSession, "no session '" + id + "'");
  return it->second;
}

namespace {

std::unique_ptr<sim::Episode> make_episode(const Environment& env, const SessionConfig& c) {
  sim::EpisodeConfig ep;
  ep.foods = c.foods;
  ep.split = c.split;
  ep.n_foods = c.n_foods;
  ep.max_attempts = c.max_attempts;
  ep.wl0 = c.wl0;
  ep.policy.kind = c.policy;
  ep.policy.gap_w = c.gap_w;
  ep.policy.decay_c = c.decay_c;
  ep.policy.workload = env.workload;
  ep.eval_workload = env.workload;
  return std::make_unique<sim::Episode>(env.data, ep, env.model, c.seed);
}

}  // namespace

std::string Service::create_session(const SessionConfig& config) {
  auto s = std::make_shared<Session>();
  s->config = config;
  s->episode = make_episode(env_, config);  // validates the config
  s->policy_rng = make_rng(config.policy_seed, {0xA11CE});
  {
    std::lock_guard lock(store_mutex_);
    size_t live = 0;
    for (const auto& [id, other] : sessions_) {
      std::lock_guard slock(other->mu);
      live += other->phase != Phase::Finished;
    }
    if (live >= options_.capacity)
      throw Error(ErrorKind::CapacityExceeded, "session store holds " + std::to_string(live) + " live sessions");
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id_++));
    s->id = buf;
    sessions_[s->id] = s;
  }
  std::lock_guard slock(s->mu);
  persist(*s);
  return s->id;
}

void Service::apply(Session& s, const std::string& input, bool save) {
  const json in = json::parse(input);
  const auto op = in.at("op").get<std::string>();
  auto& ep = *s.episode;
  const auto& trace = ep.trace();

  auto after_step = [&](const sim::StepRecord& rec, const char* type) {
    s.emit(type, {{"t", rec.t},
                  {"food_pos", rec.food_pos},
                  {"chosen", bandit::action_label(rec.chosen)},
                  {"executed", bandit::action_label(rec.executed)},
                  {"reward", rec.reward},
                  {"committed", rec.committed},
                  {"workload", rec.workload}});
  };
  auto finish_if_done = [&] {
    if (ep.finished()) {
      s.phase = Phase::Finished;
      s.emit("episode_finished", {{"wl_final", trace.wl_final}, {"steps", trace.steps.size()}});
    } else {
      s.phase = Phase::AwaitingPolicy;
    }
  };

  if (op == "advance") {
    if (s.phase != Phase::AwaitingPolicy)
      throw Error(ErrorKind::WrongPhase, std::string("advance needs awaiting_policy, session is ") + to_string(s.phase));
    if (ep.committed()) {
      after_step(ep.step(bandit::ActionId::query()), "step_taken");
      finish_if_done();
    } else {
      const auto d = ep.decide(s.policy_rng);
      s.last_decision = d;
      if (d.action.is_query()) {
        s.pending = d;
        s.phase = Phase::AwaitingHumanAction;
        s.emit("query_raised", {{"t", ep.timestep()},
                                {"food_pos", ep.food_pos()},
                                {"food", env_.data.types[ep.food_type()].name},
                                {"gap", nullable(d.stat.gap)},
                                {"threshold", nullable(d.threshold)}});
      } else {
        after_step(ep.step(d.action, std::nullopt, &d), "step_taken");
        finish_if_done();
      }
    }
  } else if (op == "action") {
    if (s.phase != Phase::AwaitingHumanAction)
      throw Error(ErrorKind::WrongPhase, std::string("no pending query, session is ") + to_string(s.phase));
    const bandit::ActionId a{in.at("action").get<int>()};
    if (!a.is_robot()) throw Error(ErrorKind::InvalidAction, "the expert must answer with a robot action 0..5");
    const auto rec = ep.step(bandit::ActionId::query(), a, &*s.pending);
    s.pending.reset();
    const auto oracle = sim::expert_action(env_.data, rec.food_type, rec.trial);
    s.regret.push_back({rec.t, a.value, oracle.value,
                        env_.data.success(rec.food_type, rec.trial, oracle.value) -
                            env_.data.success(rec.food_type, rec.trial, a.value)});
    after_step(rec, "human_action");
    if (s.config.survey == SurveyMode::PerQuery) {
      s.phase = Phase::AwaitingSurvey;
      s.survey_timestep = rec.t;
      s.emit("survey_due", {{"t", rec.t}, {"kind", "query"}});
    } else {
      finish_if_done();
    }
  } else if (op == "survey") {
    const auto kind = in.at("kind").get<std::string>();
    const auto tlx = tlx_from(in.at("tlx"));
    if (!tlx.valid()) throw Error(ErrorKind::ConfigError, "survey answers must lie on the 1..5 Likert scale");
    SurveyRecord rec{kind, 0, tlx, study::tlx_to_workload(tlx), 0.0};
    if (kind == "query") {
      if (s.phase != Phase::AwaitingSurvey)
        throw Error(ErrorKind::WrongPhase, std::string("no survey due, session is ") + to_string(s.phase));
      rec.timestep = s.survey_timestep;
      rec.predicted = trace.steps.at(static_cast<size_t>(rec.timestep - 1)).workload;
      s.surveys.push_back(rec);
      s.emit("survey_recorded", {{"t", rec.timestep}, {"reported", rec.reported}, {"predicted", rec.predicted}});
      finish_if_done();
    } else if (kind == "pre" || kind == "post") {
      if (s.config.survey != SurveyMode::PrePost)
        throw Error(ErrorKind::WrongPhase, "pre/post surveys need survey mode pre_post");
      const bool pre = kind == "pre";
      if (pre && (s.pre_done || !trace.steps.empty() || s.phase != Phase::AwaitingPolicy))
        throw Error(ErrorKind::WrongPhase, "the pre survey must come before the first step");
      if (!pre && (s.post_done || s.phase != Phase::Finished))
        throw Error(ErrorKind::WrongPhase, "the post survey needs a finished episode");
      (pre ? s.pre_done : s.post_done) = true;
      rec.timestep = static_cast<int>(trace.steps.size());
      rec.predicted = pre ? s.config.wl0 : trace.wl_final;
      s.surveys.push_back(rec);
      s.emit("survey_recorded",
             {{"t", rec.timestep}, {"kind", kind}, {"reported", rec.reported}, {"predicted", rec.predicted}});
    } else {
      throw Error(ErrorKind::ConfigError, "survey kind must be query, pre or post");
    }
  } else {
    throw Error(ErrorKind::ParseError, "unknown input '" + op + "'");
  }
  s.inputs.push_back(input);
  if (save) persist(s);
  s.cv.notify_all();
}

std::string Service::advance(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  apply(*s, json{{"op", "advance"}}.dump(), true);
  return state_json(*s);
}

std::string Service::submit_action(const std::string& id, int action) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  apply(*s, json{{"op", "action"}, {"action", action}}.dump(), true);
  return state_json(*s);
}

std::string Service::submit_survey(const std::string& id, const study::TlxResponse& tlx, const std::string& kind) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  apply(*s, json{{"op", "survey"}, {"kind", kind}, {"tlx", tlx_json(tlx)}}.dump(), true);
  return state_json(*s);
}

std::string Service::get_state(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return state_json(*s);
}

Phase Service::phase(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->phase;
}

bool Service::session_finished(const std::string& id) const { return phase(id) == Phase::Finished; }

sim::EpisodeTrace Service::trace(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->episode->trace();
}

std::vector<SurveyRecord> Service::surveys(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->surveys;
}

std::vector<RegretRecord> Service::regret(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->regret;
}

SessionConfig Service::config(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->config;
}

std::vector<Event> Service::events_since(const std::string& id, std::uint64_t after_seq) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (after_seq >= s->events.size()) return {};
  return {s->events.begin() + static_cast<std::ptrdiff_t>(after_seq), s->events.end()};
}

std::vector<Event> Service::wait_events(const std::string& id, std::uint64_t after_seq,
                                        std::chrono::milliseconds timeout) const {
  auto s = find(id);
  std::unique_lock lock(s->mu);
  s->cv.wait_for(lock, timeout, [&] { return stopping_ || s->events.size() > after_seq; });
  if (after_seq >= s->events.size()) return {};
  return {s->events.begin() + static_cast<std::ptrdiff_t>(after_seq), s->events.end()};
}

std::vector<std::string> Service::session_ids() const {
  std::lock_guard lock(store_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

std::size_t Service::live_sessions() const {
  std::lock_guard lock(store_mutex_);
  size_t live = 0;
  for (const auto& [id, s] : sessions_) {
    std::lock_guard slock(s->mu);
    live += s->phase != Phase::Finished;
  }
  return live;
}

std::string Service::state_json(const Session& s) const {
  const auto& ep = *s.episode;
  const auto& trace = ep.trace();
  const bool reveal = s.config.reveal_success || s.phase == Phase::Finished;
  json steps = json::array();
  json trajectory = json::array({s.config.wl0});
  for (const auto& r : trace.steps) {
    json step{{"t", r.t},
              {"food_pos", r.food_pos},
              {"food", env_.data.types[r.food_type].name},
              {"chosen", r.chosen.value},
              {"executed", r.executed.value},
              {"reward", r.reward},
              {"queried", r.queried},
              {"committed", r.committed},
              {"human", r.human},
              {"workload", r.workload}};
    if (reveal) step["r_task"] = r.r_task;
    steps.push_back(std::move(step));
    trajectory.push_back(r.workload);
  }
  json j{{"schema", "hilbandit.session"},
         {"version", kSessionSchemaVersion},
         {"id", s.id},
         {"phase", to_string(s.phase)},
         {"config", json::parse(s.config.to_json())},
         {"n_foods", ep.foods().size()},
         {"pending_query", s.phase == Phase::AwaitingHumanAction},
         {"steps", steps},
         {"workload_trajectory", trajectory},
         {"last_seq", s.events.size()}};
  if (!ep.finished()) {
    j["food_pos"] = ep.food_pos();
    j["food"] = env_.data.types[ep.food_type()].name;
    j["attempt"] = ep.attempt() + 1;
    j["timestep"] = ep.timestep();
    if (reveal) {
      const auto& row = env_.data.types[ep.food_type()].success[ep.trial()];
      j["success"] = std::vector<double>(row.begin(), row.end());
    }
  } else {
    j["food_pos"] = ep.foods().size();
    j["wl_final"] = trace.wl_final;
  }
  if (s.last_decision) {
    j["gap"] = {{"value", nullable(s.last_decision->stat.gap)},
                {"threshold", nullable(s.last_decision->threshold)},
                {"predicted_workload", s.last_decision->predicted_workload}};
  }
  json surveys = json::array();
  for (const auto& r : s.surveys)
    surveys.push_back({{"kind", r.kind}, {"t", r.timestep}, {"reported", r.reported}, {"predicted", r.predicted}});
  j["surveys"] = surveys;
  return j.dump();
}

std::string Service::export_session(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  json pairs = json::array();
  std::optional<double> pre, post;
  for (const auto& r : s->surveys) {
    pairs.push_back({{"kind", r.kind},
                     {"t", r.timestep},
                     {"predicted", r.predicted},
                     {"reported", r.reported},
                     {"tlx", tlx_json(r.tlx)}});
    if (r.kind == "pre") pre = r.reported;
    if (r.kind == "post") post = r.reported;
  }
  json regret = json::array();
  double total = 0.0;
  for (const auto& r : s->regret) {
    regret.push_back({{"t", r.timestep}, {"human", r.human_action}, {"oracle", r.oracle_action}, {"regret", r.regret}});
    total += r.regret;
  }
  json j{{"schema", "hilbandit.session_export"},
         {"version", kSessionSchemaVersion},
         {"id", s->id},
         {"phase", to_string(s->phase)},
         {"internal_wl0", s->config.wl0},
         {"internal_wl0_fixed", true},
         {"pairs", pairs},
         {"regret", regret},
         {"mean_regret", s->regret.empty() ? 0.0 : total / static_cast<double>(s->regret.size())},
         {"trace", sim::trace_to_text(s->episode->trace())}};
  if (pre && post) j["survey_delta_wl"] = *post - *pre;
  return j.dump();
}

void Service::persist(const Session& s) const {
  if (options_.data_dir.empty()) return;
  const auto dir = options_.data_dir / "sessions";
  std::filesystem::create_directories(dir);
  const auto path = dir / (s.id + ".json");
  const auto tmp = dir / (s.id + ".json.tmp");
  json inputs = json::array();
  for (const auto& i : s.inputs) inputs.push_back(json::parse(i));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out << json{{"schema", "hilbandit.session_log"},
                {"version", kSessionSchemaVersion},
                {"id", s.id},
                {"config", json::parse(s.config.to_json())},
                {"inputs", inputs}}
               .dump()
        << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void Service::load_sessions() {
  const auto dir = options_.data_dir / "sessions";
  if (!std::filesystem::exists(dir)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
      j = json::parse(ss.str());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
    if (j.value("version", 0) != kSessionSchemaVersion)
      throw Error(ErrorKind::SchemaVersionMismatch, path.string() + ": session log version");
    auto s = std::make_shared<Session>();
    s->id = j.at("id").get<std::string>();
    s->config = SessionConfig::from_json(j.at("config").dump());
    s->episode = make_episode(env_, s->config);
    s->policy_rng = make_rng(s->config.policy_seed, {0xA11CE});
    for (const auto& input : j.at("inputs")) apply(*s, input.dump(), false);
    unsigned long long n = 0;
    if (std::sscanf(s->id.c_str(), "s%llu", &n) == 1) next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
    sessions_[s->id] = s;
  }
}

}  // namespace hilbandit::service
