#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hilbandit/bandit.hpp"
#include "hilbandit/sim.hpp"
#include "hilbandit/study.hpp"
#include "hilbandit/workload.hpp"

namespace hilbandit::service {

inline constexpr int kSessionSchemaVersion = 1;
inline constexpr std::size_t kDefaultCapacity = 64;

enum class Phase { AwaitingPolicy, AwaitingHumanAction, AwaitingSurvey, Finished };
const char* to_string(Phase p);

/// PerQuery: a survey after every human-answered query. PrePost: one survey before the first step and one after the end.
enum class SurveyMode { PerQuery, PrePost };

struct SessionConfig {
  bandit::PolicyKind policy = bandit::PolicyKind::AlwaysQuery;
  double gap_w = 4.0;
  double decay_c = 0.5;
  std::vector<int> foods;
  sim::Split split = sim::Split::Test;
  int n_foods = 3;
  int max_attempts = 10;
  /// Internal WL_0 handed to the policy; reported deltas come from surveys.
  double wl0 = 0.5;
  std::uint64_t seed = 0;
  std::uint64_t policy_seed = 0;
  SurveyMode survey = SurveyMode::PerQuery;
  /// Show success bars while the episode runs; otherwise only once finished.
  bool reveal_success = false;

  static SessionConfig from_json(const std::string& text);
  std::string to_json() const;
};

struct Event {
  std::uint64_t seq = 0;
  std::string type;  // step_taken, query_raised, human_action, survey_due, survey_recorded, episode_finished
  std::string data;  // JSON object
};

struct SurveyRecord {
  std::string kind;  // query, pre, post
  int timestep = 0;
  study::TlxResponse tlx;
  double reported = 0.0;
  double predicted = 0.0;
};

struct RegretRecord {
  int timestep = 0;
  int human_action = 0;
  int oracle_action = 0;
  double regret = 0.0;  // s(a*) - s(human)
};

struct ServiceOptions {
  /// Session files live here; empty disables persistence.
  std::filesystem::path data_dir;
  std::size_t capacity = kDefaultCapacity;
};

/// Shared environment for every session.
struct Environment {
  sim::FoodDataset data;
  bandit::BanditModel model;
  std::shared_ptr<const workload::WorkloadModel> workload;
};

class Service {
 public:
  Service(Environment env, ServiceOptions options = {});
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Returns the new session id. ConfigError on invalid config, CapacityExceeded when full.
  std::string create_session(const SessionConfig& config);

  /// State documents are JSON text.
  std::string get_state(const std::string& id) const;
  std::string advance(const std::string& id);
  std::string submit_action(const std::string& id, int action);
  /// kind "query" answers a pending survey; "pre" / "post" are the PrePost-mode surveys.
  std::string submit_survey(const std::string& id, const study::TlxResponse& tlx, const std::string& kind = "query");

  Phase phase(const std::string& id) const;
  sim::EpisodeTrace trace(const std::string& id) const;
  std::vector<SurveyRecord> surveys(const std::string& id) const;
  std::vector<RegretRecord> regret(const std::string& id) const;
  SessionConfig config(const std::string& id) const;

  /// Events with seq > after_seq, in order.
  std::vector<Event> events_since(const std::string& id, std::uint64_t after_seq) const;
  /// Blocks until an event newer than after_seq exists, the timeout expires, or the service stops.
  std::vector<Event> wait_events(const std::string& id, std::uint64_t after_seq, std::chrono::milliseconds timeout) const;
  bool session_finished(const std::string& id) const;

  /// Predicted-vs-reported workload pairs and regret log.
  std::string export_session(const std::string& id) const;

  std::vector<std::string> session_ids() const;
  std::size_t live_sessions() const;
  void shutdown();

  const Environment& environment() const { return env_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  void apply(Session& s, const std::string& input, bool persist);
  void persist(const Session& s) const;
  void load_sessions();
  std::string state_json(const Session& s) const;

  Environment env_;
  ServiceOptions options_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::atomic<bool> stopping_{false};
};

Phase parse_phase(const std::string& s);

}  // namespace hilbandit::service
