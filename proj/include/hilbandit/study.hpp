#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hilbandit::study {

enum class Difficulty { Easy, Hard };
enum class ResponseType { MCQ, BB, OE };
enum class Distraction { None, EasyAdd, HardVideo };

/// Width of one lag's one-hot block: [easy, hard | MCQ, BB, OE | none, easy_add, hard_video].
inline constexpr int kEncodingWidth = 8;

struct QueryType {
  Difficulty difficulty = Difficulty::Easy;
  ResponseType response = ResponseType::MCQ;
  Distraction distraction = Distraction::None;

  friend bool operator==(const QueryType&, const QueryType&) = default;
};

std::array<double, kEncodingWidth> encode(const QueryType& q);

/// A query placed on the workload time axis (integer timesteps of dt seconds).
struct TimedQuery {
  int timestep = 0;
  QueryType type;

  friend bool operator==(const TimedQuery&, const TimedQuery&) = default;
};

/// Lag-feature block of width 8*H for the workload at `now`. Lag i covers timestep now-i;
/// lags with no query, or before timestep 1, stay zero. Multiple queries in one window add.
std::vector<double> encode_history(std::span<const TimedQuery> timeline, int now, int history_len);

struct TlxResponse {
  int mental = 1;
  int temporal = 1;
  int performance = 1;
  int effort = 1;
  int frustration = 1;

  bool valid() const;
  friend bool operator==(const TlxResponse&, const TlxResponse&) = default;
};

double tlx_to_workload(const TlxResponse& t);

/// Likert answers whose weighted score is the 0.05-grid point nearest to `workload`.
TlxResponse tlx_for_workload(double workload);

struct QueryEvent {
  int timestep = 0;
  QueryType query;
  /// Workload score used as the regression target. For surveyed data this equals
  /// tlx_to_workload(tlx); synthetic studies keep the unquantized latent value here.
  double workload = 0.0;
  TlxResponse tlx;

  friend bool operator==(const QueryEvent&, const QueryEvent&) = default;
};

struct StudyCondition {
  std::string participant_id;
  Difficulty difficulty = Difficulty::Easy;
  Distraction distraction = Distraction::None;
  int query_spacing = 6;
  int horizon = 33;
  double initial_workload = 0.5;
  std::vector<QueryEvent> events;

  friend bool operator==(const StudyCondition&, const StudyCondition&) = default;
};

/// Hidden linear lag process that produces synthetic workload targets.
struct LagProcess {
  double gamma = 0.55;
  double bias = 0.02;
  int history_len = 10;
  /// 8*history_len weights, lag-major.
  std::vector<double> lag_weights;

  double evaluate(double wl0, std::span<const double> features, double impact_scale) const;
  static LagProcess standard();
};

enum class PopulationName { D1, D2, D12 };

struct Cohort {
  std::string id_prefix;
  int participant_count = 0;
  double impact_scale = 1.0;
};

struct PopulationProfile {
  PopulationName name = PopulationName::D1;
  std::vector<Cohort> cohorts;
  /// Std of per-event noise and of the per-participant offset.
  double noise_scale = 0.08;
  LagProcess process = LagProcess::standard();
  double initial_workload_min = 0.05;
  double initial_workload_max = 0.65;

  int participant_count() const;

  static PopulationProfile d1(int participants = 89);
  static PopulationProfile d2(int participants = 17);
  /// D1 and D2 cohorts together; `participants` split 89:17 when given.
  static PopulationProfile d12(int participants = 106);
};

const char* to_string(PopulationName n);
PopulationName parse_population(const std::string& s);

inline constexpr int kDefaultHorizon = 33;
inline constexpr double kTimestepSeconds = 10.0;

/// Twelve conditions per participant (difficulty x distraction x spacing), queries every
/// `spacing` timesteps from t = spacing, responses cycling MCQ -> BB -> OE.
std::vector<StudyCondition> generate_synthetic_study(const PopulationProfile& profile, std::uint64_t seed);

struct WorkloadSample {
  double initial_workload = 0.0;
  std::vector<double> features;  // 8*H lag block
  double target = 0.0;
  std::string group;
  int timestep = 0;
  /// Every query of the condition up to and including this one, for continuous-time models.
  std::vector<TimedQuery> timeline;
};

std::vector<WorkloadSample> build_training_pairs(const std::vector<StudyCondition>& conditions, int history_len);

struct StudyFile {
  std::string profile;
  double dt_seconds = kTimestepSeconds;
  std::vector<StudyCondition> conditions;
};

inline constexpr int kStudySchemaVersion = 1;

void save_study(const std::filesystem::path& path, const StudyFile& file);
StudyFile load_study(const std::filesystem::path& path);

const char* to_string(Difficulty v);
const char* to_string(ResponseType v);
const char* to_string(Distraction v);
Difficulty parse_difficulty(const std::string& s);
ResponseType parse_response(const std::string& s);
Distraction parse_distraction(const std::string& s);

}  // namespace hilbandit::study
