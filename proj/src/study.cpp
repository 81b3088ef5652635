#include "hilbandit/study.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "hilbandit/error.hpp"
#include "hilbandit/rng.hpp"

namespace hilbandit::study {

using nlohmann::json;

std::array<double, kEncodingWidth> encode(const QueryType& q) {
  std::array<double, kEncodingWidth> out{};
  out[static_cast<int>(q.difficulty)] = 1.0;
  out[2 + static_cast<int>(q.response)] = 1.0;
  out[5 + static_cast<int>(q.distraction)] = 1.0;
  return out;
}

std::vector<double> encode_history(std::span<const TimedQuery> timeline, int now, int history_len) {
  std::vector<double> features(static_cast<size_t>(kEncodingWidth * history_len), 0.0);
  for (const auto& q : timeline) {
    const int lag = now - q.timestep;
    if (lag < 0 || lag >= history_len || q.timestep < 1) continue;
    const auto e = encode(q.type);
    for (int k = 0; k < kEncodingWidth; ++k) features[lag * kEncodingWidth + k] += e[k];
  }
  return features;
}

bool TlxResponse::valid() const {
  for (int v : {mental, temporal, performance, effort, frustration})
    if (v < 1 || v > 5) return false;
  return true;
}

double tlx_to_workload(const TlxResponse& t) {
  auto n = [](int v) { return (v - 1) / 4.0; };
  return 0.4 * n(t.mental) + 0.2 * n(t.temporal) + 0.4 * n(t.effort);
}

TlxResponse tlx_for_workload(double workload) {
  // Score in 0.05 units is 2*mental' + temporal' + 2*effort' with each primed value in 0..4.
  const int k = static_cast<int>(std::lround(std::clamp(workload, 0.0, 1.0) * 20.0));
  TlxResponse best;
  int best_spread = 1 << 20;
  for (int m = 0; m <= 4; ++m)
    for (int e = 0; e <= 4; ++e) {
      const int t = k - 2 * m - 2 * e;
      if (t < 0 || t > 4) continue;
      const int spread = std::abs(m - e) * 4 + std::abs(t - m);
      if (spread < best_spread) {
        best_spread = spread;
        best = TlxResponse{m + 1, t + 1, 5 - m, e + 1, std::max(1, m)};
      }
    }
  return best;
}

double LagProcess::evaluate(double wl0, std::span<const double> features, double impact_scale) const {
  double v = gamma * wl0 + bias;
  for (size_t i = 0; i < features.size() && i < lag_weights.size(); ++i) v += impact_scale * lag_weights[i] * features[i];
  return v;
}

LagProcess LagProcess::standard() {
  LagProcess p;
  const std::array<double, kEncodingWidth> base{0.030, 0.070, 0.020, 0.040, 0.070, 0.000, 0.030, 0.060};
  p.lag_weights.resize(static_cast<size_t>(kEncodingWidth * p.history_len));
  double decay = 1.0;
  for (int lag = 0; lag < p.history_len; ++lag, decay *= 0.75)
    for (int k = 0; k < kEncodingWidth; ++k) p.lag_weights[lag * kEncodingWidth + k] = base[k] * decay;
  return p;
}

int PopulationProfile::participant_count() const {
  int n = 0;
  for (const auto& c : cohorts) n += c.participant_count;
  return n;
}

PopulationProfile PopulationProfile::d1(int participants) {
  PopulationProfile p;
  p.name = PopulationName::D1;
  p.cohorts = {{"d1", participants, 1.0}};
  return p;
}

PopulationProfile PopulationProfile::d2(int participants) {
  PopulationProfile p;
  p.name = PopulationName::D2;
  p.cohorts = {{"d2", participants, 1.35}};
  return p;
}

PopulationProfile PopulationProfile::d12(int participants) {
  PopulationProfile p;
  p.name = PopulationName::D12;
  const int n2 = std::max(1, static_cast<int>(std::lround(participants * 17.0 / 106.0)));
  p.cohorts = {{"d1", std::max(0, participants - n2), 1.0}, {"d2", n2, 1.35}};
  return p;
}

const char* to_string(PopulationName n) {
  switch (n) {
    case PopulationName::D1: return "d1";
    case PopulationName::D2: return "d2";
    case PopulationName::D12: return "d12";
  }
  return "?";
}

PopulationName parse_population(const std::string& s) {
  if (s == "d1") return PopulationName::D1;
  if (s == "d2") return PopulationName::D2;
  if (s == "d12") return PopulationName::D12;
  throw Error(ErrorKind::ConfigError, "unknown population profile '" + s + "'");
}

std::vector<StudyCondition> generate_synthetic_study(const PopulationProfile& profile, std::uint64_t seed) {
  std::vector<StudyCondition> out;
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  for (size_t ci = 0; ci < profile.cohorts.size(); ++ci) {
    const auto& cohort = profile.cohorts[ci];
    for (int p = 0; p < cohort.participant_count; ++p) {
      char id[48];
      std::snprintf(id, sizeof id, "%s-%03d", cohort.id_prefix.c_str(), p);
      // Streams keyed by (cohort slot, participant) so single-cohort D1 and D2 draws line up.
      Rng rng = make_rng(seed, {ci, static_cast<std::uint64_t>(p)});
      const double offset = profile.noise_scale * unit_normal(rng);
      for (int d = 0; d < 2; ++d)
        for (int dist = 0; dist < 3; ++dist)
          for (int spacing : {6, 12}) {
            StudyCondition c;
            c.participant_id = id;
            c.difficulty = static_cast<Difficulty>(d);
            c.distraction = static_cast<Distraction>(dist);
            c.query_spacing = spacing;
            c.horizon = kDefaultHorizon;
            c.initial_workload = profile.initial_workload_min +
                                 (profile.initial_workload_max - profile.initial_workload_min) * uniform01(rng);
            std::vector<TimedQuery> timeline;
            int k = 0;
            for (int t = spacing; t <= c.horizon; t += spacing, ++k) {
              QueryEvent ev;
              ev.timestep = t;
              ev.query = {c.difficulty, static_cast<ResponseType>(k % 3), c.distraction};
              timeline.push_back({t, ev.query});
              const auto feats = encode_history(timeline, t, profile.process.history_len);
              const double noise = profile.noise_scale * unit_normal(rng);
              const double latent = profile.process.evaluate(c.initial_workload, feats, cohort.impact_scale);
              ev.workload = std::clamp(latent + offset + noise, 0.0, 1.0);
              ev.tlx = tlx_for_workload(ev.workload);
              c.events.push_back(ev);
            }
            out.push_back(std::move(c));
          }
    }
  }
  return out;
}

std::vector<WorkloadSample> build_training_pairs(const std::vector<StudyCondition>& conditions, int history_len) {
  if (history_len < 1) throw Error(ErrorKind::ConfigError, "history length must be >= 1");
  std::vector<WorkloadSample> out;
  for (const auto& c : conditions) {
    std::vector<TimedQuery> timeline;
    for (const auto& ev : c.events) {
      timeline.push_back({ev.timestep, ev.query});
      WorkloadSample s;
      s.initial_workload = c.initial_workload;
      s.features = encode_history(timeline, ev.timestep, history_len);
      s.target = ev.workload;
      s.group = c.participant_id;
      s.timestep = ev.timestep;
      s.timeline = timeline;
      out.push_back(std::move(s));
    }
  }
  return out;
}

const char* to_string(Difficulty v) { return v == Difficulty::Easy ? "easy" : "hard"; }

const char* to_string(ResponseType v) {
  switch (v) {
    case ResponseType::MCQ: return "MCQ";
    case ResponseType::BB: return "BB";
    case ResponseType::OE: return "OE";
  }
  return "?";
}

const char* to_string(Distraction v) {
  switch (v) {
    case Distraction::None: return "none";
    case Distraction::EasyAdd: return "easy_add";
    case Distraction::HardVideo: return "hard_video";
  }
  return "?";
}

Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "hard") return Difficulty::Hard;
  throw Error(ErrorKind::ParseError, "difficulty '" + s + "'");
}

ResponseType parse_response(const std::string& s) {
  if (s == "MCQ") return ResponseType::MCQ;
  if (s == "BB") return ResponseType::BB;
  if (s == "OE") return ResponseType::OE;
  throw Error(ErrorKind::ParseError, "response '" + s + "'");
}

Distraction parse_distraction(const std::string& s) {
  if (s == "none") return Distraction::None;
  if (s == "easy_add") return Distraction::EasyAdd;
  if (s == "hard_video") return Distraction::HardVideo;
  throw Error(ErrorKind::ParseError, "distraction '" + s + "'");
}

namespace {

constexpr const char* kStudySchema = "hilbandit.study";

json tlx_json(const TlxResponse& t) {
  return {{"mental", t.mental}, {"temporal", t.temporal}, {"performance", t.performance},
          {"effort", t.effort}, {"frustration", t.frustration}};
}

struct LineContext {
  size_t line;
  std::string prefix() const { return "line " + std::to_string(line) + ": "; }
};

template <typename T>
T field(const json& j, const char* name, const LineContext& ctx) {
  if (!j.contains(name)) throw Error(ErrorKind::ParseError, ctx.prefix() + "missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::ParseError, ctx.prefix() + "field '" + name + "' has the wrong type");
  }
}

template <typename F>
auto parse_enum(const json& j, const char* name, const LineContext& ctx, F parse) {
  const auto s = field<std::string>(j, name, ctx);
  try {
    return parse(s);
  } catch (const Error&) {
    throw Error(ErrorKind::ParseError, ctx.prefix() + "field '" + name + "' has unknown value '" + s + "'");
  }
}

TlxResponse parse_tlx(const json& j, const LineContext& ctx) {
  if (!j.contains("tlx") || !j["tlx"].is_object()) throw Error(ErrorKind::ParseError, ctx.prefix() + "missing field 'tlx'");
  const auto& t = j["tlx"];
  TlxResponse r;
  const std::pair<const char*, int*> slots[] = {{"mental", &r.mental}, {"temporal", &r.temporal},
                                                {"performance", &r.performance}, {"effort", &r.effort},
                                                {"frustration", &r.frustration}};
  for (const auto& [name, slot] : slots) {
    *slot = field<int>(t, name, ctx);
    if (*slot < 1 || *slot > 5) {
      throw Error(ErrorKind::ParseError,
                  ctx.prefix() + "field 'tlx." + name + "' = " + std::to_string(*slot) + " outside Likert range [1, 5]");
    }
  }
  return r;
}

double unit_interval(const json& j, const char* name, const LineContext& ctx) {
  const double v = field<double>(j, name, ctx);
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::ParseError, ctx.prefix() + "field '" + name + "' outside [0, 1]");
  return v;
}

}  // namespace

void save_study(const std::filesystem::path& path, const StudyFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << json{{"schema", kStudySchema}, {"version", kStudySchemaVersion}, {"dt_seconds", file.dt_seconds},
              {"profile", file.profile}}
             .dump()
      << '\n';
  for (const auto& c : file.conditions) {
    out << json{{"record", "condition"},
                {"participant", c.participant_id},
                {"difficulty", to_string(c.difficulty)},
                {"distraction", to_string(c.distraction)},
                {"spacing", c.query_spacing},
                {"horizon", c.horizon},
                {"initial_workload", c.initial_workload},
                {"events", c.events.size()}}
               .dump()
        << '\n';
    for (const auto& e : c.events) {
      out << json{{"record", "event"},
                  {"timestep", e.timestep},
                  {"difficulty", to_string(e.query.difficulty)},
                  {"response", to_string(e.query.response)},
                  {"distraction", to_string(e.query.distraction)},
                  {"workload", e.workload},
                  {"tlx", tlx_json(e.tlx)}}
                 .dump()
          << '\n';
    }
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

StudyFile load_study(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  StudyFile file;
  std::string line;
  size_t lineno = 0;
  bool have_header = false;
  size_t pending_events = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const LineContext ctx{lineno};
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::ParseError, ctx.prefix() + e.what());
    }
    if (!have_header) {
      if (field<std::string>(j, "schema", ctx) != kStudySchema)
        throw Error(ErrorKind::ParseError, ctx.prefix() + "not a study file");
      const int version = field<int>(j, "version", ctx);
      if (version != kStudySchemaVersion) {
        throw Error(ErrorKind::SchemaVersionMismatch,
                    "study file version " + std::to_string(version) + ", expected " + std::to_string(kStudySchemaVersion));
      }
      file.dt_seconds = field<double>(j, "dt_seconds", ctx);
      file.profile = field<std::string>(j, "profile", ctx);
      have_header = true;
      continue;
    }
    const auto kind = field<std::string>(j, "record", ctx);
    if (kind == "condition") {
      if (pending_events != 0) throw Error(ErrorKind::ParseError, ctx.prefix() + "previous condition is missing events");
      StudyCondition c;
      c.participant_id = field<std::string>(j, "participant", ctx);
      c.difficulty = parse_enum(j, "difficulty", ctx, parse_difficulty);
      c.distraction = parse_enum(j, "distraction", ctx, parse_distraction);
      c.query_spacing = field<int>(j, "spacing", ctx);
      c.horizon = field<int>(j, "horizon", ctx);
      c.initial_workload = unit_interval(j, "initial_workload", ctx);
      pending_events = field<size_t>(j, "events", ctx);
      file.conditions.push_back(std::move(c));
    } else if (kind == "event") {
      if (file.conditions.empty() || pending_events == 0)
        throw Error(ErrorKind::ParseError, ctx.prefix() + "event without an open condition");
      QueryEvent e;
      e.timestep = field<int>(j, "timestep", ctx);
      e.query.difficulty = parse_enum(j, "difficulty", ctx, parse_difficulty);
      e.query.response = parse_enum(j, "response", ctx, parse_response);
      e.query.distraction = parse_enum(j, "distraction", ctx, parse_distraction);
      e.workload = unit_interval(j, "workload", ctx);
      e.tlx = parse_tlx(j, ctx);
      auto& c = file.conditions.back();
      if (e.timestep < 0 || e.timestep > c.horizon)
        throw Error(ErrorKind::ParseError, ctx.prefix() + "field 'timestep' outside the condition horizon");
      c.events.push_back(e);
      --pending_events;
    } else {
      throw Error(ErrorKind::ParseError, ctx.prefix() + "unknown record type '" + kind + "'");
    }
  }
  if (!have_header) throw Error(ErrorKind::ParseError, "line 1: missing header");
  if (pending_events != 0) throw Error(ErrorKind::ParseError, "file ends inside a condition");
  return file;
}

}  // namespace hilbandit::study
