#include <filesystem>
#include <set>
#include <thread>

#include "doctest.h"
#include "hilbandit/error.hpp"
#include "hilbandit/http_server.hpp"
#include "hilbandit/service.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace hilbandit;
using namespace hilbandit::service;
using nlohmann::json;

namespace {

Environment make_env() {
  sim::FoodDatasetSpec spec;
  spec.seed = 3;
  spec.context_dim = 8;
  Environment env{sim::generate_food_dataset(spec), bandit::BanditModel(8), nullptr};
  env.model.pretrain(sim::pretrain_samples(env.data, 3));
  workload::GrangerModel g;
  g.variant = workload::GrangerVariant::BoxSim;
  g.history_len = 5;
  g.gamma = 0.05;
  g.lag_weights.assign(40, 0.05);
  g.clamp_output = true;
  env.workload = std::make_shared<const workload::WorkloadModel>(g);
  return env;
}

SessionConfig aq_config(std::uint64_t seed = 1) {
  SessionConfig c;
  c.policy = bandit::PolicyKind::AlwaysQuery;
  c.n_foods = 3;
  c.seed = seed;
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

const study::TlxResponse kMidTlx{3, 2, 2, 3, 1};

}  // namespace

TEST_CASE("session creation") {
  Service svc(make_env());
  const auto a = svc.create_session(aq_config());
  const auto b = svc.create_session(aq_config());
  CHECK(a != b);
  CHECK(svc.phase(a) == Phase::AwaitingPolicy);
  CHECK(json::parse(svc.get_state(a)).at("phase") == "awaiting_policy");
  auto bad = aq_config();
  bad.max_attempts = 0;
  CHECK(kind_of([&] { svc.create_session(bad); }) == ErrorKind::ConfigError);
  CHECK(kind_of([&] { svc.get_state("s999999"); }) == ErrorKind::UnknownSession);
  CHECK(kind_of([&] { SessionConfig::from_json(R"({"survey":"sometimes"})"); }) == ErrorKind::ConfigError);
  const auto parsed = SessionConfig::from_json(aq_config(7).to_json());
  CHECK(parsed.seed == 7);
  CHECK(parsed.policy == bandit::PolicyKind::AlwaysQuery);
}

TEST_CASE("LinUCB never waits for a human; AlwaysQuery asks once per food") {
  Service svc(make_env());
  auto lin = aq_config();
  lin.policy = bandit::PolicyKind::LinUCB;
  const auto id = svc.create_session(lin);
  while (svc.phase(id) != Phase::Finished) {
    CHECK(svc.phase(id) == Phase::AwaitingPolicy);
    svc.advance(id);
  }

  const auto aq = svc.create_session(aq_config());
  std::set<int> asked;
  while (svc.phase(aq) != Phase::Finished) {
    const auto st = json::parse(svc.get_state(aq));
    if (svc.phase(aq) == Phase::AwaitingPolicy) {
      const bool first = st.at("attempt").get<int>() == 1;
      svc.advance(aq);
      if (first) {
        CHECK(svc.phase(aq) == Phase::AwaitingHumanAction);
        asked.insert(st.at("food_pos").get<int>());
      }
    } else if (svc.phase(aq) == Phase::AwaitingHumanAction) {
      svc.submit_action(aq, 2);
      CHECK(svc.phase(aq) == Phase::AwaitingSurvey);
    } else {
      svc.submit_survey(aq, kMidTlx);
    }
  }
  CHECK(asked.size() == 3);
}

TEST_CASE("QG with w = 0 on a fresh model defers first") {
  auto env = make_env();
  env.model = bandit::BanditModel(8);
  Service svc(std::move(env));
  auto c = aq_config();
  c.policy = bandit::PolicyKind::QueryGap;
  c.gap_w = 0.0;
  const auto id = svc.create_session(c);
  svc.advance(id);
  CHECK(svc.phase(id) == Phase::AwaitingHumanAction);
  const auto st = json::parse(svc.get_state(id));
  CHECK(st.at("pending_query") == true);
  CHECK(st.at("gap").at("threshold").get<double>() == 0.0);
}

TEST_CASE("phase errors, invalid actions and verbatim human answers") {
  Service svc(make_env());
  const auto id = svc.create_session(aq_config(4));
  CHECK(kind_of([&] { svc.submit_action(id, 1); }) == ErrorKind::WrongPhase);
  CHECK(kind_of([&] { svc.submit_survey(id, kMidTlx); }) == ErrorKind::WrongPhase);
  svc.advance(id);
  CHECK(kind_of([&] { svc.advance(id); }) == ErrorKind::WrongPhase);
  CHECK(kind_of([&] { svc.submit_action(id, bandit::ActionId::query().value); }) == ErrorKind::InvalidAction);
  CHECK(kind_of([&] { svc.submit_action(id, -1); }) == ErrorKind::InvalidAction);
  CHECK(svc.phase(id) == Phase::AwaitingHumanAction);

  const auto& data = svc.environment().data;
  svc.submit_action(id, 5);
  const auto tr = svc.trace(id);
  REQUIRE(tr.steps.size() == 1);
  CHECK(tr.steps[0].executed.value == 5);
  CHECK(tr.steps[0].human);
  const auto reg = svc.regret(id);
  REQUIRE(reg.size() == 1);
  CHECK(reg[0].human_action == 5);
  CHECK(reg[0].oracle_action == sim::expert_action(data, tr.steps[0].food_type, tr.steps[0].trial).value);
  CHECK(reg[0].regret >= 0.0);

  CHECK(kind_of([&] { svc.submit_survey(id, study::TlxResponse{0, 1, 1, 1, 1}); }) == ErrorKind::ConfigError);
  svc.submit_survey(id, study::TlxResponse{1, 1, 1, 1, 1});
  const auto sv = svc.surveys(id);
  REQUIRE(sv.size() == 1);
  CHECK(sv[0].reported == 0.0);
  CHECK(sv[0].timestep == 1);
  CHECK(sv[0].predicted == tr.steps[0].workload);
  CHECK(svc.phase(id) == Phase::AwaitingPolicy);

  // Later attempts of the same food keep executing the human's answer.
  while (svc.phase(id) == Phase::AwaitingPolicy && json::parse(svc.get_state(id)).at("food_pos") == 0) svc.advance(id);
  for (const auto& s : svc.trace(id).steps)
    if (s.food_pos == 0) CHECK(s.executed.value == 5);
}

TEST_CASE("events, resumption, export and replay") {
  Service svc(make_env());
  const auto id = svc.create_session(aq_config(6));
  std::vector<Event> seen;
  std::uint64_t cursor = 0;
  int actions = 0;
  while (svc.phase(id) != Phase::Finished) {
    switch (svc.phase(id)) {
      case Phase::AwaitingPolicy: svc.advance(id); break;
      case Phase::AwaitingHumanAction: svc.submit_action(id, actions++ % 6); break;
      case Phase::AwaitingSurvey: svc.submit_survey(id, kMidTlx); break;
      default: break;
    }
    // Reconnect every few steps from the last seen sequence number.
    if (seen.size() % 3 == 0) {
      for (auto& e : svc.events_since(id, cursor)) {
        seen.push_back(e);
        cursor = e.seq;
      }
    }
  }
  for (auto& e : svc.events_since(id, cursor)) seen.push_back(e);
  for (size_t i = 0; i < seen.size(); ++i) CHECK(seen[i].seq == i + 1);
  CHECK(seen.size() == svc.events_since(id, 0).size());
  int raised = 0, humans = 0, surveys = 0;
  for (const auto& e : seen) {
    raised += e.type == "query_raised";
    humans += e.type == "human_action";
    surveys += e.type == "survey_recorded";
  }
  CHECK(raised >= 3);
  CHECK(humans == 3);
  CHECK(surveys == 3);
  CHECK(seen.back().type == "episode_finished");
  CHECK(svc.wait_events(id, seen.back().seq, std::chrono::milliseconds(10)).empty());

  const auto ex = json::parse(svc.export_session(id));
  CHECK(ex.at("pairs").size() == 3);
  CHECK(ex.at("regret").size() == 3);
  CHECK(ex.at("internal_wl0_fixed") == true);
  for (const auto& p : ex.at("pairs")) CHECK(p.at("reported").get<double>() == study::tlx_to_workload(kMidTlx));

  // The recorded trace replays through the simulator with identical rewards.
  const auto tr = svc.trace(id);
  const auto& env = svc.environment();
  sim::EpisodeConfig ep;
  ep.n_foods = 3;
  ep.policy.kind = bandit::PolicyKind::AlwaysQuery;
  ep.policy.workload = env.workload;
  ep.eval_workload = env.workload;
  const auto replay = sim::replay_episode(env.data, ep, env.model, 6, tr.steps);
  REQUIRE(replay.steps.size() == tr.steps.size());
  for (size_t i = 0; i < tr.steps.size(); ++i) {
    CHECK(replay.steps[i].reward == tr.steps[i].reward);
    CHECK(replay.steps[i].executed == tr.steps[i].executed);
  }
  CHECK(sim::trace_to_text(replay) == sim::trace_to_text(tr));
}

TEST_CASE("pre/post surveys report a delta next to the fixed internal WL_0") {
  Service svc(make_env());
  auto c = aq_config(8);
  c.survey = SurveyMode::PrePost;
  const auto id = svc.create_session(c);
  CHECK(kind_of([&] { svc.submit_survey(id, kMidTlx, "post"); }) == ErrorKind::WrongPhase);
  svc.submit_survey(id, study::TlxResponse{1, 1, 1, 1, 1}, "pre");
  CHECK(kind_of([&] { svc.submit_survey(id, kMidTlx, "pre"); }) == ErrorKind::WrongPhase);
  while (svc.phase(id) != Phase::Finished) {
    if (svc.phase(id) == Phase::AwaitingHumanAction) svc.submit_action(id, 0);
    else svc.advance(id);
    CHECK(svc.phase(id) != Phase::AwaitingSurvey);
  }
  svc.submit_survey(id, study::TlxResponse{5, 5, 5, 5, 5}, "post");
  const auto ex = json::parse(svc.export_session(id));
  CHECK(ex.at("survey_delta_wl").get<double>() == doctest::Approx(1.0));
  CHECK(ex.at("internal_wl0").get<double>() == 0.5);
}

TEST_CASE("blinding hides success bars until the end") {
  Service svc(make_env());
  const auto id = svc.create_session(aq_config());
  CHECK_FALSE(json::parse(svc.get_state(id)).contains("success"));
  auto open = aq_config();
  open.reveal_success = true;
  const auto id2 = svc.create_session(open);
  CHECK(json::parse(svc.get_state(id2)).at("success").size() == 6);
}

TEST_CASE("sessions survive a restart and capacity is bounded") {
  const auto dir = std::filesystem::temp_directory_path() / "hilbandit_test_service";
  std::filesystem::remove_all(dir);
  ServiceOptions opts;
  opts.data_dir = dir;
  opts.capacity = 2;
  std::string id;
  std::string before;
  {
    Service svc(make_env(), opts);
    id = svc.create_session(aq_config(9));
    svc.advance(id);
    svc.submit_action(id, 3);
    before = svc.get_state(id);
    svc.create_session(aq_config(10));
    CHECK(kind_of([&] { svc.create_session(aq_config(11)); }) == ErrorKind::CapacityExceeded);
  }
  Service again(make_env(), opts);
  CHECK(again.get_state(id) == before);
  CHECK(again.phase(id) == Phase::AwaitingSurvey);
  CHECK(again.session_ids().size() == 2);
  CHECK(again.live_sessions() == 2);
  CHECK(kind_of([&] { again.create_session(aq_config(12)); }) == ErrorKind::CapacityExceeded);
  again.submit_survey(id, kMidTlx);
  CHECK(again.phase(id) == Phase::AwaitingPolicy);
}

TEST_CASE("HTTP endpoints and event stream") {
  Service svc(make_env());
  HttpServer server(svc, {});
  const int port = server.bind_any("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.serve(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(10, 0);
  auto created = cli.Post("/api/v1/sessions", R"({"policy":"AlwaysQuery","n_foods":3,"seed":2})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const auto id = json::parse(created->body).at("id").get<std::string>();
  CHECK(json::parse(created->body).at("phase") == "awaiting_policy");

  CHECK(cli.Get("/api/v1/sessions/nope")->status == 404);
  CHECK(cli.Post("/api/v1/sessions/" + id + "/action", R"({"action":1})", "application/json")->status == 409);
  CHECK(cli.Post("/api/v1/sessions", R"({"max_attempts":0})", "application/json")->status == 400);

  // Read the first events, then disconnect.
  std::uint64_t last = 0;
  auto adv = cli.Post("/api/v1/sessions/" + id + "/advance", "", "application/json");
  REQUIRE(adv);
  CHECK(adv->status == 200);
  CHECK(cli.Post("/api/v1/sessions/" + id + "/action", R"({"action":6})", "application/json")->status == 422);

  int answered = 0, surveyed = 0;
  for (int guard = 0; guard < 500; ++guard) {
    const auto st = json::parse(cli.Get("/api/v1/sessions/" + id)->body);
    const auto phase = st.at("phase").get<std::string>();
    if (phase == "finished") break;
    if (phase == "awaiting_policy") cli.Post("/api/v1/sessions/" + id + "/advance", "", "application/json");
    else if (phase == "awaiting_human_action") {
      CHECK(cli.Post("/api/v1/sessions/" + id + "/action", R"({"action":1})", "application/json")->status == 200);
      ++answered;
    } else {
      CHECK(cli.Post("/api/v1/sessions/" + id + "/survey",
                     R"({"mental":2,"temporal":2,"performance":3,"effort":2,"frustration":1})", "application/json")
                ->status == 200);
      ++surveyed;
    }
    if (guard == 3) last = json::parse(cli.Get("/api/v1/sessions/" + id)->body).at("last_seq").get<std::uint64_t>();
  }
  CHECK(answered == 3);
  CHECK(surveyed == 3);

  // Resume the stream from a mid-session sequence number; it closes after the terminal event.
  std::string body;
  auto stream = cli.Get("/api/v1/sessions/" + id + "/events?after=" + std::to_string(last),
                        [&](const char* data, size_t n) {
                          body.append(data, n);
                          return true;
                        });
  REQUIRE(stream);
  CHECK(stream->status == 200);
  std::vector<std::uint64_t> ids;
  for (size_t pos = body.find("id: "); pos != std::string::npos; pos = body.find("id: ", pos + 1))
    ids.push_back(std::stoull(body.substr(pos + 4)));
  REQUIRE_FALSE(ids.empty());
  CHECK(ids.front() == last + 1);
  for (size_t i = 1; i < ids.size(); ++i) CHECK(ids[i] == ids[i - 1] + 1);
  CHECK(ids.back() == svc.events_since(id, 0).size());
  CHECK(body.find("event: episode_finished") != std::string::npos);

  const auto ex = cli.Get("/api/v1/sessions/" + id + "/export");
  REQUIRE(ex);
  CHECK(json::parse(ex->body).at("pairs").size() == 3);
  CHECK(json::parse(cli.Get("/api/v1/sessions")->body).at("sessions").size() == 1);

  server.stop();
  th.join();
}
