#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "hilbandit/experiment.hpp"
#include "hilbandit/http_server.hpp"
#include "hilbandit/service.hpp"
#include "hilbandit/sim.hpp"
#include "hilbandit/study.hpp"
#include "hilbandit/workload.hpp"

using namespace hilbandit;

namespace {

service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

study::PopulationProfile profile_for(const std::string& name, int participants) {
  switch (study::parse_population(name)) {
    case study::PopulationName::D1: return participants > 0 ? study::PopulationProfile::d1(participants) : study::PopulationProfile::d1();
    case study::PopulationName::D2: return participants > 0 ? study::PopulationProfile::d2(participants) : study::PopulationProfile::d2();
    case study::PopulationName::D12:
      return participants > 0 ? study::PopulationProfile::d12(participants) : study::PopulationProfile::d12();
  }
  return study::PopulationProfile::d1();
}

workload::ModelSpec parse_spec(const std::string& kind, const std::string& variant, int history, double lambda) {
  workload::ModelSpec spec;
  if (kind == "constant") spec.kind = workload::ModelKind::Constant;
  else if (kind == "average") spec.kind = workload::ModelKind::Average;
  else if (kind == "exp_impulse") spec.kind = workload::ModelKind::ExpImpulse;
  else if (kind == "granger") spec.kind = workload::ModelKind::Granger;
  else throw Error(ErrorKind::ConfigError, "--kind must be constant, average, granger or exp_impulse");
  spec.variant = workload::parse_variant(variant);
  spec.history_len = history;
  if (lambda > 0) spec.ridge_lambda = lambda;
  return spec;
}

/// Loads or creates the serve environment under `dir`.
service::Environment serve_environment(const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto foods = dir / "foods.jsonl";
  const auto bandit_path = dir / "bandit.json";
  const auto workload_path = dir / "workload.json";
  if (!std::filesystem::exists(foods)) {
    sim::FoodDatasetSpec spec;
    spec.seed = seed;
    sim::save_food_dataset(foods, sim::generate_food_dataset(spec));
  }
  auto data = sim::load_food_dataset(foods);
  if (!std::filesystem::exists(bandit_path)) {
    bandit::BanditModel m(data.context_dim);
    m.pretrain(sim::pretrain_samples(data, seed));
    m.save(bandit_path);
  }
  if (!std::filesystem::exists(workload_path)) {
    workload::GrangerModel g;
    g.variant = workload::GrangerVariant::BoxSim;
    g.history_len = 5;
    g.gamma = 0.05;
    g.lag_weights.assign(8 * 5, 0.05);
    g.clamp_output = true;
    workload::save_model(workload_path, g);
  }
  return {std::move(data), bandit::BanditModel::load(bandit_path),
          std::make_shared<workload::WorkloadModel>(workload::load_model(workload_path))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Workload-aware human-in-the-loop contextual bandit toolkit"};
  app.require_subcommand(1);

  // gen-study
  auto* gs = app.add_subcommand("gen-study", "Generate a synthetic workload study");
  std::string population = "d1", study_out;
  int participants = -1;
  std::uint64_t study_seed = 0;
  gs->add_option("--population", population, "d1, d2 or d12")->capture_default_str();
  gs->add_option("--participants", participants, "Participant count (profile default when omitted)");
  gs->add_option("--seed", study_seed)->capture_default_str();
  gs->add_option("--out", study_out)->required();

  // gen-foods
  auto* gf = app.add_subcommand("gen-foods", "Generate a synthetic food dataset");
  sim::FoodDatasetSpec food_spec;
  std::string foods_out;
  gf->add_option("--seed", food_spec.seed)->capture_default_str();
  gf->add_option("--dim", food_spec.context_dim)->capture_default_str();
  gf->add_option("--types", food_spec.n_types)->capture_default_str();
  gf->add_option("--trials", food_spec.n_trials)->capture_default_str();
  gf->add_option("--noise", food_spec.context_noise)->capture_default_str();
  gf->add_option("--out", foods_out)->required();

  // fit-workload
  auto* fw = app.add_subcommand("fit-workload", "Fit one workload model on a study file");
  std::string fit_study, fit_out, kind = "granger", variant = "box_sim";
  int history = 5;
  double lambda = -1;
  fw->add_option("--study", fit_study)->required();
  fw->add_option("--kind", kind, "constant, average, granger, exp_impulse")->capture_default_str();
  fw->add_option("--variant", variant, "plain, nonneg, ridge, ridge_nonneg, box_sim")->capture_default_str();
  fw->add_option("--history", history)->capture_default_str();
  fw->add_option("--lambda", lambda, "Fixed ridge strength (inner CV when omitted)");
  fw->add_option("--out", fit_out)->required();

  // model-zoo
  auto* mz = app.add_subcommand("model-zoo", "Cross-validate every candidate model and pick one");
  std::string zoo_study, zoo_out;
  std::uint64_t zoo_seed = 0;
  mz->add_option("--study", zoo_study)->required();
  mz->add_option("--seed", zoo_seed)->capture_default_str();
  mz->add_option("--out", zoo_out, "CSV report path");

  // run
  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string config_path;
  int jobs = 0;
  run->add_option("--config", config_path)->required();
  run->add_option("--jobs", jobs, "Worker threads");

  // serve
  auto* sv = app.add_subcommand("serve", "Serve live human-in-the-loop sessions");
  int port = 8080;
  std::string host = "127.0.0.1", data_dir = "hil-data", static_dir;
  std::uint64_t serve_seed = 0;
  sv->add_option("--port", port)->capture_default_str();
  sv->add_option("--host", host)->capture_default_str();
  sv->add_option("--data-dir", data_dir)->capture_default_str();
  sv->add_option("--static", static_dir, "Console build to serve at /");
  sv->add_option("--seed", serve_seed, "Seed for a freshly created environment")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gs) {
      study::StudyFile file;
      file.profile = population;
      file.conditions = study::generate_synthetic_study(profile_for(population, participants), study_seed);
      study::save_study(study_out, file);
      std::printf("wrote %zu conditions to %s\n", file.conditions.size(), study_out.c_str());
    } else if (*gf) {
      const auto data = sim::generate_food_dataset(food_spec);
      sim::save_food_dataset(foods_out, data);
      std::printf("wrote %zu food types to %s\n", data.types.size(), foods_out.c_str());
    } else if (*fw) {
      const auto file = study::load_study(fit_study);
      const auto spec = parse_spec(kind, variant, history, lambda);
      const auto samples = study::build_training_pairs(file.conditions, spec.history_len);
      const auto model = workload::fit_model(spec, samples);
      workload::save_model(fit_out, model, workload::fingerprint(samples));
      std::printf("%s\n", workload::describe(model).c_str());
    } else if (*mz) {
      const auto file = study::load_study(zoo_study);
      const auto samples = study::build_training_pairs(file.conditions, 1);
      workload::CvOptions opts;
      opts.seed = zoo_seed;
      std::vector<workload::LabeledReport> reports;
      std::string csv = "model,history,mean_mse,std_mse,median_mse\n";
      for (const auto& spec : workload::model_zoo_specs()) {
        const auto report = workload::cross_validate(samples, spec, opts);
        char line[256];
        std::snprintf(line, sizeof line, "%s,%d,%.6f,%.6f,%.6f\n", spec.label().c_str(), spec.history_len, report.mean,
                      report.std, report.median);
        csv += line;
        std::fputs(line, stdout);
        reports.push_back({spec, report});
      }
      const auto best = workload::select_model(reports);
      std::printf("selected %s H=%d\n", best.label().c_str(), best.history_len);
      if (!zoo_out.empty()) {
        std::ofstream out(zoo_out, std::ios::binary | std::ios::trunc);
        out << csv;
      }
    } else if (*run) {
      auto config = experiment::load_config(config_path);
      experiment::apply_env_overrides(config);
      if (jobs > 0) config.jobs = jobs;
      const auto bundle = experiment::run_experiment(config);
      experiment::emit_tables(bundle, config.output_dir);
      std::printf("wrote %zu tables to %s\n", bundle.tables.size(), config.output_dir.string().c_str());
    } else if (*sv) {
      service::ServiceOptions opts;
      opts.data_dir = data_dir;
      service::Service svc(serve_environment(data_dir, serve_seed), opts);
      service::HttpServer server(svc, static_dir);
      if (!server.bind(host, port)) throw Error(ErrorKind::IoError, "cannot bind " + host + ":" + std::to_string(port));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("serving on http://%s:%d\n", host.c_str(), port);
      std::fflush(stdout);
      server.serve();
      g_server = nullptr;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", to_string(e.kind()), e.what());
    return 2;
  }
  return 0;
}
