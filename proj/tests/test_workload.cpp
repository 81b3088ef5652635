#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "hilbandit/error.hpp"
#include "hilbandit/rng.hpp"
#include "hilbandit/workload.hpp"

using namespace hilbandit;
using namespace hilbandit::workload;
using hilbandit::numerics::Matrix;
using hilbandit::numerics::Vector;
using study::QueryType;

namespace {

const QueryType kEasyMcqNone{study::Difficulty::Easy, study::ResponseType::MCQ, study::Distraction::None};

std::vector<WorkloadSample> study_samples(int participants, int history, std::uint64_t seed) {
  auto profile = study::PopulationProfile::d1(participants);
  profile.noise_scale = 0.0;
  return study::build_training_pairs(study::generate_synthetic_study(profile, seed), history);
}

GrangerModel random_granger(Rng& rng, int history) {
  GrangerModel m;
  m.history_len = history;
  m.gamma = 0.2 + 0.6 * uniform01(rng);
  m.bias = 0.1 * uniform01(rng) - 0.05;
  m.lag_weights.resize(static_cast<size_t>(8 * history));
  for (auto& w : m.lag_weights) w = 0.1 * uniform01(rng) - 0.03;
  return m;
}

/// Orthogonal projection of v onto the row space of x.
Vector project_rows(const Matrix& x, const Vector& v) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
  return cod.solve(x * v);
}

Vector coefficients(const GrangerModel& m) {
  Vector c(static_cast<Eigen::Index>(1 + m.lag_weights.size()));
  c(0) = m.gamma;
  for (size_t i = 0; i < m.lag_weights.size(); ++i) c(static_cast<Eigen::Index>(i + 1)) = m.lag_weights[i];
  return c;
}

}  // namespace

TEST_CASE("predict_granger examples") {
  GrangerModel id;
  id.gamma = 1.0;
  id.history_len = 2;
  id.lag_weights.assign(16, 0.0);
  std::vector<double> feats(16, 0.0);
  feats[0] = feats[3] = feats[6] = 1.0;
  CHECK(predict_granger(id, 0.42, feats) == 0.42);

  GrangerModel g;
  g.gamma = 0.5;
  g.bias = 0.1;
  g.lag_weights.assign(8, 0.3);
  CHECK(predict_granger(g, 0.5, std::vector<double>(8, 0.0)) == doctest::Approx(0.35).epsilon(1e-15));

  GrangerModel floor;
  floor.variant = GrangerVariant::BoxSim;
  floor.gamma = kSimWeightFloor;
  floor.lag_weights.assign(8, kSimWeightFloor);
  const auto e = study::encode(kEasyMcqNone);
  CHECK(predict_granger(floor, 0.5, std::vector<double>(e.begin(), e.end())) == doctest::Approx(0.175).epsilon(1e-15));

  CHECK_THROWS_WITH_AS(predict_granger(floor, 0.5, std::vector<double>(16, 0.0)), doctest::Contains("width"), Error);
  try {
    predict_granger(floor, 0.5, std::vector<double>(16, 0.0));
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::HistoryWidthMismatch);
  }
}

TEST_CASE("clamping applies only when requested") {
  GrangerModel g;
  g.gamma = 2.0;
  g.lag_weights.assign(8, 0.0);
  CHECK(predict_granger(g, 0.9, std::vector<double>(8, 0.0)) == doctest::Approx(1.8));
  g.clamp_output = true;
  CHECK(predict_granger(g, 0.9, std::vector<double>(8, 0.0)) == 1.0);
  CHECK(predict_granger_raw(g, 0.9, std::vector<double>(8, 0.0)) == doctest::Approx(1.8));
}

TEST_CASE("predict_granger is linear without bias") {
  Rng rng = make_rng(31, {});
  const auto m = random_granger(rng, 3);
  GrangerModel nb = m;
  nb.bias = 0.0;
  std::vector<double> u(24), v(24), mix(24);
  for (int k = 0; k < 24; ++k) u[k] = uniform01(rng), v[k] = uniform01(rng);
  const double a = 0.7, b = -1.3, wu = 0.2, wv = 0.9;
  for (int k = 0; k < 24; ++k) mix[k] = a * u[k] + b * v[k];
  CHECK(predict_granger_raw(nb, a * wu + b * wv, mix) ==
        doctest::Approx(a * predict_granger_raw(nb, wu, u) + b * predict_granger_raw(nb, wv, v)).epsilon(1e-12));
}

TEST_CASE("plain fit recovers a noiseless generator at H = 5") {
  Rng rng = make_rng(41, {});
  auto samples = study_samples(6, 5, 3);
  const auto truth = random_granger(rng, 5);
  for (auto& s : samples) s.target = predict_granger_raw(truth, s.initial_workload, s.features);

  const auto fit = fit_granger(samples, GrangerVariant::Plain, 5);
  double worst = 0;
  for (const auto& s : samples)
    worst = std::max(worst, std::fabs(predict_granger_raw(fit, s.initial_workload, s.features) - s.target));
  CHECK(worst < 1e-6);

  // The lag one-hots are collinear, so the identifiable part of the truth is its projection
  // onto the row space of the centered design.
  Matrix z(static_cast<Eigen::Index>(samples.size()), 41);
  for (size_t r = 0; r < samples.size(); ++r) {
    z(static_cast<Eigen::Index>(r), 0) = samples[r].initial_workload;
    for (int c = 0; c < 40; ++c) z(static_cast<Eigen::Index>(r), c + 1) = samples[r].features[static_cast<size_t>(c)];
  }
  const Matrix zc = z.rowwise() - z.colwise().mean();
  const Vector projected = project_rows(zc, coefficients(truth));
  CHECK((coefficients(fit) - projected).lpNorm<Eigen::Infinity>() < 1e-6);

  FitOptions strict;
  strict.strict_rank = true;
  CHECK_THROWS_AS(fit_granger(samples, GrangerVariant::Plain, 5, strict), Error);
}

TEST_CASE("plain fit recovers exact coefficients on a full-rank design") {
  Rng rng = make_rng(43, {});
  std::vector<WorkloadSample> samples(60);
  GrangerModel truth = random_granger(rng, 1);
  for (auto& s : samples) {
    s.initial_workload = uniform01(rng);
    s.features.resize(8);
    for (auto& f : s.features) f = uniform01(rng);
    s.target = predict_granger_raw(truth, s.initial_workload, s.features);
  }
  const auto fit = fit_granger(samples, GrangerVariant::Plain, 1);
  CHECK((coefficients(fit) - coefficients(truth)).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(std::fabs(fit.bias - truth.bias) < 1e-6);
}

TEST_CASE("nonneg fit equals the plain fit when OLS is already nonnegative") {
  Rng rng = make_rng(47, {});
  std::vector<WorkloadSample> samples(80);
  GrangerModel truth;
  truth.gamma = 0.4;
  truth.bias = 0.05;
  truth.lag_weights = {0.1, 0.02, 0.3, 0.05, 0.2, 0.15, 0.01, 0.07};
  for (auto& s : samples) {
    s.initial_workload = uniform01(rng);
    s.features.resize(8);
    for (auto& f : s.features) f = uniform01(rng);
    s.target = predict_granger_raw(truth, s.initial_workload, s.features);
  }
  const auto plain = fit_granger(samples, GrangerVariant::Plain, 1);
  const auto nonneg = fit_granger(samples, GrangerVariant::Nonneg, 1);
  CHECK((coefficients(plain) - coefficients(nonneg)).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(std::fabs(plain.bias - nonneg.bias) < 1e-8);
}

TEST_CASE("constrained variants respect their constraints") {
  auto profile = study::PopulationProfile::d1(8);
  const auto samples = study::build_training_pairs(study::generate_synthetic_study(profile, 12), 5);
  const auto box = fit_granger(samples, GrangerVariant::BoxSim, 5);
  CHECK(box.gamma >= kSimWeightFloor);
  CHECK(box.gamma <= kSimWeightCeil);
  CHECK(box.bias <= kSimBiasCeil);
  for (double w : box.lag_weights) {
    CHECK(w >= kSimWeightFloor);
    CHECK(w <= kSimWeightCeil);
  }
  FitOptions ridge;
  ridge.ridge_lambda = 0.5;
  for (auto v : {GrangerVariant::Nonneg, GrangerVariant::RidgeNonneg}) {
    const auto m = fit_granger(samples, v, 5, ridge);
    CHECK(m.gamma >= 0.0);
    for (double w : m.lag_weights) CHECK(w >= 0.0);
  }
  const auto r = fit_granger(samples, GrangerVariant::Ridge, 5, ridge);
  REQUIRE(r.ridge_lambda.has_value());
  CHECK(*r.ridge_lambda == 0.5);
}

TEST_CASE("adding a query never lowers nonnegative-weight predictions") {
  Rng rng = make_rng(53, {});
  auto samples = study_samples(6, 3, 5);
  const auto box = fit_granger(samples, GrangerVariant::BoxSim, 3);
  const auto nn = fit_granger(samples, GrangerVariant::Nonneg, 3);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> f(24, 0.0);
    for (int lag = 0; lag < 3; ++lag)
      if (uniform01(rng) < 0.5) {
        QueryType q{static_cast<study::Difficulty>(rng() % 2), static_cast<study::ResponseType>(rng() % 3),
                    static_cast<study::Distraction>(rng() % 3)};
        const auto e = study::encode(q);
        for (int j = 0; j < 8; ++j) f[lag * 8 + j] += e[j];
      }
    auto g = f;
    const int lag = static_cast<int>(rng() % 3);
    const auto e = study::encode({study::Difficulty::Hard, study::ResponseType::OE, study::Distraction::EasyAdd});
    for (int j = 0; j < 8; ++j) g[lag * 8 + j] += e[j];
    const double wl0 = uniform01(rng);
    CHECK(predict_granger_raw(box, wl0, g) >= predict_granger_raw(box, wl0, f));
    CHECK(predict_granger_raw(nn, wl0, g) >= predict_granger_raw(nn, wl0, f));
  }
}

TEST_CASE("predict_exp_impulse examples") {
  ExpImpulseModel m;
  m.decay = 0.7;
  m.impulse.fill(0.01);
  CHECK(predict_exp_impulse(m, 0.37, {}, 0.0) == 0.37);

  ExpImpulseModel sharp;
  sharp.decay = 1e3;
  sharp.impulse = {0.05, 0, 0.03, 0, 0, 0.02, 0, 0};
  const std::vector<TimedQuery> one{{3, kEasyMcqNone}};
  CHECK(predict_exp_impulse(sharp, 0.9, one, 3.0) == doctest::Approx(0.1).epsilon(1e-12));

  ExpImpulseModel half;
  half.decay = std::log(2.0);
  half.impulse = {0.1, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<TimedQuery> at1{{1, kEasyMcqNone}};
  CHECK(predict_exp_impulse(half, 0.8, at1, 1.0) == doctest::Approx(0.5).epsilon(1e-12));

  const std::vector<TimedQuery> bad{{4, kEasyMcqNone}, {4, kEasyMcqNone}};
  try {
    predict_exp_impulse(half, 0.5, bad, 5.0);
    FAIL("expected NonMonotoneTimes");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonMonotoneTimes);
  }
}

TEST_CASE("fit_exp_impulse recovers a generator whose decay is on the grid") {
  const DecayGrid grid;
  const auto values = grid.values();
  REQUIRE(values.size() == 25);
  CHECK(values.front() == doctest::Approx(1e-3));
  CHECK(values.back() == doctest::Approx(10.0));

  ExpImpulseModel truth;
  truth.decay = values[14];
  truth.impulse = {0.05, 0.12, 0.01, 0.04, 0.09, 0.0, 0.03, 0.08};
  truth.clamp_output = false;
  auto samples = study_samples(4, 1, 17);
  for (auto& s : samples) s.target = predict_exp_impulse(truth, s.initial_workload, s.timeline, s.timestep);

  const auto fit = fit_exp_impulse(samples, grid);
  CHECK(fit.decay == truth.decay);
  // Each one-hot block sums to one, so beta is identified up to the two block-difference directions.
  Matrix null(8, 2);
  null.col(0) << 1, 1, -1, -1, -1, 0, 0, 0;
  null.col(1) << 1, 1, 0, 0, 0, -1, -1, -1;
  const Matrix q = Eigen::HouseholderQR<Matrix>(null).householderQ() * Matrix::Identity(8, 2);
  Vector bt(8), bf(8);
  for (int k = 0; k < 8; ++k) bt(k) = truth.impulse[k], bf(k) = fit.impulse[k];
  const Vector diff = (bt - bf) - q * (q.transpose() * (bt - bf));
  CHECK(diff.lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("fit_exp_impulse degenerate cases") {
  DecayGrid one{0.5, 0.5, 1};
  auto samples = study_samples(2, 1, 4);
  const auto fixed = fit_exp_impulse(samples, one);
  CHECK(fixed.decay == 0.5);

  // Targets equal WL_0 at the query instant: training MSE cannot exceed the target variance.
  std::vector<WorkloadSample> flat;
  for (auto s : samples) {
    s.timeline = {{s.timestep, s.timeline.back().type}};
    s.target = s.initial_workload;
    flat.push_back(s);
  }
  const auto fit = fit_exp_impulse(flat);
  double mse = 0, mean = 0, var = 0;
  for (const auto& s : flat) mean += s.target;
  mean /= static_cast<double>(flat.size());
  for (const auto& s : flat) {
    ExpImpulseModel raw = fit;
    raw.clamp_output = false;
    const double e = predict_exp_impulse(raw, s.initial_workload, s.timeline, s.timestep) - s.target;
    mse += e * e;
    var += (s.target - mean) * (s.target - mean);
  }
  CHECK(mse <= var);
}

TEST_CASE("cross-validation baselines and fold statistics") {
  auto samples = study_samples(8, 1, 6);
  for (auto& s : samples) s.target = s.initial_workload;
  ModelSpec constant{ModelKind::Constant, GrangerVariant::Plain, 0, std::nullopt};
  for (double v : cross_validate(samples, constant).fold_mse) CHECK(v == 0.0);

  for (auto& s : samples) s.target = 0.3;
  ModelSpec average{ModelKind::Average, GrangerVariant::Plain, 0, std::nullopt};
  for (double v : cross_validate(samples, average).fold_mse) CHECK(v == doctest::Approx(0.0).epsilon(1e-20));

  const auto r = CvReport::from_folds({0.4, 0.1, 0.3, 0.2});
  CHECK(r.median == doctest::Approx(0.25));
  CHECK(r.mean == doctest::Approx(0.25));
  CHECK(r.std == doctest::Approx(std::sqrt(0.0125)));

  const auto few = study_samples(3, 1, 6);
  try {
    cross_validate(few, average);
    FAIL("expected InsufficientGroups");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientGroups);
  }
  CvOptions ungrouped;
  ungrouped.grouped = false;
  CHECK(cross_validate(few, average, ungrouped).fold_mse.size() == 4);
}

TEST_CASE("grouped folds keep participants together and are deterministic") {
  const auto samples = study_samples(9, 1, 2);
  const auto a = assign_folds(samples, 4, true, 5);
  CHECK(a == assign_folds(samples, 4, true, 5));
  std::map<std::string, int> fold_of;
  for (size_t i = 0; i < samples.size(); ++i) {
    auto [it, fresh] = fold_of.emplace(samples[i].group, a[i]);
    CHECK(it->second == a[i]);
  }
}

TEST_CASE("fold MSEs do not depend on sample order") {
  auto profile = study::PopulationProfile::d1(8);
  auto samples = study::build_training_pairs(study::generate_synthetic_study(profile, 3), 1);
  ModelSpec spec{ModelKind::Granger, GrangerVariant::Ridge, 5, 0.1};
  const auto before = cross_validate(samples, spec);
  std::mt19937_64 g(7);
  std::shuffle(samples.begin(), samples.end(), g);
  const auto after = cross_validate(samples, spec);
  REQUIRE(before.fold_mse.size() == after.fold_mse.size());
  for (size_t k = 0; k < before.fold_mse.size(); ++k)
    CHECK(before.fold_mse[k] == doctest::Approx(after.fold_mse[k]).epsilon(1e-9));
}

TEST_CASE("ridge variants choose lambda by inner CV from the grid") {
  auto profile = study::PopulationProfile::d1(10);
  const auto samples = study::build_training_pairs(study::generate_synthetic_study(profile, 8), 1);
  ModelSpec spec{ModelKind::Granger, GrangerVariant::RidgeNonneg, 5, std::nullopt};
  const auto report = cross_validate(samples, spec);
  CvOptions opts;
  REQUIRE(report.chosen_lambda.size() == 4);
  for (double l : report.chosen_lambda)
    CHECK(std::find(opts.ridge_grid.begin(), opts.ridge_grid.end(), l) != opts.ridge_grid.end());
}

TEST_CASE("select_model") {
  auto spec = [](GrangerVariant v, int h) { return ModelSpec{ModelKind::Granger, v, h, std::nullopt}; };
  auto rep = [](std::vector<double> f) { return CvReport::from_folds(std::move(f)); };

  std::vector<LabeledReport> single{{spec(GrangerVariant::Ridge, 10), rep({0.2, 0.3})}};
  CHECK(select_model(single).history_len == 10);

  std::vector<LabeledReport> three{{spec(GrangerVariant::Plain, 1), rep({0.09})},
                                   {spec(GrangerVariant::Plain, 5), rep({0.05})},
                                   {spec(GrangerVariant::Plain, 10), rep({0.07})}};
  CHECK(select_model(three).history_len == 5);

  std::vector<LabeledReport> overfit{{spec(GrangerVariant::Plain, 30), rep({0.01, 0.01, 0.02, 50.0})},
                                     {spec(GrangerVariant::Nonneg, 1), rep({0.03, 0.03, 0.03, 0.03})}};
  CHECK(select_model(overfit).history_len == 30);

  std::vector<LabeledReport> tied{{spec(GrangerVariant::RidgeNonneg, 5), rep({0.04})},
                                  {spec(GrangerVariant::Ridge, 5), rep({0.04})},
                                  {spec(GrangerVariant::Nonneg, 10), rep({0.04})}};
  const auto t = select_model(tied);
  CHECK(t.history_len == 5);
  CHECK(t.variant == GrangerVariant::Ridge);
}

TEST_CASE("model zoo enumerates the full candidate set") {
  const auto specs = model_zoo_specs();
  CHECK(specs.size() == 31);
  int granger = 0;
  for (const auto& s : specs) granger += s.kind == ModelKind::Granger;
  CHECK(granger == 28);
  CHECK(specs.front().kind == ModelKind::Constant);
  CHECK(specs.back().kind == ModelKind::ExpImpulse);
}

TEST_CASE("model files round-trip") {
  Rng rng = make_rng(61, {});
  GrangerModel g = random_granger(rng, 2);
  g.variant = GrangerVariant::RidgeNonneg;
  g.ridge_lambda = 0.01;
  g.clamp_output = true;
  const auto back = std::get<GrangerModel>(model_from_text(model_to_text(g, "abc")));
  CHECK(back.gamma == g.gamma);
  CHECK(back.bias == g.bias);
  CHECK(back.lag_weights == g.lag_weights);
  CHECK(back.variant == g.variant);
  CHECK(back.ridge_lambda == g.ridge_lambda);
  CHECK(back.clamp_output);

  ExpImpulseModel e;
  e.decay = 0.123;
  e.impulse = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto eb = std::get<ExpImpulseModel>(model_from_text(model_to_text(e)));
  CHECK(eb.decay == e.decay);
  CHECK(eb.impulse == e.impulse);
  CHECK(std::get<AverageModel>(model_from_text(model_to_text(AverageModel{0.4}))).value == 0.4);
  CHECK(std::holds_alternative<ConstantModel>(model_from_text(model_to_text(ConstantModel{}))));

  for (const char* s : {"plain", "granger", "N", "nonneg", "R", "ridge", "RN", "ridge_nonneg", "box_sim"})
    CHECK_NOTHROW(parse_variant(s));
  CHECK_THROWS_AS(model_from_text("{}"), Error);
}
