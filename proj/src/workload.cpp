#include "hilbandit/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hilbandit/rng.hpp"

namespace hilbandit::workload {

using numerics::Matrix;
using numerics::Vector;
using nlohmann::json;

const char* to_string(GrangerVariant v) {
  switch (v) {
    case GrangerVariant::Plain: return "plain";
    case GrangerVariant::Nonneg: return "nonneg";
    case GrangerVariant::Ridge: return "ridge";
    case GrangerVariant::RidgeNonneg: return "ridge_nonneg";
    case GrangerVariant::BoxSim: return "box_sim";
  }
  return "?";
}

GrangerVariant parse_variant(const std::string& s) {
  if (s == "plain" || s == "granger") return GrangerVariant::Plain;
  if (s == "nonneg" || s == "N") return GrangerVariant::Nonneg;
  if (s == "ridge" || s == "R") return GrangerVariant::Ridge;
  if (s == "ridge_nonneg" || s == "RN") return GrangerVariant::RidgeNonneg;
  if (s == "box_sim") return GrangerVariant::BoxSim;
  throw Error(ErrorKind::ConfigError, "unknown Granger variant '" + s + "'");
}

bool has_ridge_penalty(GrangerVariant v) { return v == GrangerVariant::Ridge || v == GrangerVariant::RidgeNonneg; }

double predict_granger_raw(const GrangerModel& m, double wl0, std::span<const double> features) {
  if (features.size() != m.lag_weights.size()) {
    throw Error(ErrorKind::HistoryWidthMismatch, "history block has width " + std::to_string(features.size()) +
                                                     ", model expects " + std::to_string(m.lag_weights.size()));
  }
  double v = m.gamma * wl0 + m.bias;
  for (size_t i = 0; i < features.size(); ++i) v += m.lag_weights[i] * features[i];
  return v;
}

double predict_granger(const GrangerModel& m, double wl0, std::span<const double> features) {
  const double v = predict_granger_raw(m, wl0, features);
  return m.clamp_output ? std::clamp(v, 0.0, 1.0) : v;
}

namespace {

void require_width(std::span<const WorkloadSample> samples, int history_len) {
  const auto width = static_cast<size_t>(study::kEncodingWidth * history_len);
  for (const auto& s : samples) {
    if (s.features.size() != width) {
      throw Error(ErrorKind::HistoryWidthMismatch, "sample featurized with width " + std::to_string(s.features.size()) +
                                                       ", fit expects " + std::to_string(width));
    }
  }
}

}  // namespace

GrangerModel fit_granger(std::span<const WorkloadSample> samples, GrangerVariant variant, int history_len,
                         const FitOptions& opts) {
  if (samples.empty()) throw Error(ErrorKind::ConfigError, "fit_granger needs at least one sample");
  if (history_len < 1) throw Error(ErrorKind::ConfigError, "history length must be >= 1");
  require_width(samples, history_len);

  const auto n = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index p = 1 + study::kEncodingWidth * history_len;
  Matrix z(n, p);
  Vector y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& s = samples[static_cast<size_t>(r)];
    z(r, 0) = s.initial_workload;
    for (Eigen::Index c = 1; c < p; ++c) z(r, c) = s.features[static_cast<size_t>(c - 1)];
    y(r) = s.target;
  }

  GrangerModel m;
  m.history_len = history_len;
  m.variant = variant;
  m.clamp_output = opts.clamp_output;
  Vector coef;

  if (variant == GrangerVariant::BoxSim) {
    Matrix d(n, p + 1);
    d.leftCols(p) = z;
    d.col(p).setOnes();
    numerics::BoxConstraint box = numerics::BoxConstraint::uniform(p + 1, kSimWeightFloor, kSimWeightCeil);
    box.lower(p) = kSimBiasFloor;
    box.upper(p) = kSimBiasCeil;
    const Vector theta = numerics::bvls_gram(d.transpose() * d, d.transpose() * y, box, opts.tol);
    coef = theta.head(p);
    m.bias = theta(p);
  } else {
    // Intercept stays unpenalized and unconstrained: solve on centered data, recover it after.
    const Eigen::RowVectorXd zbar = z.colwise().mean();
    const double ybar = y.mean();
    const Matrix zc = z.rowwise() - zbar;
    const Vector yc = y.array() - ybar;
    double lambda = 0.0;
    if (has_ridge_penalty(variant)) {
      lambda = opts.ridge_lambda.value_or(1.0);
      if (!(lambda >= 0.0)) throw Error(ErrorKind::ConfigError, "ridge lambda must be >= 0");
      m.ridge_lambda = lambda;
    }
    if (variant == GrangerVariant::Plain || variant == GrangerVariant::Ridge) {
      try {
        coef = numerics::ridge_solve(zc, yc, lambda, opts.tol);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::SingularSystem || opts.strict_rank) throw;
        coef = numerics::min_norm_lstsq(zc, yc);
      }
    } else {
      Matrix gram = zc.transpose() * zc;
      gram.diagonal().array() += lambda;
      coef = numerics::bvls_gram(gram, zc.transpose() * yc, numerics::BoxConstraint::nonnegative(p), opts.tol);
    }
    m.bias = ybar - zbar.dot(coef);
  }
  m.gamma = coef(0);
  m.lag_weights.assign(coef.data() + 1, coef.data() + p);
  return m;
}

double predict_exp_impulse(const ExpImpulseModel& m, double wl0, std::span<const TimedQuery> queries, double at) {
  double wl = wl0;
  double prev = 0.0;
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& q : queries) {
    const double t = q.timestep;
    if (!(t > last)) throw Error(ErrorKind::NonMonotoneTimes, "query times must be strictly increasing");
    last = t;
    if (t > at) break;
    const auto e = study::encode(q.type);
    double impulse = 0.0;
    for (int k = 0; k < study::kEncodingWidth; ++k) impulse += m.impulse[k] * e[k];
    wl = wl * std::exp(-m.decay * (t - prev)) + impulse;
    prev = t;
  }
  if (at > prev) wl *= std::exp(-m.decay * (at - prev));
  return m.clamp_output ? std::clamp(wl, 0.0, 1.0) : wl;
}

std::vector<double> DecayGrid::values() const {
  std::vector<double> v;
  if (points <= 1) {
    v.push_back(lo);
    return v;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < points; ++i) v.push_back(std::pow(10.0, a + (b - a) * i / (points - 1)));
  return v;
}

ExpImpulseModel fit_exp_impulse(std::span<const WorkloadSample> samples, const DecayGrid& grid) {
  if (samples.empty()) throw Error(ErrorKind::ConfigError, "fit_exp_impulse needs at least one sample");
  const auto n = static_cast<Eigen::Index>(samples.size());
  ExpImpulseModel best;
  double best_mse = std::numeric_limits<double>::infinity();
  for (double decay : grid.values()) {
    // Unrolled recursion: WL(t) = WL_0 e^{-decay t} + sum_k e^{-decay (t - t_k)} beta' phi_k.
    Matrix phi = Matrix::Zero(n, study::kEncodingWidth);
    Vector resid(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& s = samples[static_cast<size_t>(r)];
      const double t = s.timestep;
      for (const auto& q : s.timeline) {
        if (q.timestep > s.timestep) continue;
        const double w = std::exp(-decay * (t - q.timestep));
        const auto e = study::encode(q.type);
        for (int k = 0; k < study::kEncodingWidth; ++k) phi(r, k) += w * e[k];
      }
      resid(r) = s.target - s.initial_workload * std::exp(-decay * t);
    }
    const Vector beta = numerics::min_norm_lstsq(phi, resid);
    const double mse = (phi * beta - resid).squaredNorm() / static_cast<double>(n);
    if (mse < best_mse) {
      best_mse = mse;
      best.decay = decay;
      for (int k = 0; k < study::kEncodingWidth; ++k) best.impulse[k] = beta(k);
    }
  }
  return best;
}

double predict(const WorkloadModel& m, double wl0, std::span<const TimedQuery> timeline, int now) {
  return std::visit(
      [&](const auto& model) -> double {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, ConstantModel>) {
          return wl0;
        } else if constexpr (std::is_same_v<T, AverageModel>) {
          return model.value;
        } else if constexpr (std::is_same_v<T, GrangerModel>) {
          const auto feats = study::encode_history(timeline, now, model.history_len);
          return predict_granger(model, wl0, feats);
        } else {
          return predict_exp_impulse(model, wl0, timeline, now);
        }
      },
      m);
}

double predict_sample(const WorkloadModel& m, const WorkloadSample& s, bool clamp) {
  double v = std::visit(
      [&](const auto& model) -> double {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, ConstantModel>) {
          return s.initial_workload;
        } else if constexpr (std::is_same_v<T, AverageModel>) {
          return model.value;
        } else if constexpr (std::is_same_v<T, GrangerModel>) {
          return predict_granger_raw(model, s.initial_workload, s.features);
        } else {
          ExpImpulseModel raw = model;
          raw.clamp_output = false;
          return predict_exp_impulse(raw, s.initial_workload, s.timeline, s.timestep);
        }
      },
      m);
  return clamp ? std::clamp(v, 0.0, 1.0) : v;
}

std::string describe(const WorkloadModel& m) {
  return std::visit(
      [](const auto& model) -> std::string {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, ConstantModel>) {
          return "Constant";
        } else if constexpr (std::is_same_v<T, AverageModel>) {
          return "Average";
        } else if constexpr (std::is_same_v<T, GrangerModel>) {
          return std::string("Granger-") + to_string(model.variant) + " H=" + std::to_string(model.history_len);
        } else {
          return "Exp-Impulse";
        }
      },
      m);
}

std::string ModelSpec::label() const {
  switch (kind) {
    case ModelKind::Constant: return "Constant";
    case ModelKind::Average: return "Average";
    case ModelKind::ExpImpulse: return "Exp-Impulse";
    case ModelKind::Granger:
      switch (variant) {
        case GrangerVariant::Plain: return "Granger";
        case GrangerVariant::Nonneg: return "Granger-N";
        case GrangerVariant::Ridge: return "Granger-R";
        case GrangerVariant::RidgeNonneg: return "Granger-RN";
        case GrangerVariant::BoxSim: return "Granger-Sim";
      }
  }
  return "?";
}

std::vector<WorkloadSample> refeaturize(std::span<const WorkloadSample> samples, int history_len) {
  std::vector<WorkloadSample> out(samples.begin(), samples.end());
  for (auto& s : out) s.features = study::encode_history(s.timeline, s.timestep, history_len);
  return out;
}

namespace {

double mse_of(const WorkloadModel& m, std::span<const WorkloadSample> test, bool clamp) {
  double acc = 0.0;
  for (const auto& s : test) {
    const double e = predict_sample(m, s, clamp) - s.target;
    acc += e * e;
  }
  return acc / static_cast<double>(test.size());
}

void split(std::span<const WorkloadSample> samples, const std::vector<int>& fold, int k,
           std::vector<WorkloadSample>& train, std::vector<WorkloadSample>& test) {
  train.clear();
  test.clear();
  for (size_t i = 0; i < samples.size(); ++i) (fold[i] == k ? test : train).push_back(samples[i]);
}

size_t group_count(std::span<const WorkloadSample> samples) {
  std::set<std::string> g;
  for (const auto& s : samples) g.insert(s.group);
  return g.size();
}

WorkloadModel fit_with_lambda(const ModelSpec& spec, std::span<const WorkloadSample> samples, const CvOptions& opts,
                              std::optional<double> lambda) {
  switch (spec.kind) {
    case ModelKind::Constant: return ConstantModel{};
    case ModelKind::Average: {
      double acc = 0.0;
      for (const auto& s : samples) acc += spec.average_source == AverageSource::TargetMean ? s.target : s.initial_workload;
      return AverageModel{acc / static_cast<double>(samples.size())};
    }
    case ModelKind::ExpImpulse: return fit_exp_impulse(samples, opts.decay_grid);
    case ModelKind::Granger: {
      FitOptions fo = opts.fit;
      fo.ridge_lambda = lambda;
      return fit_granger(samples, spec.variant, spec.history_len, fo);
    }
  }
  throw Error(ErrorKind::ConfigError, "unknown model kind");
}

}  // namespace

CvReport CvReport::from_folds(std::vector<double> mse) {
  CvReport r;
  r.fold_mse = std::move(mse);
  if (r.fold_mse.empty()) return r;
  const double n = static_cast<double>(r.fold_mse.size());
  r.mean = std::accumulate(r.fold_mse.begin(), r.fold_mse.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : r.fold_mse) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / n);
  std::vector<double> sorted = r.fold_mse;
  std::sort(sorted.begin(), sorted.end());
  const size_t mid = sorted.size() / 2;
  r.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return r;
}

std::vector<int> assign_folds(std::span<const WorkloadSample> samples, int folds, bool grouped, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorKind::ConfigError, "cross-validation needs at least 2 folds");
  Rng rng = make_rng(seed, {0xF01D});
  std::vector<int> out(samples.size());
  if (grouped) {
    std::vector<std::string> groups;
    {
      std::set<std::string> uniq;
      for (const auto& s : samples) uniq.insert(s.group);
      groups.assign(uniq.begin(), uniq.end());
    }
    if (static_cast<int>(groups.size()) < folds) {
      throw Error(ErrorKind::InsufficientGroups,
                  std::to_string(groups.size()) + " participant groups for " + std::to_string(folds) + " folds");
    }
    std::shuffle(groups.begin(), groups.end(), rng);
    std::map<std::string, int> fold_of;
    for (size_t i = 0; i < groups.size(); ++i) fold_of[groups[i]] = static_cast<int>(i % static_cast<size_t>(folds));
    for (size_t i = 0; i < samples.size(); ++i) out[i] = fold_of[samples[i].group];
  } else {
    if (samples.size() < static_cast<size_t>(folds)) {
      throw Error(ErrorKind::InsufficientGroups, "fewer samples than folds");
    }
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t i = 0; i < order.size(); ++i) out[order[i]] = static_cast<int>(i % static_cast<size_t>(folds));
  }
  return out;
}

double select_ridge_lambda(std::span<const WorkloadSample> samples, const ModelSpec& spec, const CvOptions& opts) {
  if (opts.ridge_grid.empty()) throw Error(ErrorKind::ConfigError, "empty ridge grid");
  const bool grouped = opts.grouped && group_count(samples) >= static_cast<size_t>(opts.inner_folds);
  const auto fold = assign_folds(samples, opts.inner_folds, grouped, opts.seed + 1);
  double best_lambda = opts.ridge_grid.front();
  double best = std::numeric_limits<double>::infinity();
  std::vector<WorkloadSample> train, test;
  for (double lambda : opts.ridge_grid) {
    double acc = 0.0;
    for (int k = 0; k < opts.inner_folds; ++k) {
      split(samples, fold, k, train, test);
      if (test.empty() || train.empty()) continue;
      acc += mse_of(fit_with_lambda(spec, train, opts, lambda), test, opts.clamp);
    }
    if (acc < best) {
      best = acc;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

WorkloadModel fit_model(const ModelSpec& spec, std::span<const WorkloadSample> samples, const CvOptions& opts) {
  if (samples.empty()) throw Error(ErrorKind::ConfigError, "cannot fit a model on zero samples");
  std::vector<WorkloadSample> local;
  std::span<const WorkloadSample> data = samples;
  if (spec.kind == ModelKind::Granger &&
      samples.front().features.size() != static_cast<size_t>(study::kEncodingWidth * spec.history_len)) {
    local = refeaturize(samples, spec.history_len);
    data = local;
  }
  std::optional<double> lambda = spec.ridge_lambda;
  if (spec.kind == ModelKind::Granger && has_ridge_penalty(spec.variant) && !lambda) {
    lambda = select_ridge_lambda(data, spec, opts);
  }
  return fit_with_lambda(spec, data, opts, lambda);
}

CvReport cross_validate(std::span<const WorkloadSample> samples, const ModelSpec& spec, const CvOptions& opts) {
  if (samples.empty()) throw Error(ErrorKind::ConfigError, "cannot cross-validate zero samples");
  std::vector<WorkloadSample> data(samples.begin(), samples.end());
  if (spec.kind == ModelKind::Granger) data = refeaturize(samples, spec.history_len);
  const auto fold = assign_folds(data, opts.folds, opts.grouped, opts.seed);
  std::vector<double> mse;
  std::vector<double> lambdas;
  std::vector<WorkloadSample> train, test;
  for (int k = 0; k < opts.folds; ++k) {
    split(data, fold, k, train, test);
    if (test.empty()) continue;
    const auto model = fit_model(spec, train, opts);
    if (const auto* g = std::get_if<GrangerModel>(&model); g && g->ridge_lambda) lambdas.push_back(*g->ridge_lambda);
    mse.push_back(mse_of(model, test, opts.clamp));
  }
  auto report = CvReport::from_folds(std::move(mse));
  report.chosen_lambda = std::move(lambdas);
  return report;
}

namespace {

int tie_history(const ModelSpec& s) {
  return s.kind == ModelKind::Granger ? s.history_len : (s.kind == ModelKind::ExpImpulse ? 1 << 20 : 0);
}

int tie_rank(const ModelSpec& s) {
  switch (s.kind) {
    case ModelKind::Constant: return 0;
    case ModelKind::Average: return 1;
    case ModelKind::Granger: return 2 + static_cast<int>(s.variant);
    case ModelKind::ExpImpulse: return 100;
  }
  return 1000;
}

}  // namespace

ModelSpec select_model(std::span<const LabeledReport> reports) {
  if (reports.empty()) throw Error(ErrorKind::ConfigError, "select_model needs at least one report");
  const LabeledReport* best = &reports.front();
  auto better = [](const LabeledReport& a, const LabeledReport& b) {
    // NaN medians (diverged fits) never win.
    const double ma = std::isnan(a.report.median) ? std::numeric_limits<double>::infinity() : a.report.median;
    const double mb = std::isnan(b.report.median) ? std::numeric_limits<double>::infinity() : b.report.median;
    if (ma != mb) return ma < mb;
    if (tie_history(a.spec) != tie_history(b.spec)) return tie_history(a.spec) < tie_history(b.spec);
    return tie_rank(a.spec) < tie_rank(b.spec);
  };
  for (const auto& r : reports)
    if (better(r, *best)) best = &r;
  return best->spec;
}

std::vector<ModelSpec> model_zoo_specs() {
  std::vector<ModelSpec> specs;
  specs.push_back({ModelKind::Constant, GrangerVariant::Plain, 0, std::nullopt});
  specs.push_back({ModelKind::Average, GrangerVariant::Plain, 0, std::nullopt});
  for (auto v : {GrangerVariant::Plain, GrangerVariant::Nonneg, GrangerVariant::Ridge, GrangerVariant::RidgeNonneg})
    for (int h : {1, 5, 10, 15, 20, 25, 30}) specs.push_back({ModelKind::Granger, v, h, std::nullopt});
  specs.push_back({ModelKind::ExpImpulse, GrangerVariant::Plain, 0, std::nullopt});
  return specs;
}

std::string fingerprint(std::span<const WorkloadSample> samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& s : samples) {
    mix(&s.initial_workload, sizeof s.initial_workload);
    mix(&s.target, sizeof s.target);
    mix(&s.timestep, sizeof s.timestep);
    mix(s.group.data(), s.group.size());
    for (const auto& q : s.timeline) {
      const int packed[4] = {q.timestep, static_cast<int>(q.type.difficulty), static_cast<int>(q.type.response),
                             static_cast<int>(q.type.distraction)};
      mix(packed, sizeof packed);
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string model_to_text(const WorkloadModel& m, const std::string& data_fingerprint) {
  json j{{"schema", "hilbandit.workload_model"}, {"version", kModelSchemaVersion}, {"fingerprint", data_fingerprint}};
  std::visit(
      [&](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, ConstantModel>) {
          j["kind"] = "constant";
        } else if constexpr (std::is_same_v<T, AverageModel>) {
          j["kind"] = "average";
          j["value"] = model.value;
        } else if constexpr (std::is_same_v<T, GrangerModel>) {
          j["kind"] = "granger";
          j["variant"] = to_string(model.variant);
          j["history"] = model.history_len;
          j["ridge_lambda"] = model.ridge_lambda ? json(*model.ridge_lambda) : json(nullptr);
          j["gamma"] = model.gamma;
          j["bias"] = model.bias;
          j["lag_weights"] = model.lag_weights;
          j["clamp"] = model.clamp_output;
        } else {
          j["kind"] = "exp_impulse";
          j["decay"] = model.decay;
          j["impulse"] = model.impulse;
          j["clamp"] = model.clamp_output;
        }
      },
      m);
  return j.dump(2) + "\n";
}

WorkloadModel model_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, std::string("workload model: ") + e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != "hilbandit.workload_model")
      throw Error(ErrorKind::ParseError, "not a workload model file");
    if (j.at("version").get<int>() != kModelSchemaVersion)
      throw Error(ErrorKind::SchemaVersionMismatch, "workload model version " + j.at("version").dump());
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "constant") return ConstantModel{};
    if (kind == "average") return AverageModel{j.at("value").get<double>()};
    if (kind == "granger") {
      GrangerModel m;
      m.variant = parse_variant(j.at("variant").get<std::string>());
      m.history_len = j.at("history").get<int>();
      if (!j.at("ridge_lambda").is_null()) m.ridge_lambda = j.at("ridge_lambda").get<double>();
      m.gamma = j.at("gamma").get<double>();
      m.bias = j.at("bias").get<double>();
      m.lag_weights = j.at("lag_weights").get<std::vector<double>>();
      m.clamp_output = j.at("clamp").get<bool>();
      if (m.lag_weights.size() != static_cast<size_t>(study::kEncodingWidth * m.history_len))
        throw Error(ErrorKind::ParseError, "lag_weights width does not match history");
      return m;
    }
    if (kind == "exp_impulse") {
      ExpImpulseModel m;
      m.decay = j.at("decay").get<double>();
      m.impulse = j.at("impulse").get<std::array<double, study::kEncodingWidth>>();
      m.clamp_output = j.at("clamp").get<bool>();
      return m;
    }
    throw Error(ErrorKind::ParseError, "unknown workload model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("workload model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const WorkloadModel& m, const std::string& data_fingerprint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << model_to_text(m, data_fingerprint);
}

WorkloadModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_text(ss.str());
}

}  // namespace hilbandit::workload
