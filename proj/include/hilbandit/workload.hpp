#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hilbandit/numerics.hpp"
#include "hilbandit/study.hpp"

namespace hilbandit::workload {

using study::TimedQuery;
using study::WorkloadSample;

/// Declaration order is the selection tie-break order.
enum class GrangerVariant { Plain, Nonneg, Ridge, RidgeNonneg, BoxSim };

const char* to_string(GrangerVariant v);
GrangerVariant parse_variant(const std::string& s);
bool has_ridge_penalty(GrangerVariant v);

/// WL_t = gamma*WL_0 + sum_i w_i' phi_{t-i} + w_0.
struct GrangerModel {
  double gamma = 0.0;
  std::vector<double> lag_weights;  // 8*H, lag-major
  double bias = 0.0;
  int history_len = 1;
  GrangerVariant variant = GrangerVariant::Plain;
  std::optional<double> ridge_lambda;
  bool clamp_output = false;
};

double predict_granger(const GrangerModel& m, double wl0, std::span<const double> features);
/// Same value without clamping, whatever clamp_output says.
double predict_granger_raw(const GrangerModel& m, double wl0, std::span<const double> features);

/// Box used for simulation models: gamma and lag weights in [0.05, 1], bias <= 1.
inline constexpr double kSimWeightFloor = 0.05;
inline constexpr double kSimWeightCeil = 1.0;
inline constexpr double kSimBiasCeil = 1.0;
inline constexpr double kSimBiasFloor = -10.0;

struct FitOptions {
  std::optional<double> ridge_lambda;
  /// Unpenalized variants on a rank-deficient design: throw SingularSystem when set,
  /// otherwise return the minimum-norm least-squares coefficients.
  bool strict_rank = false;
  bool clamp_output = false;
  numerics::Tolerances tol;
};

GrangerModel fit_granger(std::span<const WorkloadSample> samples, GrangerVariant variant, int history_len,
                         const FitOptions& opts = {});

/// WL(t) = WL(t_prev) exp(-decay (t - t_prev)) + beta' phi(query).
struct ExpImpulseModel {
  double decay = 1.0;
  std::array<double, study::kEncodingWidth> impulse{};
  bool clamp_output = true;
};

double predict_exp_impulse(const ExpImpulseModel& m, double wl0, std::span<const TimedQuery> queries, double at);

struct DecayGrid {
  double lo = 1e-3;
  double hi = 10.0;
  int points = 25;
  std::vector<double> values() const;
};

ExpImpulseModel fit_exp_impulse(std::span<const WorkloadSample> samples, const DecayGrid& grid = {});

/// Predicts WL_t = WL_0.
struct ConstantModel {};

/// Predicts a fixed training mean.
struct AverageModel {
  double value = 0.0;
};

using WorkloadModel = std::variant<ConstantModel, AverageModel, GrangerModel, ExpImpulseModel>;

/// Workload at timestep `now` given every query so far.
double predict(const WorkloadModel& m, double wl0, std::span<const TimedQuery> timeline, int now);
double predict_sample(const WorkloadModel& m, const WorkloadSample& s, bool clamp);
std::string describe(const WorkloadModel& m);

enum class ModelKind { Constant, Average, Granger, ExpImpulse };

enum class AverageSource { TargetMean, InitialWorkloadMean };

struct ModelSpec {
  ModelKind kind = ModelKind::Granger;
  GrangerVariant variant = GrangerVariant::Plain;
  int history_len = 1;
  /// Fixed ridge strength; when empty and the variant is penalized, chosen by inner CV.
  std::optional<double> ridge_lambda;
  AverageSource average_source = AverageSource::TargetMean;

  std::string label() const;
};

struct CvOptions {
  int folds = 4;
  bool grouped = true;
  std::uint64_t seed = 0;
  int inner_folds = 5;
  std::vector<double> ridge_grid = {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  bool clamp = false;
  DecayGrid decay_grid;
  FitOptions fit;
};

/// Fit a spec on training samples; refeaturizes to the spec's history length.
WorkloadModel fit_model(const ModelSpec& spec, std::span<const WorkloadSample> samples, const CvOptions& opts = {});

/// Recompute the lag block of every sample for history length H from its timeline.
std::vector<WorkloadSample> refeaturize(std::span<const WorkloadSample> samples, int history_len);

struct CvReport {
  std::vector<double> fold_mse;
  double mean = 0.0;
  /// Population std across folds.
  double std = 0.0;
  double median = 0.0;
  /// Ridge strength picked per fold when selected by inner CV.
  std::vector<double> chosen_lambda;

  static CvReport from_folds(std::vector<double> mse);
};

/// Fold index per sample; grouped folds keep each participant in one fold.
std::vector<int> assign_folds(std::span<const WorkloadSample> samples, int folds, bool grouped, std::uint64_t seed);

CvReport cross_validate(std::span<const WorkloadSample> samples, const ModelSpec& spec, const CvOptions& opts = {});

/// Inner-CV choice of ridge strength (mean validation MSE, smallest lambda on ties).
double select_ridge_lambda(std::span<const WorkloadSample> samples, const ModelSpec& spec, const CvOptions& opts);

struct LabeledReport {
  ModelSpec spec;
  CvReport report;
};

ModelSpec select_model(std::span<const LabeledReport> reports);

/// Constant, Average, Granger x {plain, N, R, RN} x H in {1,5,...,30}, Exp-Impulse.
std::vector<ModelSpec> model_zoo_specs();

inline constexpr int kModelSchemaVersion = 1;

std::string fingerprint(std::span<const WorkloadSample> samples);
void save_model(const std::filesystem::path& path, const WorkloadModel& m, const std::string& data_fingerprint = "");
WorkloadModel load_model(const std::filesystem::path& path);
std::string model_to_text(const WorkloadModel& m, const std::string& data_fingerprint = "");
WorkloadModel model_from_text(const std::string& text);

}  // namespace hilbandit::workload
