#pragma once

#include <span>
#include <string>
#include <vector>

#include "hilbandit/sim.hpp"

namespace hilbandit::metrics {

struct EpisodeMetrics {
  double r_task_avg = 0.0;
  double delta_wl = 0.0;
  double w_task = 1.0;
  double m_wt = 0.0;
  std::vector<int> t_conv;  // attempts used per food
  double t_conv_avg = 0.0;
  double f_q = 0.0;
  double f_fail_food = 0.0;
  double f_auto_food = 0.0;
};

double surrogate(double w_task, double r_task_avg, double delta_wl);

EpisodeMetrics compute_metrics(const sim::EpisodeTrace& trace, double w_task);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // unbiased; 0 for a single value
  double se = 0.0;
  std::size_t n = 0;
};

Summary aggregate(std::span<const double> values);

/// Welford accumulator.
class RunningStats {
 public:
  void push(double v);
  Summary summary() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct MetricsSummary {
  Summary r_task_avg, m_wt, f_q, delta_wl, t_conv, f_fail_food, f_auto_food;
};

MetricsSummary aggregate(std::span<const EpisodeMetrics> runs);

/// "mean±std" with three decimals.
std::string format_pm(const Summary& s);

}  // namespace hilbandit::metrics
