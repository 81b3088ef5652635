#include "hilbandit/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace hilbandit::metrics {

double surrogate(double w_task, double r_task_avg, double delta_wl) {
  return w_task * r_task_avg - (1.0 - w_task) * delta_wl;
}

EpisodeMetrics compute_metrics(const sim::EpisodeTrace& trace, double w_task) {
  if (trace.steps.empty() || trace.foods.empty()) throw Error(ErrorKind::EmptyTrace, "trace has no steps");
  EpisodeMetrics m;
  m.w_task = w_task;
  double r = 0.0;
  for (const auto& s : trace.steps) r += s.r_task;
  m.r_task_avg = r / static_cast<double>(trace.steps.size());
  m.delta_wl = trace.wl_final - trace.wl0;
  m.m_wt = surrogate(w_task, m.r_task_avg, m.delta_wl);

  int queried = 0, failed = 0, autonomous = 0;
  double conv = 0.0;
  for (const auto& f : trace.foods) {
    m.t_conv.push_back(f.attempts);
    conv += f.attempts;
    queried += f.queried;
    failed += !f.converged;
    autonomous += f.converged && !f.queried;
  }
  const double nf = static_cast<double>(trace.foods.size());
  m.t_conv_avg = conv / nf;
  m.f_q = queried / nf;
  m.f_fail_food = failed / nf;
  m.f_auto_food = autonomous / nf;
  return m;
}

Summary aggregate(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.se = s.std / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

void RunningStats::push(double v) {
  ++n_;
  const double d = v - mean_;
  mean_ += d / static_cast<double>(n_);
  m2_ += d * (v - mean_);
}

Summary RunningStats::summary() const {
  Summary s;
  s.n = n_;
  s.mean = mean_;
  if (n_ > 1) {
    s.std = std::sqrt(m2_ / static_cast<double>(n_ - 1));
    s.se = s.std / std::sqrt(static_cast<double>(n_));
  }
  return s;
}

MetricsSummary aggregate(std::span<const EpisodeMetrics> runs) {
  auto col = [&](auto field) {
    std::vector<double> v;
    v.reserve(runs.size());
    for (const auto& r : runs) v.push_back(field(r));
    return aggregate(v);
  };
  MetricsSummary out;
  out.r_task_avg = col([](const EpisodeMetrics& m) { return m.r_task_avg; });
  out.m_wt = col([](const EpisodeMetrics& m) { return m.m_wt; });
  out.f_q = col([](const EpisodeMetrics& m) { return m.f_q; });
  out.delta_wl = col([](const EpisodeMetrics& m) { return m.delta_wl; });
  out.t_conv = col([](const EpisodeMetrics& m) { return m.t_conv_avg; });
  out.f_fail_food = col([](const EpisodeMetrics& m) { return m.f_fail_food; });
  out.f_auto_food = col([](const EpisodeMetrics& m) { return m.f_auto_food; });
  return out;
}

std::string format_pm(const Summary& s) {
  char buf[64];
  // Normalise negative zero so identical inputs print identically.
  const double mean = s.mean == 0.0 ? 0.0 : s.mean;
  std::snprintf(buf, sizeof buf, "%.3f±%.3f", mean, s.std);
  std::string out = buf;
  if (out.rfind("-0.000", 0) == 0) out.erase(0, 1);
  return out;
}

}  // namespace hilbandit::metrics
