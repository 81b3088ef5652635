#include "hilbandit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "hilbandit/error.hpp"

namespace hilbandit::stats {

namespace {

/// Midranks of `v` doubled so they are integers, plus the tie term sum(t^3 - t).
struct Ranking {
  std::vector<long> doubled;
  double tie_term = 0.0;
  bool ties = false;
};

Ranking rank(std::span<const double> v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  Ranking r;
  r.doubled.assign(n, 0);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const long twice_mid = static_cast<long>(i + j + 2);  // (i+1) + (j+1)
    for (size_t k = i; k <= j; ++k) r.doubled[idx[k]] = twice_mid;
    const double t = static_cast<double>(j - i + 1);
    if (t > 1) {
      r.ties = true;
      r.tie_term += t * t * t - t;
    }
    i = j + 1;
  }
  return r;
}

double finish(double p_le, double p_ge, Alternative alt) {
  switch (alt) {
    case Alternative::Less: return std::clamp(p_le, 0.0, 1.0);
    case Alternative::Greater: return std::clamp(p_ge, 0.0, 1.0);
    case Alternative::TwoSided: return std::clamp(2.0 * std::min(p_le, p_ge), 0.0, 1.0);
  }
  return 1.0;
}

/// Normal tails with a 0.5 continuity correction on statistic `s`.
double approx_p(double s, double mean, double var, Alternative alt) {
  if (!(var > 0.0)) return 1.0;
  const double sd = std::sqrt(var);
  const double p_le = normal_cdf((s - mean + 0.5) / sd);
  const double p_ge = 1.0 - normal_cdf((s - mean - 0.5) / sd);
  return finish(p_le, p_ge, alt);
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

const char* to_string(Alternative a) {
  switch (a) {
    case Alternative::Less: return "less";
    case Alternative::Greater: return "greater";
    case Alternative::TwoSided: return "two_sided";
  }
  return "?";
}

Alternative parse_alternative(const char* s) {
  if (!std::strcmp(s, "less")) return Alternative::Less;
  if (!std::strcmp(s, "greater")) return Alternative::Greater;
  if (!std::strcmp(s, "two_sided") || !std::strcmp(s, "two-sided")) return Alternative::TwoSided;
  throw Error(ErrorKind::ConfigError, std::string("unknown alternative '") + s + "'");
}

TestResult mann_whitney_u(std::span<const double> x, std::span<const double> y, Alternative alt, Method method) {
  const size_t n1 = x.size(), n2 = y.size();
  if (n1 == 0 || n2 == 0) throw Error(ErrorKind::ConfigError, "Mann-Whitney needs two nonempty samples");
  std::vector<double> all(x.begin(), x.end());
  all.insert(all.end(), y.begin(), y.end());
  const auto r = rank(all);
  const size_t n = n1 + n2;

  long r1_doubled = 0;
  for (size_t i = 0; i < n1; ++i) r1_doubled += r.doubled[i];
  const long offset_doubled = static_cast<long>(n1 * (n1 + 1));
  TestResult out;
  out.statistic = 0.5 * static_cast<double>(r1_doubled - offset_doubled);

  const bool exact = method == Method::Exact ||
                     (method == Method::Auto && !r.ties && static_cast<int>(n) <= kExactMannWhitneyTotal);
  out.exact = exact;
  if (exact) {
    // ways[k][s]: subsets of size k whose doubled ranks sum to s.
    const long max_sum = std::accumulate(r.doubled.begin(), r.doubled.end(), 0L);
    std::vector<std::vector<double>> ways(n1 + 1, std::vector<double>(static_cast<size_t>(max_sum) + 1, 0.0));
    ways[0][0] = 1.0;
    for (size_t i = 0; i < n; ++i) {
      const long d = r.doubled[i];
      for (size_t k = std::min(i + 1, n1); k >= 1; --k)
        for (long s = max_sum; s >= d; --s) ways[k][s] += ways[k - 1][s - d];
    }
    double total = 0.0, le = 0.0, ge = 0.0;
    for (long s = 0; s <= max_sum; ++s) {
      const double w = ways[n1][s];
      total += w;
      if (s <= r1_doubled) le += w;
      if (s >= r1_doubled) ge += w;
    }
    out.p = finish(le / total, ge / total, alt);
    return out;
  }
  const double dn = static_cast<double>(n);
  const double mean = static_cast<double>(n1 * n2) / 2.0;
  const double var = static_cast<double>(n1 * n2) / 12.0 * ((dn + 1.0) - r.tie_term / (dn * (dn - 1.0)));
  out.p = approx_p(out.statistic, mean, var, alt);
  return out;
}

TestResult wilcoxon_signed_rank(std::span<const double> diffs, Alternative alt, Method method) {
  std::vector<double> nz, mag;
  for (double d : diffs)
    if (d != 0.0) {
      nz.push_back(d);
      mag.push_back(std::fabs(d));
    }
  if (nz.empty()) throw Error(ErrorKind::AllZeroDiffs, "every paired difference is zero");
  const size_t n = nz.size();
  const auto r = rank(mag);
  long w_doubled = 0;
  for (size_t i = 0; i < n; ++i)
    if (nz[i] > 0) w_doubled += r.doubled[i];
  TestResult out;
  out.statistic = 0.5 * static_cast<double>(w_doubled);

  const bool exact =
      method == Method::Exact || (method == Method::Auto && static_cast<int>(n) <= kExactWilcoxonMax);
  out.exact = exact;
  if (exact) {
    const long max_sum = std::accumulate(r.doubled.begin(), r.doubled.end(), 0L);
    std::vector<double> ways(static_cast<size_t>(max_sum) + 1, 0.0);
    ways[0] = 1.0;
    for (long d : r.doubled)
      for (long s = max_sum; s >= d; --s) ways[s] += ways[s - d];
    double total = 0.0, le = 0.0, ge = 0.0;
    for (long s = 0; s <= max_sum; ++s) {
      total += ways[s];
      if (s <= w_doubled) le += ways[s];
      if (s >= w_doubled) ge += ways[s];
    }
    out.p = finish(le / total, ge / total, alt);
    return out;
  }
  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1.0) / 4.0;
  const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - r.tie_term / 48.0;
  out.p = approx_p(out.statistic, mean, var, alt);
  return out;
}

}  // namespace hilbandit::stats
