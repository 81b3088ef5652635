#pragma once

#include <span>

namespace hilbandit::stats {

enum class Alternative { Less, Greater, TwoSided };

/// Auto picks the exact path when it applies.
enum class Method { Auto, Exact, Approx };

struct TestResult {
  double statistic = 0.0;
  double p = 1.0;
  bool exact = false;
};

const char* to_string(Alternative a);
Alternative parse_alternative(const char* s);

inline constexpr int kExactMannWhitneyTotal = 12;
inline constexpr int kExactWilcoxonMax = 12;

/// U counts pairs with x > y, ties as one half. `Less` tests whether x is stochastically smaller.
/// Exact when n1 + n2 <= 12 and no ties; otherwise normal approximation with tie and continuity correction.
TestResult mann_whitney_u(std::span<const double> x, std::span<const double> y, Alternative alt,
                          Method method = Method::Auto);

/// W is the rank sum of positive differences after dropping zeros (midranks for ties).
/// Exact for n <= 12; normal approximation with tie and continuity correction otherwise.
TestResult wilcoxon_signed_rank(std::span<const double> diffs, Alternative alt, Method method = Method::Auto);

double normal_cdf(double z);

}  // namespace hilbandit::stats
