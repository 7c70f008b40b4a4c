#pragma once

#include <span>

namespace dfl::stats {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
  // Set when the differences have zero spread but a nonzero mean (t is then
  // reported as +/-infinity and p as 0).
  bool degenerate = false;
};

// Two-sided paired t-test on a - b. Needs equal lengths of at least 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_std(std::span<const double> v);

}  // namespace dfl::stats
