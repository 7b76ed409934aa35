#pragma once

#include <vector>

namespace fscplan {

struct SampleSummary {
  double iqm = 0.0;
  double iqr = 0.0;
  int n = 0;
  std::vector<double> samples;
};

// Interquartile mean via symmetric floor(n/4) trimming; IQR from
// linearly-interpolated quartiles.
SampleSummary iqm_iqr(const std::vector<double>& samples);

// Linear-interpolation quantile (position (n-1)*q on the sorted samples).
double quantile(std::vector<double> samples, double q);

struct SignTestResult {
  double p_value = 1.0;
  int above = 0;      // samples strictly greater than m
  int effective_n = 0;  // samples after dropping ties
  bool defined = true;  // false when every sample ties m
};

// One-sided exact binomial sign test of H1: P(X > m) > 0.5.
SignTestResult sign_test(const std::vector<double>& samples, double m);

}  // namespace fscplan
