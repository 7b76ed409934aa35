#include "fscplan/stats.hpp"

#include <algorithm>
#include <cmath>

#include "fscplan/errors.hpp"

namespace fscplan {

double quantile(std::vector<double> samples, double q) {
  if (samples.empty()) throw Error("quantile of empty sample");
  std::sort(samples.begin(), samples.end());
  double pos = q * static_cast<double>(samples.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return samples[lo] * (1.0 - frac) + samples[hi] * frac;
}

SampleSummary iqm_iqr(const std::vector<double>& samples) {
  if (samples.empty()) throw Error("iqm of empty sample");
  SampleSummary out;
  out.n = static_cast<int>(samples.size());
  out.samples = samples;
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  std::size_t drop = sorted.size() / 4;
  double sum = 0.0;
  std::size_t kept = sorted.size() - 2 * drop;
  for (std::size_t i = drop; i < sorted.size() - drop; ++i) sum += sorted[i];
  out.iqm = sum / static_cast<double>(kept);
  out.iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  return out;
}

SignTestResult sign_test(const std::vector<double>& samples, double m) {
  if (samples.empty()) throw Error("sign test of empty sample");
  SignTestResult out;
  for (double x : samples) {
    if (x > m) ++out.above;
    if (x != m) ++out.effective_n;
  }
  if (out.effective_n == 0) {
    out.defined = false;
    out.p_value = 1.0;
    return out;
  }
  // Exact upper binomial tail at p = 1/2: sum_{j>=k} C(n,j) / 2^n.
  int n = out.effective_n;
  double coeff = 1.0;  // C(n, j), walked up from j = 0
  double tail = 0.0;
  for (int j = 0; j <= n; ++j) {
    if (j >= out.above) tail += coeff;
    coeff = coeff * static_cast<double>(n - j) / static_cast<double>(j + 1);
  }
  out.p_value = tail * std::pow(0.5, n);
  return out;
}

}  // namespace fscplan
