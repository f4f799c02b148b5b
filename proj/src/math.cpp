#include "pcforge/math.hpp"

#include <algorithm>

namespace pcforge::math {

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - m);
  return m + std::log(sum);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double norm = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - norm;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

double normal_log_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_log_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / std::sqrt(2.0)));
  if (z > -37.0) return std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
  // Asymptotic expansion of the Gaussian tail.
  const double r = 1.0 / (z * z);
  const double series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
  return normal_log_pdf(z) - std::log(-z) + std::log(series);
}

double normal_hazard(double z) { return std::exp(normal_log_pdf(z) - normal_log_cdf(z)); }

}  // namespace pcforge::math
