#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace pcforge::math {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

// Events whose log-probability falls below this are treated as null.
inline constexpr double kLogUnderflow = -700.0;

// log(exp(a) + exp(b)), exact for -inf operands.
double log_add_exp(double a, double b);

// log(sum_i exp(xs[i])); -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> xs);

// Numerically stable softmax and its logarithm.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

double normal_log_pdf(double z);
double normal_cdf(double z);

// log Phi(z), accurate far into the lower tail.
double normal_log_cdf(double z);

// phi(z) / Phi(z), the inverse Mills ratio.
double normal_hazard(double z);

}  // namespace pcforge::math
