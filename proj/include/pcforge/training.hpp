#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pcforge/constraints.hpp"
#include "pcforge/data.hpp"

namespace pcforge {

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double lambda0 = 1.0;
  double gamma = 10.0;
  std::size_t t_max = 10;
  double violation_tol = 1e-3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

// Throws InvalidArgument when a bound is violated.
void check_config(const TrainConfig& config);

struct EpochRecord {
  std::size_t iteration = 0;  // 0 = maximum-likelihood phase, t >= 1 = penalized run t
  std::size_t epoch = 0;
  double mean_ll = 0.0;       // mean over the epoch's batches, before each step
  double objective = 0.0;     // mean batch LL minus lambda * sum zeta, same averaging
  bool operator==(const EpochRecord&) const = default;
};

struct OuterRecord {
  std::size_t t = 0;
  double lambda = 0.0;
  double violation_before = 0.0;
  double violation_after = 0.0;
  bool operator==(const OuterRecord&) const = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<OuterRecord> outer;
  double initial_violation = 0.0;  // after the likelihood phase
  double final_violation = 0.0;
  std::vector<double> theta;       // final parameters, ParameterView order
  double wall_seconds = 0.0;
};

// Mini-batch Adam ascent on the mean log-likelihood; updates `circuit`.
TrainReport fit_mle(Circuit& circuit, const Dataset& data, const TrainConfig& config);

// fit_mle, then penalized runs with lambda_t = lambda0 * gamma^(t-1) while
// the total violation exceeds violation_tol and t <= t_max. Each run warm
// starts from the previous parameters with a fresh Adam state.
// `on_iteration` sees the circuit after the likelihood phase (t = 0) and
// after every penalized run t.
using IterationHook = std::function<void(std::size_t t, const Circuit& circuit)>;
TrainReport fit_with_knowledge(Circuit& circuit, const Dataset& data, std::span<const GroundedConstraint> constraints,
                               const TrainConfig& config, const IterationHook& on_iteration = {});

// Mean log-density over rows, summed in row order.
double evaluate(const Circuit& circuit, const Dataset& data);

// Line records `<epoch> <split> <metric> <value>`; see docs/FORMATS.md.
std::string format_report(const TrainReport& report);

}  // namespace pcforge
