#include "pcforge/training.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "pcforge/errors.hpp"

namespace pcforge {

namespace {

class Adam {
 public:
  Adam(std::size_t n, const TrainConfig& c) : m_(n, 0.0), v_(n, 0.0), c_(c) {}

  // Ascent step on `theta` along `g`.
  void step(std::vector<double>& theta, const std::vector<double>& g) {
    ++t_;
    const double b1t = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
    const double b2t = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = c_.beta1 * m_[i] + (1.0 - c_.beta1) * g[i];
      v_[i] = c_.beta2 * v_[i] + (1.0 - c_.beta2) * g[i] * g[i];
      theta[i] += c_.lr * (m_[i] / b1t) / (std::sqrt(v_[i] / b2t) + c_.adam_eps);
    }
  }

 private:
  std::vector<double> m_, v_;
  const TrainConfig& c_;
  std::size_t t_ = 0;
};

void check_inputs(const Circuit& circuit, const Dataset& data, const TrainConfig& config) {
  check_config(config);
  if (data.schema() != circuit.schema()) throw InvalidArgument("dataset schema does not match the circuit schema");
  if (config.epochs > 0 && data.rows() == 0) throw InvalidArgument("training needs at least one data row");
}

double violation(Evaluator& evaluator, std::span<const GroundedConstraint> constraints) {
  if (constraints.empty()) return 0.0;
  CircuitTape tape(evaluator);
  ViolationRecorder rec(tape, constraints);
  tape.evaluate();
  return rec.total().value();
}

// E epochs of Adam on mean batch LL - lambda * sum zeta (lambda = 0 skips
// the penalty). Appends one EpochRecord per epoch.
void run_phase(Evaluator& evaluator, const Dataset& data, std::span<const GroundedConstraint> constraints,
               double lambda, std::size_t iteration, const TrainConfig& config, std::mt19937_64& rng,
               TrainReport& report) {
  std::vector<double> theta = evaluator.theta();
  Adam adam(theta.size(), config);
  std::vector<std::size_t> order(data.rows());
  const bool penalized = lambda > 0.0 && !constraints.empty();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double ll_sum = 0.0, obj_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      CircuitTape ct(evaluator);
      std::vector<CircuitTape::Handle> rows;
      for (std::size_t r = start; r < end; ++r) rows.push_back(ct.request_point(data.row(order[r])));
      std::optional<ViolationRecorder> rec;
      if (penalized) rec.emplace(ct, constraints);
      ct.evaluate();

      Tape& t = ct.tape();
      std::vector<Var> lps;
      for (auto h : rows) lps.push_back(ct.log_prob(h));
      const Var ll = t.scale(t.sum(lps), 1.0 / static_cast<double>(rows.size()));
      const Var obj = penalized ? t.sub(ll, t.scale(rec->total(), lambda)) : ll;
      if (!std::isfinite(obj.value()))
        throw NumericalError("non-finite training objective at iteration " + std::to_string(iteration) + ", epoch " +
                             std::to_string(epoch));
      ll_sum += ll.value();
      obj_sum += obj.value();
      ++batches;

      const auto g = ct.gradient(obj);
      for (double gi : g)
        if (!std::isfinite(gi))
          throw NumericalError("non-finite gradient at iteration " + std::to_string(iteration) + ", epoch " +
                               std::to_string(epoch));
      adam.step(theta, g);
      evaluator.set_parameters(theta);
    }
    const double b = static_cast<double>(batches);
    report.epochs.push_back(EpochRecord{iteration, epoch, ll_sum / b, obj_sum / b});
  }
}

std::string number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

void check_config(const TrainConfig& c) {
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw InvalidArgument("lr must be > 0");
  if (c.batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (!(c.lambda0 > 0.0) || !std::isfinite(c.lambda0)) throw InvalidArgument("lambda0 must be > 0");
  if (!(c.gamma > 1.0) || !std::isfinite(c.gamma)) throw InvalidArgument("gamma must be > 1");
  if (!(c.violation_tol >= 0.0)) throw InvalidArgument("violation_tol must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) throw InvalidArgument("adam_eps must be > 0");
}

TrainReport fit_mle(Circuit& circuit, const Dataset& data, const TrainConfig& config) {
  check_inputs(circuit, data, config);
  const auto started = std::chrono::steady_clock::now();
  Evaluator evaluator(circuit);
  std::mt19937_64 rng(config.seed);
  TrainReport report;
  run_phase(evaluator, data, {}, 0.0, 0, config, rng, report);
  evaluator.parameters().scatter(evaluator.theta(), circuit);
  report.theta = evaluator.theta();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

TrainReport fit_with_knowledge(Circuit& circuit, const Dataset& data, std::span<const GroundedConstraint> constraints,
                               const TrainConfig& config, const IterationHook& on_iteration) {
  check_inputs(circuit, data, config);
  for (const auto& gc : constraints)
    if (gc.groundings.empty()) throw InvalidArgument("constraint has no groundings");
  const auto started = std::chrono::steady_clock::now();
  Evaluator evaluator(circuit);
  std::mt19937_64 rng(config.seed);
  TrainReport report;
  run_phase(evaluator, data, {}, 0.0, 0, config, rng, report);
  if (on_iteration) {
    evaluator.parameters().scatter(evaluator.theta(), circuit);
    on_iteration(0, circuit);
  }

  double z = violation(evaluator, constraints);
  report.initial_violation = z;
  double lambda = config.lambda0;
  for (std::size_t t = 1; z > config.violation_tol && t <= config.t_max; ++t) {
    run_phase(evaluator, data, constraints, lambda, t, config, rng, report);
    const double after = violation(evaluator, constraints);
    if (!std::isfinite(after)) throw NumericalError("non-finite constraint violation after iteration " + std::to_string(t));
    report.outer.push_back(OuterRecord{t, lambda, z, after});
    z = after;
    lambda *= config.gamma;
    if (on_iteration) {
      evaluator.parameters().scatter(evaluator.theta(), circuit);
      on_iteration(t, circuit);
    }
  }
  report.final_violation = z;
  evaluator.parameters().scatter(evaluator.theta(), circuit);
  report.theta = evaluator.theta();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

double evaluate(const Circuit& circuit, const Dataset& data) {
  if (data.schema() != circuit.schema()) throw InvalidArgument("dataset schema does not match the circuit schema");
  if (data.rows() == 0) throw InvalidArgument("cannot evaluate on an empty dataset");
  Evaluator evaluator(circuit);
  QueryBatch batch(data.cols());
  for (std::size_t r = 0; r < data.rows(); ++r) batch.add_point(data.row(r));
  const auto lp = evaluator.forward(batch);
  double sum = 0.0;
  for (double v : lp) sum += v;
  return sum / static_cast<double>(data.rows());
}

std::string format_report(const TrainReport& report) {
  std::ostringstream out;
  std::size_t global = 0;
  for (std::size_t it = 0; it <= report.outer.size(); ++it) {
    for (const auto& e : report.epochs) {
      if (e.iteration != it) continue;
      ++global;
      out << global << " train ll " << number(e.mean_ll) << '\n';
      if (it > 0) out << global << " train objective " << number(e.objective) << '\n';
    }
    if (it == 0) {
      out << global << " penalty zeta " << number(report.initial_violation) << '\n';
      continue;
    }
    const auto& o = report.outer[it - 1];
    out << global << " penalty iteration " << o.t << '\n';
    out << global << " penalty lambda " << number(o.lambda) << '\n';
    out << global << " penalty zeta " << number(o.violation_after) << '\n';
  }
  out << global << " final zeta " << number(report.final_violation) << '\n';
  out << global << " final wall_seconds " << number(report.wall_seconds) << '\n';
  return out.str();
}

}  // namespace pcforge
