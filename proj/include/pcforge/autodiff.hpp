#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "pcforge/inference.hpp"
#include "pcforge/parameters.hpp"

namespace pcforge {

class Tape;

// Handle to a scalar recorded on a Tape.
class Var {
 public:
  Var() = default;
  double value() const;
  std::uint32_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

// Reverse-mode record of scalar primitives. Values are computed eagerly;
// recording a non-finite value throws NumericalError naming the primitive.
//
// Kinks: d|x|/dx = sign(x) with 0 at x = 0, d max(0,x)/dx = 1 for x > 0
// and 0 otherwise.
class Tape {
 public:
  enum class Op : std::uint8_t { Input, Constant, Add, Sub, Mul, Scale, Shift, Exp, Log, LogSumExp, Erf, Max0, Abs, Square };

  Var input(double value);
  Var constant(double value);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double k);
  Var shift(Var a, double k);
  Var exp(Var a);
  Var log(Var a);
  Var log_sum_exp(Var a, Var b);
  Var erf(Var a);
  Var max0(Var a);
  Var abs(Var a);
  Var square(Var a);
  // Left-to-right sum; a constant 0 for an empty list.
  Var sum(std::span<const Var> terms);

  double value(Var v) const { return entries_.at(v.index()).value; }
  std::size_t size() const { return entries_.size(); }
  std::size_t input_count() const { return inputs_.size(); }

  // d output / d input_k for every input in creation order. Visits each
  // tape entry once, newest first.
  std::vector<double> input_gradient(Var output) const;
  std::size_t last_backward_visits() const { return visits_; }

  static std::string_view name(Op op);

 private:
  struct Entry {
    Op op;
    std::uint32_t a;
    std::uint32_t b;
    double value;
    double aux;  // scale factor, or the local derivative for unary ops
  };
  Var record(Op op, std::uint32_t a, std::uint32_t b, double value, double aux);
  void check(Var v) const;

  std::vector<Entry> entries_;
  std::vector<std::uint32_t> inputs_;
  mutable std::size_t visits_ = 0;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator*(double k, Var a);
Var operator+(Var a, double k);
Var operator-(Var a, double k);

// Tape whose inputs are log-probabilities of circuit queries. Usage is
// three-phase: request() every event, evaluate() once (one batched forward
// pass), then compose log_prob() inputs on tape(). gradient() runs the tape
// backwards and then the circuit backwards.
class CircuitTape {
 public:
  using Handle = std::size_t;

  explicit CircuitTape(Evaluator& evaluator);

  // Identical events share a column.
  Handle request(const Event& event);
  Handle request_point(std::span<const double> row);
  void evaluate();

  // Tape input holding log P(event). Valid after evaluate().
  Var log_prob(Handle h);
  double log_value(Handle h) const { return log_values_.at(h); }

  Tape& tape() { return tape_; }
  const ParameterView& parameters() const { return evaluator_->parameters(); }

  // d objective / d theta over ParameterView.
  std::vector<double> gradient(Var objective);

 private:
  Evaluator* evaluator_;
  QueryBatch batch_;
  std::map<Event, Handle> dedupe_;
  std::vector<double> log_values_;
  std::vector<Var> query_var_;  // tape input per query, unbound until first use
  std::vector<std::pair<std::size_t, Handle>> query_inputs_;  // (tape input position, query)
  Tape tape_;
  bool evaluated_ = false;
};

// Builds an objective on a freshly evaluated tape: request, evaluate(),
// compose, return the scalar.
using ObjectiveBuilder = std::function<Var(CircuitTape&)>;

struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> gradient;
};

// Evaluates `build` at `theta` (ParameterView order) with its gradient.
ObjectiveValue evaluate_objective(Evaluator& evaluator, std::span<const double> theta, const ObjectiveBuilder& build);

// Gradient of `build` at the evaluator's current parameters.
std::vector<double> grad(Evaluator& evaluator, const ObjectiveBuilder& build);

// Max over parameters of |analytic - central difference| / max(|analytic|, f),
// f = max(1e-8, 1e-3 * max |analytic|): entries far below the gradient's
// scale are judged against that scale, where difference roundoff dominates.
double finite_diff_check(const ObjectiveBuilder& build, const Circuit& circuit, double h);

}  // namespace pcforge
