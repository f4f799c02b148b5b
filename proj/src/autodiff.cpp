#include "pcforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pcforge/errors.hpp"

namespace pcforge {

// ---------------------------------------------------------------------------
// ParameterView

ParameterView::ParameterView(const Circuit& circuit) {
  offsets_.reserve(circuit.size() + 1);
  std::size_t off = 0;
  for (const auto& node : circuit.nodes()) {
    offsets_.push_back(off);
    if (const auto* s = std::get_if<SumNode>(&node.kind)) {
      off += s->log_weights.size();
    } else if (const auto* l = std::get_if<LeafNode>(&node.kind)) {
      for (const auto& f : l->factors) {
        if (const auto* c = std::get_if<Categorical>(&f.distribution))
          off += c->logits.size();
        else
          off += 2;
      }
    }
  }
  offsets_.push_back(off);
  total_ = off;
}

std::size_t ParameterView::index(ParameterSlot slot) const {
  if (slot.node + 1 >= offsets_.size() || slot.slot >= count(slot.node))
    throw InvalidArgument("parameter slot out of range");
  return offsets_[slot.node] + slot.slot;
}

ParameterSlot ParameterView::slot(std::size_t flat_index) const {
  if (flat_index >= total_) throw InvalidArgument("flat parameter index out of range");
  // Last node whose offset is <= flat_index and that owns parameters.
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat_index);
  const auto node = static_cast<NodeId>(std::distance(offsets_.begin(), it) - 1);
  return ParameterSlot{node, flat_index - offsets_[node]};
}

std::vector<double> ParameterView::gather(const Circuit& circuit) const {
  std::vector<double> out;
  out.reserve(total_);
  for (const auto& node : circuit.nodes()) {
    if (const auto* s = std::get_if<SumNode>(&node.kind)) {
      out.insert(out.end(), s->log_weights.begin(), s->log_weights.end());
    } else if (const auto* l = std::get_if<LeafNode>(&node.kind)) {
      for (const auto& f : l->factors) {
        if (const auto* c = std::get_if<Categorical>(&f.distribution)) {
          out.insert(out.end(), c->logits.begin(), c->logits.end());
        } else {
          const auto& g = std::get<Gaussian>(f.distribution);
          out.push_back(g.mean);
          out.push_back(g.log_std);
        }
      }
    }
  }
  if (out.size() != total_) throw InvalidArgument("circuit does not match this parameter view");
  return out;
}

void ParameterView::scatter(std::span<const double> values, Circuit& circuit) const {
  if (values.size() != total_) throw InvalidArgument("parameter vector has the wrong length");
  std::size_t i = 0;
  for (auto& node : circuit.mutable_nodes()) {
    if (auto* s = std::get_if<SumNode>(&node.kind)) {
      for (double& w : s->log_weights) w = values[i++];
    } else if (auto* l = std::get_if<LeafNode>(&node.kind)) {
      for (auto& f : l->factors) {
        if (auto* c = std::get_if<Categorical>(&f.distribution)) {
          for (double& v : c->logits) v = values[i++];
        } else {
          auto& g = std::get<Gaussian>(f.distribution);
          g.mean = values[i++];
          g.log_std = values[i++];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Tape

double Var::value() const {
  if (tape_ == nullptr) throw InvalidArgument("unbound tape variable");
  return tape_->value(*this);
}

std::string_view Tape::name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::LogSumExp: return "log_sum_exp";
    case Op::Erf: return "erf";
    case Op::Max0: return "max0";
    case Op::Abs: return "abs";
    case Op::Square: return "square";
  }
  return "?";
}

void Tape::check(Var v) const {
  if (v.tape() != this) throw InvalidArgument("variable belongs to a different tape");
}

Var Tape::record(Op op, std::uint32_t a, std::uint32_t b, double value, double aux) {
  if (!std::isfinite(value) || !std::isfinite(aux))
    throw NumericalError("non-finite value produced by primitive '" + std::string(name(op)) + "'");
  entries_.push_back(Entry{op, a, b, value, aux});
  return Var(this, static_cast<std::uint32_t>(entries_.size() - 1));
}

Var Tape::input(double value) {
  Var v = record(Op::Input, 0, 0, value, 0.0);
  inputs_.push_back(v.index());
  return v;
}

Var Tape::constant(double value) { return record(Op::Constant, 0, 0, value, 0.0); }

Var Tape::add(Var a, Var b) {
  check(a), check(b);
  return record(Op::Add, a.index(), b.index(), a.value() + b.value(), 0.0);
}

Var Tape::sub(Var a, Var b) {
  check(a), check(b);
  return record(Op::Sub, a.index(), b.index(), a.value() - b.value(), 0.0);
}

Var Tape::mul(Var a, Var b) {
  check(a), check(b);
  return record(Op::Mul, a.index(), b.index(), a.value() * b.value(), 0.0);
}

Var Tape::scale(Var a, double k) {
  check(a);
  return record(Op::Scale, a.index(), 0, k * a.value(), k);
}

Var Tape::shift(Var a, double k) {
  check(a);
  return record(Op::Shift, a.index(), 0, a.value() + k, 1.0);
}

Var Tape::exp(Var a) {
  check(a);
  const double v = std::exp(a.value());
  return record(Op::Exp, a.index(), 0, v, v);
}

Var Tape::log(Var a) {
  check(a);
  return record(Op::Log, a.index(), 0, std::log(a.value()), 1.0 / a.value());
}

Var Tape::log_sum_exp(Var a, Var b) {
  check(a), check(b);
  const double x = a.value(), y = b.value();
  const double m = std::max(x, y);
  const double v = m + std::log(std::exp(x - m) + std::exp(y - m));
  return record(Op::LogSumExp, a.index(), b.index(), v, 0.0);
}

Var Tape::erf(Var a) {
  check(a);
  const double x = a.value();
  return record(Op::Erf, a.index(), 0, std::erf(x), 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x));
}

Var Tape::max0(Var a) {
  check(a);
  const double x = a.value();
  return record(Op::Max0, a.index(), 0, x > 0.0 ? x : 0.0, x > 0.0 ? 1.0 : 0.0);
}

Var Tape::abs(Var a) {
  check(a);
  const double x = a.value();
  return record(Op::Abs, a.index(), 0, std::abs(x), x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
}

Var Tape::square(Var a) {
  check(a);
  const double x = a.value();
  return record(Op::Square, a.index(), 0, x * x, 2.0 * x);
}

Var Tape::sum(std::span<const Var> terms) {
  if (terms.empty()) return constant(0.0);
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

std::vector<double> Tape::input_gradient(Var output) const {
  check(output);
  std::vector<double> adj(output.index() + 1, 0.0);
  adj[output.index()] = 1.0;
  visits_ = 0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    ++visits_;
    const double g = adj[i];
    if (g == 0.0) continue;
    const Entry& e = entries_[i];
    switch (e.op) {
      case Op::Input:
      case Op::Constant:
        break;
      case Op::Add:
        adj[e.a] += g;
        adj[e.b] += g;
        break;
      case Op::Sub:
        adj[e.a] += g;
        adj[e.b] -= g;
        break;
      case Op::Mul:
        adj[e.a] += g * entries_[e.b].value;
        adj[e.b] += g * entries_[e.a].value;
        break;
      case Op::LogSumExp:
        adj[e.a] += g * std::exp(entries_[e.a].value - e.value);
        adj[e.b] += g * std::exp(entries_[e.b].value - e.value);
        break;
      default:
        adj[e.a] += g * e.aux;
        break;
    }
  }
  std::vector<double> out(inputs_.size(), 0.0);
  for (std::size_t k = 0; k < inputs_.size(); ++k)
    if (inputs_[k] <= output.index()) out[k] = adj[inputs_[k]];
  return out;
}

Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
Var operator*(double k, Var a) { return a.tape()->scale(a, k); }
Var operator+(Var a, double k) { return a.tape()->shift(a, k); }
Var operator-(Var a, double k) { return a.tape()->shift(a, -k); }

// ---------------------------------------------------------------------------
// CircuitTape

CircuitTape::CircuitTape(Evaluator& evaluator)
    : evaluator_(&evaluator), batch_(evaluator.circuit().schema().size()) {}

CircuitTape::Handle CircuitTape::request(const Event& event) {
  if (evaluated_) throw InvalidArgument("request() after evaluate()");
  auto [it, inserted] = dedupe_.try_emplace(event, batch_.size());
  if (inserted) batch_.add(event);
  return it->second;
}

CircuitTape::Handle CircuitTape::request_point(std::span<const double> row) {
  if (evaluated_) throw InvalidArgument("request() after evaluate()");
  return batch_.add_point(row);
}

void CircuitTape::evaluate() {
  if (evaluated_) throw InvalidArgument("evaluate() called twice");
  log_values_ = batch_.size() ? evaluator_->forward(batch_) : std::vector<double>{};
  query_var_.assign(log_values_.size(), Var());
  evaluated_ = true;
}

Var CircuitTape::log_prob(Handle h) {
  if (!evaluated_) throw InvalidArgument("log_prob() before evaluate()");
  if (h >= log_values_.size()) throw InvalidArgument("unknown query handle");
  if (query_var_[h].tape() != nullptr) return query_var_[h];
  if (!std::isfinite(log_values_[h]))
    throw NumericalError("circuit query evaluated to a non-finite log-probability");
  query_inputs_.emplace_back(tape_.input_count(), h);
  query_var_[h] = tape_.input(log_values_[h]);
  return query_var_[h];
}

std::vector<double> CircuitTape::gradient(Var objective) {
  const auto d_inputs = tape_.input_gradient(objective);
  std::vector<double> root_adjoint(log_values_.size(), 0.0);
  for (auto [pos, h] : query_inputs_) root_adjoint[h] += d_inputs[pos];
  std::vector<double> grad(evaluator_->parameters().size(), 0.0);
  if (!log_values_.empty()) evaluator_->backward(root_adjoint, grad);
  return grad;
}

ObjectiveValue evaluate_objective(Evaluator& evaluator, std::span<const double> theta, const ObjectiveBuilder& build) {
  evaluator.set_parameters(theta);
  CircuitTape ct(evaluator);
  Var out = build(ct);
  ObjectiveValue result;
  result.value = out.value();
  result.gradient = ct.gradient(out);
  return result;
}

std::vector<double> grad(Evaluator& evaluator, const ObjectiveBuilder& build) {
  CircuitTape ct(evaluator);
  Var out = build(ct);
  return ct.gradient(out);
}

double finite_diff_check(const ObjectiveBuilder& build, const Circuit& circuit, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  Evaluator evaluator(circuit);
  std::vector<double> theta = evaluator.theta();
  const auto analytic = evaluate_objective(evaluator, theta, build).gradient;
  auto value_at = [&](const std::vector<double>& t) {
    evaluator.set_parameters(t);
    CircuitTape ct(evaluator);
    return build(ct).value();
  };
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  const double floor = std::max(1e-8, 1e-3 * scale);
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = value_at(theta);
    theta[i] = saved - h;
    const double down = value_at(theta);
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(floor, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace pcforge
