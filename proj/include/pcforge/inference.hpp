#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pcforge/circuit.hpp"
#include "pcforge/parameters.hpp"

namespace pcforge {

enum class Relation : std::uint8_t { True, Equals, AtMost };

// One per-variable condition. Equals on a continuous variable is evidence
// (evaluates the density); AtMost evaluates the CDF.
struct Atom {
  VarIndex variable = 0;
  Relation relation = Relation::True;
  double value = 0.0;

  static Atom equals(VarIndex v, double x) { return {v, Relation::Equals, x}; }
  static Atom at_most(VarIndex v, double x) { return {v, Relation::AtMost, x}; }

  auto operator<=>(const Atom&) const = default;
};

// Conjunction of atoms over distinct variables; empty means "always true".
// Atoms are kept sorted by variable.
class Event {
 public:
  Event() = default;
  // Throws InvalidArgument when two atoms share a variable.
  explicit Event(std::vector<Atom> atoms);

  // All-Equals event for a complete assignment.
  static Event point(std::span<const double> row);

  const std::vector<Atom>& atoms() const { return atoms_; }
  bool empty() const { return atoms_.empty(); }
  const Atom* find(VarIndex v) const;

  auto operator<=>(const Event&) const = default;

 private:
  std::vector<Atom> atoms_;
};

// f AND g with per-variable merging: Equals dominates a consistent AtMost,
// two AtMost atoms keep the tighter bound. nullopt when contradictory.
std::optional<Event> conjoin(const Event& f, const Event& g);

// Throws InvalidArgument for atoms outside the schema's domains.
void check_event(const Event& event, const VariableSchema& schema);
void check_row(std::span<const double> row, const VariableSchema& schema);

// Partial assignment (evidence); unset entries are marginalized.
struct Assignment {
  std::vector<std::optional<double>> values;
  Event to_event() const;
};

// Dense, variable-major batch of queries for the evaluator.
class QueryBatch {
 public:
  explicit QueryBatch(std::size_t num_variables) : num_vars_(num_variables) {}

  std::size_t add(const Event& event);
  // Complete assignment; no domain checks.
  std::size_t add_point(std::span<const double> row);

  std::size_t size() const { return size_; }
  std::size_t num_variables() const { return num_vars_; }
  Relation relation(VarIndex v, std::size_t column) const { return relation_[column * num_vars_ + v]; }
  double value(VarIndex v, std::size_t column) const { return value_[column * num_vars_ + v]; }

 private:
  std::size_t num_vars_;
  std::size_t size_ = 0;
  std::vector<Relation> relation_;
  std::vector<double> value_;
};

// Compiled, batched log-space evaluator with a matching reverse pass.
// Sum nodes that share a child list are evaluated together as one
// matrix product. Holds the activations of the last forward pass, so one
// instance must not be shared between threads.
class Evaluator {
 public:
  explicit Evaluator(const Circuit& circuit);

  const Circuit& circuit() const { return *circuit_; }
  const ParameterView& parameters() const { return view_; }
  const std::vector<double>& theta() const { return theta_; }

  // Replaces the parameter vector (flat, ParameterView order).
  void set_parameters(std::span<const double> theta);

  // Root log-values, one per query column.
  std::vector<double> forward(const QueryBatch& batch);

  // Accumulates d(sum_b adjoint[b] * root[b]) / d theta into `grad` for the
  // batch of the last forward call.
  void backward(std::span<const double> root_adjoint, std::span<double> grad);

 private:
  struct Step {
    enum Kind : std::uint8_t { Leaf, Product, SumGroup } kind;
    std::size_t index;  // node id, or group index
  };
  struct Group {
    std::vector<NodeId> sums;
    std::vector<NodeId> children;
    Eigen::MatrixXd weights;  // sums x children, normalized
    Eigen::MatrixXd scaled;   // batch x children, exp(child - row max)
    Eigen::MatrixXd mixed;    // batch x sums, scaled mixture values
  };
  struct LeafCache {
    std::vector<double> prob;     // categorical
    std::vector<double> log_prob;
    std::vector<double> log_cdf;
  };

  void forward_leaf(NodeId id, const QueryBatch& batch);
  void backward_leaf(NodeId id, std::span<double> grad);
  void forward_group(Group& g);
  void backward_group(Group& g, std::span<double> grad);

  const Circuit* circuit_;
  ParameterView view_;
  std::vector<double> theta_;
  std::vector<Step> steps_;
  std::vector<Group> groups_;
  std::vector<std::vector<LeafCache>> leaf_cache_;  // by node id, per factor
  std::vector<std::size_t> factor_offset_;           // by node id

  const QueryBatch* batch_ = nullptr;
  Eigen::MatrixXd values_;   // batch x nodes
  Eigen::MatrixXd adjoint_;  // batch x nodes
};

double log_density(const Circuit& circuit, std::span<const double> x);
double log_event_prob(const Circuit& circuit, const Event& event);
// P(f | g). Throws InvalidArgument when f and g contradict each other and
// ConditioningError when log P(g) < -700.
double conditional_prob(const Circuit& circuit, const Event& f, const Event& g);

// Ancestral top-down sampling; deterministic given the seed.
std::vector<std::vector<double>> sample(const Circuit& circuit, std::size_t n, std::uint64_t seed);

}  // namespace pcforge
