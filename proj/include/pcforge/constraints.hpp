#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pcforge/autodiff.hpp"
#include "pcforge/data.hpp"
#include "pcforge/inference.hpp"

namespace pcforge {

enum class ConstraintKind { Generalization, Privileged, CSI, ClassImbalance, Monotonic, Synergy, Preference };

std::string to_string(ConstraintKind kind);
// Equality kinds are penalized by sum |delta|, the others by sum max(0, delta)^2.
bool is_equality(ConstraintKind kind);

// P(f | g). An empty g is the always-true event.
struct ConditionalQuery {
  Event f;
  Event g;
  bool operator==(const ConditionalQuery&) const = default;
};

// Similar pairs: explicit (x, x') pairs, or k random coordinate
// permutations of every training row.
struct GeneralizationSpec {
  std::vector<PointPair> pairs;
  std::string pairs_path;  // provenance only; empty when pairs were given inline
  std::size_t permutations = 0;  // > 0 selects permutation pairs
  bool operator==(const GeneralizationSpec&) const = default;
};

struct PrivilegedSpec {
  std::vector<VarIndex> privileged;
  bool operator==(const PrivilegedSpec&) const = default;
};

// X_i independent of X_j given the Equals atoms of `context`.
struct CsiSpec {
  VarIndex i = 0;
  VarIndex j = 0;
  Event context;
  bool operator==(const CsiSpec&) const = default;
};

enum class Polarity { FalseNegative, FalsePositive };

struct ImbalanceSpec {
  VarIndex target = 0;
  Polarity polarity = Polarity::FalseNegative;
  double threshold = 0.0;
  bool operator==(const ImbalanceSpec&) const = default;
};

struct MonotonicSpec {
  VarIndex cause = 0;
  VarIndex effect = 0;
  int direction = +1;
  bool operator==(const MonotonicSpec&) const = default;
};

struct SynergySpec {
  VarIndex cause1 = 0;
  VarIndex cause2 = 0;
  VarIndex effect = 0;
  int direction = +1;
  bool operator==(const SynergySpec&) const = default;
};

// P(target = 1 | x_-target) = p for rows where `rule` holds.
struct PreferenceSpec {
  VarIndex target = 0;
  Event rule;
  double p = 0.0;
  bool operator==(const PreferenceSpec&) const = default;
};

using ConstraintBody =
    std::variant<GeneralizationSpec, PrivilegedSpec, CsiSpec, ImbalanceSpec, MonotonicSpec, SynergySpec, PreferenceSpec>;

enum class ContextSource { Data, Grid };
// CSI value enumeration: Reduced skips the last category of X_i and X_j
// (the complementary equalities are implied), Full takes every value pair.
enum class CsiValues { Reduced, Full };
// Cause value pairs (lo < hi) for monotonic and synergy groundings.
enum class CausePairs { All, Adjacent, NonAdjacent };

struct DomainSetSpec {
  double gamma_size = 1.0;   // budget = round(gamma_size * |D|)
  double gamma_noise = 0.0;  // fraction of groundings re-anchored on random rows
  ContextSource context = ContextSource::Data;
  CsiValues csi_values = CsiValues::Reduced;
  CausePairs cause_pairs = CausePairs::All;
  bool operator==(const DomainSetSpec&) const = default;
};

inline constexpr double kDefaultMargin = 0.01;
inline constexpr std::size_t kContextGridCap = 4096;

struct Constraint {
  ConstraintBody body;
  DomainSetSpec selector;
  double epsilon = 0.0;

  ConstraintKind kind() const { return static_cast<ConstraintKind>(body.index()); }
  bool operator==(const Constraint&) const = default;
};

// Throws InvalidArgument when variables are out of the schema, the margin
// does not match the kind, or kind-specific fields are out of range.
void check_constraint(const Constraint& c, const VariableSchema& schema);

// Anchor of one grounding: the data row (or pair) it came from plus the
// kind-specific values it was instantiated with.
struct GroundingKey {
  std::vector<double> x;
  std::vector<double> x_prime;
  VarIndex variable = 0;  // privileged: the queried variable
  double v = 0.0;         // monotonic / synergy threshold
  double lo = 0.0, hi = 0.0, lo2 = 0.0, hi2 = 0.0;
  int csi_direction = 0;  // 0: P(x_i | ..), 1: P(x_j | ..)
  bool operator==(const GroundingKey&) const = default;
};

struct ViolationTerm {
  double sign = 1.0;
  ConditionalQuery query;
  std::optional<Event> joint;  // f AND g; nullopt flags a contradictory query (constant 0)
  bool operator==(const ViolationTerm&) const = default;
};

// delta = sum_k sign_k P(f_k | g_k) + constant + epsilon.
struct GroundedViolation {
  ConstraintKind kind = ConstraintKind::Generalization;
  std::vector<ViolationTerm> terms;
  double constant = 0.0;
  double epsilon = 0.0;
  GroundingKey key;
  bool operator==(const GroundedViolation&) const = default;
};

struct GroundedConstraint {
  Constraint constraint;
  std::vector<GroundedViolation> groundings;
};

// Builds one grounding of `c` from its key.
GroundedViolation instantiate(const Constraint& c, const GroundingKey& key, std::size_t num_variables);

// Materializes the domain set of `c` on `data`, applies gamma_noise and
// truncates to the budget. Deterministic given the seed.
std::vector<GroundedViolation> ground(const Constraint& c, const VariableSchema& schema, const Dataset& data,
                                      std::uint64_t seed);
GroundedConstraint ground_constraint(const Constraint& c, const VariableSchema& schema, const Dataset& data,
                                     std::uint64_t seed);

// Re-anchors floor(gamma_noise * n) uniformly chosen groundings on uniformly
// drawn rows of `data`.
std::vector<GroundedViolation> inject_noise(const Constraint& c, std::vector<GroundedViolation> grounded,
                                            double gamma_noise, const Dataset& data, std::uint64_t seed);

// Same, with the union of all constraints' groundings as one domain set.
std::vector<GroundedConstraint> inject_noise(std::vector<GroundedConstraint> grounded, double gamma_noise,
                                             const Dataset& data, std::uint64_t seed);

double violation_value(const Circuit& circuit, const GroundedViolation& v);
std::vector<double> violation_values(const Circuit& circuit, std::span<const GroundedViolation> grounded);
// zeta from precomputed deltas.
double penalty_from_deltas(ConstraintKind kind, std::span<const double> deltas);
double penalty(const Circuit& circuit, const Constraint& c, std::span<const GroundedViolation> grounded);
double total_violation(const Circuit& circuit, std::span<const GroundedConstraint> constraints);

// Records deltas and penalties of a set of grounded constraints on a
// CircuitTape. Construct before tape.evaluate() (it requests every query),
// then call the accessors afterwards.
class ViolationRecorder {
 public:
  ViolationRecorder(CircuitTape& tape, std::span<const GroundedConstraint> constraints);

  Var delta(std::size_t constraint, std::size_t grounding);
  Var penalty(std::size_t constraint);
  Var total();

 private:
  struct TermHandles {
    CircuitTape::Handle joint;
    std::optional<CircuitTape::Handle> given;
  };
  CircuitTape* tape_;
  std::span<const GroundedConstraint> constraints_;
  std::vector<std::vector<std::vector<std::optional<TermHandles>>>> handles_;
};

// One line per grounding: kind, epsilon, constant and signed queries.
std::string format_event(const Event& e, const VariableSchema& schema);
std::string format_grounded(const GroundedViolation& v, const VariableSchema& schema);
std::string dump_grounded(std::span<const GroundedConstraint> constraints, const VariableSchema& schema);

}  // namespace pcforge
