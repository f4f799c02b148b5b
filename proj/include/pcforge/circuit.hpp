#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace pcforge {

using VarIndex = std::size_t;
using NodeId = std::size_t;

// Sorted, duplicate-free set of variable indices.
using Scope = std::vector<VarIndex>;

enum class VarKind { Discrete, Continuous };

struct Variable {
  std::string name;
  VarKind kind = VarKind::Discrete;
  int cardinality = 0;  // 0 for continuous variables

  static Variable discrete(std::string name, int cardinality);
  static Variable continuous(std::string name);

  bool is_discrete() const { return kind == VarKind::Discrete; }
  bool operator==(const Variable&) const = default;
};

class VariableSchema {
 public:
  VariableSchema() = default;
  // Throws InvalidArgument on empty/duplicate names, names containing
  // whitespace, ',' or '=', or cardinality < 2.
  explicit VariableSchema(std::vector<Variable> variables);

  std::size_t size() const { return variables_.size(); }
  bool empty() const { return variables_.empty(); }
  const Variable& operator[](VarIndex i) const { return variables_[i]; }
  const std::vector<Variable>& variables() const { return variables_; }

  std::optional<VarIndex> find(const std::string& name) const;
  // Throws InvalidArgument naming the unknown variable.
  VarIndex index_of(const std::string& name) const;

  bool all_discrete() const;

  bool operator==(const VariableSchema&) const = default;

 private:
  std::vector<Variable> variables_;
};

struct Categorical {
  std::vector<double> logits;
  bool operator==(const Categorical&) const = default;
};

struct Gaussian {
  double mean = 0.0;
  double log_std = 0.0;
  bool operator==(const Gaussian&) const = default;
};

using LeafDistribution = std::variant<Categorical, Gaussian>;

struct Factor {
  VarIndex variable = 0;
  LeafDistribution distribution;
  bool operator==(const Factor&) const = default;
};

struct SumNode {
  std::vector<NodeId> children;
  std::vector<double> log_weights;  // unnormalized; softmax gives the mixture weights
  bool operator==(const SumNode&) const = default;
};

struct ProductNode {
  std::vector<NodeId> children;
  bool operator==(const ProductNode&) const = default;
};

// Fully factorized leaf: one univariate distribution per scope variable.
struct LeafNode {
  std::vector<Factor> factors;
  bool operator==(const LeafNode&) const = default;
};

struct Node {
  std::variant<SumNode, ProductNode, LeafNode> kind;
  Scope scope;

  bool is_sum() const { return std::holds_alternative<SumNode>(kind); }
  bool is_product() const { return std::holds_alternative<ProductNode>(kind); }
  bool is_leaf() const { return std::holds_alternative<LeafNode>(kind); }
  const std::vector<NodeId>& children() const;

  bool operator==(const Node&) const = default;
};

// Rooted DAG of sum, product and leaf nodes. Nodes are addressed by their
// position in the node store. The add_* helpers compute scopes as the union
// of child scopes and never check smoothness or decomposability, so invalid
// circuits can be assembled on purpose; use validate() to check them.
class Circuit {
 public:
  Circuit() = default;
  explicit Circuit(VariableSchema schema) : schema_(std::move(schema)) {}
  Circuit(VariableSchema schema, std::vector<Node> nodes, NodeId root);

  const VariableSchema& schema() const { return schema_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& mutable_nodes() { return nodes_; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  Node& mutable_node(NodeId id) { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  NodeId root() const { return root_; }
  void set_root(NodeId id);

  NodeId add_leaf(std::vector<Factor> factors);
  NodeId add_product(std::vector<NodeId> children);
  NodeId add_sum(std::vector<NodeId> children, std::vector<double> log_weights);
  // Sum with all-zero logits (uniform mixture).
  NodeId add_sum(std::vector<NodeId> children);

  // Total number of free parameters (sum logits, categorical logits,
  // Gaussian means and log-stds).
  std::size_t parameter_count() const;

  bool operator==(const Circuit&) const = default;

 private:
  VariableSchema schema_;
  std::vector<Node> nodes_;
  NodeId root_ = 0;
};

// Node ids ordered so that every child precedes its parents. Only nodes
// reachable from the root are included. Throws InvalidArgument on a cycle
// or a dangling child id.
std::vector<NodeId> topological_order(const Circuit& circuit);

// Random-tensorized region-graph parameters: depth, leaves per terminal
// region, sums per internal region, replicas.
struct StructureConfig {
  int depth = 2;
  int inputs = 2;
  int sums = 2;
  int replicas = 1;
  std::uint64_t seed = 0;
};

// Builds R replicas of a random binary region tree over the full scope.
// Regions are split into balanced random halves until depth D or a single
// variable remains. Terminal regions carry I fully factorized leaves,
// every partition carries the cross product of its child regions' nodes as
// products, and internal (non-top) regions carry S sums over those
// products. A single root sum mixes the top products of all replicas.
Circuit build_random_structure(const VariableSchema& schema, const StructureConfig& config);

enum class ViolationKind {
  Smoothness,
  Decomposability,
  Acyclicity,
  Unreachable,
  Normalization,
  Scope,
  Reference,
};

struct Violation {
  ViolationKind kind;
  NodeId node;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

std::string to_string(ViolationKind kind);

ValidationReport validate(const Circuit& circuit);

// Checkpoint persistence; see docs/FORMATS.md for the file layout.
void save(const Circuit& circuit, const std::filesystem::path& path);
Circuit load(const std::filesystem::path& path);
// Also rejects a checkpoint whose schema differs from `expected`.
Circuit load(const std::filesystem::path& path, const VariableSchema& expected);
std::string serialize(const Circuit& circuit);
Circuit deserialize(const std::string& text);

}  // namespace pcforge
