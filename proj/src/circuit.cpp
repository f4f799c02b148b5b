#include "pcforge/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "pcforge/errors.hpp"
#include "pcforge/math.hpp"

namespace pcforge {

Variable Variable::discrete(std::string name, int cardinality) {
  return Variable{std::move(name), VarKind::Discrete, cardinality};
}

Variable Variable::continuous(std::string name) {
  return Variable{std::move(name), VarKind::Continuous, 0};
}

VariableSchema::VariableSchema(std::vector<Variable> variables) : variables_(std::move(variables)) {
  std::set<std::string> seen;
  for (const auto& v : variables_) {
    if (v.name.empty()) throw InvalidArgument("variable name must be non-empty");
    if (v.name.find_first_of(" \t\r\n,=") != std::string::npos)
      throw InvalidArgument("variable name '" + v.name + "' contains whitespace, ',' or '='");
    if (!seen.insert(v.name).second) throw InvalidArgument("duplicate variable name '" + v.name + "'");
    if (v.is_discrete() && v.cardinality < 2)
      throw InvalidArgument("variable '" + v.name + "' needs cardinality >= 2");
  }
}

std::optional<VarIndex> VariableSchema::find(const std::string& name) const {
  for (VarIndex i = 0; i < variables_.size(); ++i)
    if (variables_[i].name == name) return i;
  return std::nullopt;
}

VarIndex VariableSchema::index_of(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw InvalidArgument("unknown variable '" + name + "'");
}

bool VariableSchema::all_discrete() const {
  return std::all_of(variables_.begin(), variables_.end(), [](const Variable& v) { return v.is_discrete(); });
}

const std::vector<NodeId>& Node::children() const {
  static const std::vector<NodeId> none;
  if (const auto* s = std::get_if<SumNode>(&kind)) return s->children;
  if (const auto* p = std::get_if<ProductNode>(&kind)) return p->children;
  return none;
}

Circuit::Circuit(VariableSchema schema, std::vector<Node> nodes, NodeId root)
    : schema_(std::move(schema)), nodes_(std::move(nodes)), root_(root) {}

void Circuit::set_root(NodeId id) {
  if (id >= nodes_.size()) throw InvalidArgument("root id out of range");
  root_ = id;
}

namespace {

Scope union_of_children(const std::vector<Node>& nodes, const std::vector<NodeId>& children) {
  Scope out;
  for (NodeId c : children) {
    if (c >= nodes.size()) throw InvalidArgument("child id " + std::to_string(c) + " does not exist");
    const Scope& s = nodes[c].scope;
    out.insert(out.end(), s.begin(), s.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

NodeId Circuit::add_leaf(std::vector<Factor> factors) {
  Scope scope;
  for (const auto& f : factors) scope.push_back(f.variable);
  std::sort(scope.begin(), scope.end());
  scope.erase(std::unique(scope.begin(), scope.end()), scope.end());
  nodes_.push_back(Node{LeafNode{std::move(factors)}, std::move(scope)});
  return nodes_.size() - 1;
}

NodeId Circuit::add_product(std::vector<NodeId> children) {
  Scope scope = union_of_children(nodes_, children);
  nodes_.push_back(Node{ProductNode{std::move(children)}, std::move(scope)});
  return nodes_.size() - 1;
}

NodeId Circuit::add_sum(std::vector<NodeId> children, std::vector<double> log_weights) {
  if (children.size() != log_weights.size())
    throw InvalidArgument("sum node needs one log-weight per child");
  Scope scope = union_of_children(nodes_, children);
  nodes_.push_back(Node{SumNode{std::move(children), std::move(log_weights)}, std::move(scope)});
  return nodes_.size() - 1;
}

NodeId Circuit::add_sum(std::vector<NodeId> children) {
  std::vector<double> zeros(children.size(), 0.0);
  return add_sum(std::move(children), std::move(zeros));
}

std::size_t Circuit::parameter_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) {
    if (const auto* s = std::get_if<SumNode>(&node.kind)) {
      n += s->log_weights.size();
    } else if (const auto* l = std::get_if<LeafNode>(&node.kind)) {
      for (const auto& f : l->factors) {
        if (const auto* c = std::get_if<Categorical>(&f.distribution))
          n += c->logits.size();
        else
          n += 2;
      }
    }
  }
  return n;
}

std::vector<NodeId> topological_order(const Circuit& circuit) {
  const auto& nodes = circuit.nodes();
  if (circuit.root() >= nodes.size()) throw InvalidArgument("circuit has no valid root");
  enum Mark : unsigned char { kNew, kOpen, kDone };
  std::vector<Mark> mark(nodes.size(), kNew);
  std::vector<NodeId> order;
  order.reserve(nodes.size());
  // Iterative DFS: (node, next child position).
  std::vector<std::pair<NodeId, std::size_t>> stack{{circuit.root(), 0}};
  mark[circuit.root()] = kOpen;
  while (!stack.empty()) {
    auto& [id, pos] = stack.back();
    const auto& ch = nodes[id].children();
    if (pos < ch.size()) {
      const NodeId c = ch[pos++];
      if (c >= nodes.size()) throw InvalidArgument("node " + std::to_string(id) + " has dangling child");
      if (mark[c] == kOpen) throw InvalidArgument("cycle through node " + std::to_string(c));
      if (mark[c] == kNew) {
        mark[c] = kOpen;
        stack.emplace_back(c, 0);
      }
    } else {
      mark[id] = kDone;
      order.push_back(id);
      stack.pop_back();
    }
  }
  return order;
}

namespace {

class StructureBuilder {
 public:
  StructureBuilder(const VariableSchema& schema, const StructureConfig& config)
      : schema_(schema), config_(config), rng_(config.seed), circuit_(schema) {}

  Circuit build() {
    Scope full(schema_.size());
    for (VarIndex i = 0; i < full.size(); ++i) full[i] = i;
    std::vector<NodeId> top;
    for (int r = 0; r < config_.replicas; ++r) {
      auto nodes = region(full, 0, true);
      top.insert(top.end(), nodes.begin(), nodes.end());
    }
    const NodeId root = circuit_.add_sum(top, sum_logits(top.size()));
    circuit_.set_root(root);
    return std::move(circuit_);
  }

 private:
  std::vector<NodeId> region(const Scope& scope, int level, bool top) {
    if (scope.size() == 1 || level == config_.depth) return leaves(scope);

    Scope shuffled = scope;
    std::shuffle(shuffled.begin(), shuffled.end(), rng_);
    const auto half = static_cast<std::ptrdiff_t>(shuffled.size() / 2);
    Scope left_scope(shuffled.begin(), shuffled.begin() + half);
    Scope right_scope(shuffled.begin() + half, shuffled.end());
    std::sort(left_scope.begin(), left_scope.end());
    std::sort(right_scope.begin(), right_scope.end());

    const auto left = region(left_scope, level + 1, false);
    const auto right = region(right_scope, level + 1, false);
    std::vector<NodeId> products;
    products.reserve(left.size() * right.size());
    for (NodeId l : left)
      for (NodeId r : right) products.push_back(circuit_.add_product({l, r}));
    if (top) return products;

    std::vector<NodeId> sums;
    for (int s = 0; s < config_.sums; ++s) sums.push_back(circuit_.add_sum(products, sum_logits(products.size())));
    return sums;
  }

  std::vector<NodeId> leaves(const Scope& scope) {
    std::vector<NodeId> out;
    for (int i = 0; i < config_.inputs; ++i) {
      std::vector<Factor> factors;
      for (VarIndex v : scope) factors.push_back(Factor{v, fresh_distribution(schema_[v])});
      out.push_back(circuit_.add_leaf(std::move(factors)));
    }
    return out;
  }

  LeafDistribution fresh_distribution(const Variable& var) {
    if (var.is_discrete()) {
      std::normal_distribution<double> noise(0.0, 0.1);
      Categorical c;
      c.logits.resize(static_cast<std::size_t>(var.cardinality));
      for (double& l : c.logits) l = noise(rng_);
      return c;
    }
    std::normal_distribution<double> mean(0.0, 1.0);
    return Gaussian{mean(rng_), 0.0};
  }

  std::vector<double> sum_logits(std::size_t n) {
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<double> out(n);
    for (double& l : out) l = noise(rng_);
    return out;
  }

  const VariableSchema& schema_;
  const StructureConfig& config_;
  std::mt19937_64 rng_;
  Circuit circuit_;
};

}  // namespace

Circuit build_random_structure(const VariableSchema& schema, const StructureConfig& config) {
  if (schema.empty()) throw InvalidArgument("cannot build a circuit over an empty schema");
  if (config.depth < 1 || config.inputs < 1 || config.sums < 1 || config.replicas < 1)
    throw InvalidArgument("structure counts D, I, S, R must all be >= 1");
  return StructureBuilder(schema, config).build();
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Smoothness: return "smoothness";
    case ViolationKind::Decomposability: return "decomposability";
    case ViolationKind::Acyclicity: return "acyclicity";
    case ViolationKind::Unreachable: return "unreachable";
    case ViolationKind::Normalization: return "normalization";
    case ViolationKind::Scope: return "scope";
    case ViolationKind::Reference: return "reference";
  }
  return "unknown";
}

namespace {

std::string scope_string(const Scope& s) {
  std::ostringstream out;
  out << '{';
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << '}';
  return out.str();
}

bool normalized(std::span<const double> logits) {
  for (double l : logits)
    if (!std::isfinite(l)) return false;
  double total = 0.0;
  for (double p : math::softmax(logits)) total += p;
  return std::abs(total - 1.0) <= 1e-12;
}

class Validator {
 public:
  explicit Validator(const Circuit& c) : c_(c), nodes_(c.nodes()) {}

  ValidationReport run() {
    if (nodes_.empty()) {
      add(ViolationKind::Reference, 0, "circuit has no nodes");
      return std::move(report_);
    }
    if (c_.root() >= nodes_.size()) {
      add(ViolationKind::Reference, c_.root(), "root id out of range");
      return std::move(report_);
    }
    bool references_ok = true;
    for (NodeId id = 0; id < nodes_.size(); ++id)
      for (NodeId ch : nodes_[id].children())
        if (ch >= nodes_.size()) {
          add(ViolationKind::Reference, id, "child id " + std::to_string(ch) + " out of range");
          references_ok = false;
        }
    if (references_ok) check_graph();
    for (NodeId id = 0; id < nodes_.size(); ++id) check_node(id, references_ok);

    Scope full(c_.schema().size());
    for (VarIndex i = 0; i < full.size(); ++i) full[i] = i;
    if (nodes_[c_.root()].scope != full)
      add(ViolationKind::Scope, c_.root(), "root scope " + scope_string(nodes_[c_.root()].scope) +
                                               " is not the full variable set");
    return std::move(report_);
  }

 private:
  void add(ViolationKind kind, NodeId id, std::string msg) {
    report_.violations.push_back(Violation{kind, id, std::move(msg)});
  }

  void check_graph() {
    // Colour-marking DFS from the root; reports back edges and unreachable nodes.
    enum Mark : unsigned char { kNew, kOpen, kDone };
    std::vector<Mark> mark(nodes_.size(), kNew);
    std::vector<std::pair<NodeId, std::size_t>> stack{{c_.root(), 0}};
    mark[c_.root()] = kOpen;
    while (!stack.empty()) {
      auto& [id, pos] = stack.back();
      const auto& ch = nodes_[id].children();
      if (pos < ch.size()) {
        const NodeId c = ch[pos++];
        if (mark[c] == kOpen) {
          add(ViolationKind::Acyclicity, id, "edge to " + std::to_string(c) + " closes a cycle");
        } else if (mark[c] == kNew) {
          mark[c] = kOpen;
          stack.emplace_back(c, 0);
        }
      } else {
        mark[id] = kDone;
        stack.pop_back();
      }
    }
    for (NodeId id = 0; id < nodes_.size(); ++id)
      if (mark[id] == kNew) add(ViolationKind::Unreachable, id, "node is not reachable from the root");
  }

  void check_node(NodeId id, bool references_ok) {
    const Node& node = nodes_[id];
    const auto& schema = c_.schema();
    if (!std::is_sorted(node.scope.begin(), node.scope.end()) ||
        std::adjacent_find(node.scope.begin(), node.scope.end()) != node.scope.end())
      add(ViolationKind::Scope, id, "scope is not a sorted set");
    for (VarIndex v : node.scope)
      if (v >= schema.size()) add(ViolationKind::Scope, id, "scope variable " + std::to_string(v) + " out of range");

    if (const auto* leaf = std::get_if<LeafNode>(&node.kind)) {
      check_leaf(id, node, *leaf);
      return;
    }
    const auto& children = node.children();
    if (children.empty()) add(ViolationKind::Scope, id, "inner node without children");
    if (!references_ok) return;

    if (const auto* sum = std::get_if<SumNode>(&node.kind)) {
      if (sum->log_weights.size() != children.size())
        add(ViolationKind::Normalization, id, "sum has " + std::to_string(children.size()) + " children but " +
                                                  std::to_string(sum->log_weights.size()) + " weights");
      else if (!children.empty() && !normalized(sum->log_weights))
        add(ViolationKind::Normalization, id, "sum weights are not a convex combination");
      for (NodeId ch : children)
        if (nodes_[ch].scope != node.scope)
          add(ViolationKind::Smoothness, id, "child " + std::to_string(ch) + " has scope " +
                                                 scope_string(nodes_[ch].scope) + ", sum has " +
                                                 scope_string(node.scope));
      return;
    }

    Scope seen;
    bool disjoint = true;
    for (NodeId ch : children) {
      for (VarIndex v : nodes_[ch].scope) {
        if (std::find(seen.begin(), seen.end(), v) != seen.end()) disjoint = false;
        seen.push_back(v);
      }
    }
    if (!disjoint) add(ViolationKind::Decomposability, id, "product children have overlapping scopes");
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    if (seen != node.scope)
      add(ViolationKind::Scope, id, "product scope " + scope_string(node.scope) + " differs from children union " +
                                        scope_string(seen));
  }

  void check_leaf(NodeId id, const Node& node, const LeafNode& leaf) {
    const auto& schema = c_.schema();
    Scope vars;
    for (const auto& f : leaf.factors) {
      vars.push_back(f.variable);
      if (f.variable >= schema.size()) continue;
      const Variable& var = schema[f.variable];
      if (const auto* cat = std::get_if<Categorical>(&f.distribution)) {
        if (!var.is_discrete() || static_cast<int>(cat->logits.size()) != var.cardinality)
          add(ViolationKind::Scope, id, "categorical factor does not match variable '" + var.name + "'");
        else if (!normalized(cat->logits))
          add(ViolationKind::Normalization, id, "categorical factor over '" + var.name + "' is not normalized");
      } else {
        const auto& g = std::get<Gaussian>(f.distribution);
        if (var.is_discrete()) add(ViolationKind::Scope, id, "gaussian factor on discrete variable '" + var.name + "'");
        if (!std::isfinite(g.mean) || !std::isfinite(g.log_std))
          add(ViolationKind::Normalization, id, "gaussian factor over '" + var.name + "' has non-finite parameters");
      }
    }
    std::sort(vars.begin(), vars.end());
    if (std::adjacent_find(vars.begin(), vars.end()) != vars.end())
      add(ViolationKind::Scope, id, "leaf has two factors for one variable");
    if (vars != node.scope) add(ViolationKind::Scope, id, "leaf factors do not match its scope");
    if (leaf.factors.empty()) add(ViolationKind::Scope, id, "leaf without factors");
  }

  const Circuit& c_;
  const std::vector<Node>& nodes_;
  ValidationReport report_;
};

}  // namespace

ValidationReport validate(const Circuit& circuit) { return Validator(circuit).run(); }

}  // namespace pcforge
