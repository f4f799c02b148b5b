#include "pcforge/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "pcforge/errors.hpp"
#include "pcforge/math.hpp"

namespace pcforge {

Event::Event(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
  std::sort(atoms_.begin(), atoms_.end(), [](const Atom& a, const Atom& b) { return a.variable < b.variable; });
  for (std::size_t i = 1; i < atoms_.size(); ++i)
    if (atoms_[i].variable == atoms_[i - 1].variable)
      throw InvalidArgument("event has two atoms on variable " + std::to_string(atoms_[i].variable));
  std::erase_if(atoms_, [](const Atom& a) { return a.relation == Relation::True; });
}

Event Event::point(std::span<const double> row) {
  Event e;
  e.atoms_.reserve(row.size());
  for (VarIndex v = 0; v < row.size(); ++v) e.atoms_.push_back(Atom::equals(v, row[v]));
  return e;
}

const Atom* Event::find(VarIndex v) const {
  auto it = std::lower_bound(atoms_.begin(), atoms_.end(), v,
                             [](const Atom& a, VarIndex var) { return a.variable < var; });
  return (it != atoms_.end() && it->variable == v) ? &*it : nullptr;
}

std::optional<Event> conjoin(const Event& f, const Event& g) {
  std::vector<Atom> out;
  auto fi = f.atoms().begin(), fe = f.atoms().end();
  auto gi = g.atoms().begin(), ge = g.atoms().end();
  while (fi != fe || gi != ge) {
    if (gi == ge || (fi != fe && fi->variable < gi->variable)) {
      out.push_back(*fi++);
    } else if (fi == fe || gi->variable < fi->variable) {
      out.push_back(*gi++);
    } else {
      const Atom& a = *fi++;
      const Atom& b = *gi++;
      if (a.relation == Relation::Equals && b.relation == Relation::Equals) {
        if (a.value != b.value) return std::nullopt;
        out.push_back(a);
      } else if (a.relation == Relation::Equals || b.relation == Relation::Equals) {
        const Atom& eq = a.relation == Relation::Equals ? a : b;
        const Atom& le = a.relation == Relation::Equals ? b : a;
        if (eq.value > le.value) return std::nullopt;
        out.push_back(eq);
      } else {
        out.push_back(a.value <= b.value ? a : b);
      }
    }
  }
  return Event(std::move(out));
}

void check_event(const Event& event, const VariableSchema& schema) {
  for (const Atom& a : event.atoms()) {
    if (a.variable >= schema.size())
      throw InvalidArgument("atom on unknown variable index " + std::to_string(a.variable));
    const Variable& var = schema[a.variable];
    if (!std::isfinite(a.value)) throw InvalidArgument("non-finite value for variable '" + var.name + "'");
    if (var.is_discrete()) {
      if (a.value != std::floor(a.value) || a.value < 0 || a.value >= var.cardinality)
        throw InvalidArgument("value " + std::to_string(a.value) + " out of range for variable '" + var.name + "'");
    }
  }
}

void check_row(std::span<const double> row, const VariableSchema& schema) {
  if (row.size() != schema.size())
    throw InvalidArgument("assignment has " + std::to_string(row.size()) + " values, schema has " +
                          std::to_string(schema.size()) + " variables");
  check_event(Event::point(row), schema);
}

Event Assignment::to_event() const {
  std::vector<Atom> atoms;
  for (VarIndex v = 0; v < values.size(); ++v)
    if (values[v]) atoms.push_back(Atom::equals(v, *values[v]));
  return Event(std::move(atoms));
}

std::size_t QueryBatch::add(const Event& event) {
  relation_.resize(relation_.size() + num_vars_, Relation::True);
  value_.resize(value_.size() + num_vars_, 0.0);
  const std::size_t base = size_ * num_vars_;
  for (const Atom& a : event.atoms()) {
    if (a.variable >= num_vars_) throw InvalidArgument("atom variable out of range for this batch");
    relation_[base + a.variable] = a.relation;
    value_[base + a.variable] = a.value;
  }
  return size_++;
}

std::size_t QueryBatch::add_point(std::span<const double> row) {
  if (row.size() != num_vars_) throw InvalidArgument("row width does not match the batch");
  relation_.insert(relation_.end(), num_vars_, Relation::Equals);
  value_.insert(value_.end(), row.begin(), row.end());
  return size_++;
}

// ---------------------------------------------------------------------------
// Evaluator

Evaluator::Evaluator(const Circuit& circuit) : circuit_(&circuit), view_(circuit) {
  const auto order = topological_order(circuit);
  const auto& nodes = circuit.nodes();

  std::vector<std::size_t> height(nodes.size(), 0);
  for (NodeId id : order)
    for (NodeId c : nodes[id].children()) height[id] = std::max(height[id], height[c] + 1);

  std::vector<NodeId> sorted = order;
  std::sort(sorted.begin(), sorted.end(), [&](NodeId a, NodeId b) {
    return height[a] != height[b] ? height[a] < height[b] : a < b;
  });

  // Group sums of equal height that share the exact same child list.
  std::map<std::vector<NodeId>, std::size_t> open_groups;
  std::size_t current_height = 0;
  for (NodeId id : sorted) {
    if (height[id] != current_height) {
      open_groups.clear();
      current_height = height[id];
    }
    const Node& node = nodes[id];
    if (node.is_leaf()) {
      steps_.push_back({Step::Leaf, id});
    } else if (node.is_product()) {
      steps_.push_back({Step::Product, id});
    } else {
      const auto& children = node.children();
      auto it = open_groups.find(children);
      if (it == open_groups.end()) {
        it = open_groups.emplace(children, groups_.size()).first;
        groups_.push_back(Group{{}, children, {}, {}, {}});
        steps_.push_back({Step::SumGroup, it->second});
      }
      groups_[it->second].sums.push_back(id);
    }
  }
  leaf_cache_.resize(nodes.size());
  set_parameters(view_.gather(circuit));
}

void Evaluator::set_parameters(std::span<const double> theta) {
  if (theta.size() != view_.size()) throw InvalidArgument("parameter vector has the wrong length");
  theta_.assign(theta.begin(), theta.end());
  for (auto& g : groups_) {
    const auto n_children = static_cast<Eigen::Index>(g.children.size());
    g.weights.resize(static_cast<Eigen::Index>(g.sums.size()), n_children);
    for (std::size_t s = 0; s < g.sums.size(); ++s) {
      const auto probs = math::softmax(std::span(theta_).subspan(view_.offset(g.sums[s]), g.children.size()));
      for (Eigen::Index j = 0; j < n_children; ++j) g.weights(static_cast<Eigen::Index>(s), j) = probs[j];
    }
  }
  for (const auto& step : steps_) {
    if (step.kind != Step::Leaf) continue;
    const auto& leaf = std::get<LeafNode>(circuit_->node(step.index).kind);
    auto& cache = leaf_cache_[step.index];
    cache.resize(leaf.factors.size());
    std::size_t off = view_.offset(step.index);
    for (std::size_t f = 0; f < leaf.factors.size(); ++f) {
      if (const auto* cat = std::get_if<Categorical>(&leaf.factors[f].distribution)) {
        const auto logits = std::span(theta_).subspan(off, cat->logits.size());
        cache[f].log_prob = math::log_softmax(logits);
        cache[f].prob = math::softmax(logits);
        cache[f].log_cdf.resize(logits.size());
        double acc = math::kNegInf;
        for (std::size_t k = 0; k < logits.size(); ++k) {
          acc = math::log_add_exp(acc, cache[f].log_prob[k]);
          cache[f].log_cdf[k] = acc;
        }
        cache[f].log_cdf.back() = 0.0;
        off += logits.size();
      } else {
        off += 2;
      }
    }
  }
}

void Evaluator::forward_leaf(NodeId id, const QueryBatch& batch) {
  const auto& leaf = std::get<LeafNode>(circuit_->node(id).kind);
  const auto& cache = leaf_cache_[id];
  const std::size_t off = view_.offset(id);
  auto out = values_.col(static_cast<Eigen::Index>(id));
  out.setZero();
  std::size_t param = off;
  for (std::size_t f = 0; f < leaf.factors.size(); ++f) {
    const VarIndex v = leaf.factors[f].variable;
    if (std::holds_alternative<Categorical>(leaf.factors[f].distribution)) {
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Relation r = batch.relation(v, b);
        if (r == Relation::True) continue;
        const auto k = static_cast<std::size_t>(batch.value(v, b));
        out(static_cast<Eigen::Index>(b)) += r == Relation::Equals ? cache[f].log_prob[k] : cache[f].log_cdf[k];
      }
      param += cache[f].prob.size();
    } else {
      const double mean = theta_[param];
      const double log_std = theta_[param + 1];
      const double inv_std = std::exp(-log_std);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Relation r = batch.relation(v, b);
        if (r == Relation::True) continue;
        const double z = (batch.value(v, b) - mean) * inv_std;
        out(static_cast<Eigen::Index>(b)) +=
            r == Relation::Equals ? math::normal_log_pdf(z) - log_std : math::normal_log_cdf(z);
      }
      param += 2;
    }
  }
}

void Evaluator::forward_group(Group& g) {
  const Eigen::Index batch = values_.rows();
  const auto n_children = static_cast<Eigen::Index>(g.children.size());
  g.scaled.resize(batch, n_children);
  for (Eigen::Index j = 0; j < n_children; ++j)
    g.scaled.col(j) = values_.col(static_cast<Eigen::Index>(g.children[static_cast<std::size_t>(j)]));
  Eigen::VectorXd shift = g.scaled.rowwise().maxCoeff();
  for (Eigen::Index b = 0; b < batch; ++b)
    if (!std::isfinite(shift(b))) shift(b) = 0.0;
  g.scaled.colwise() -= shift;
  g.scaled = g.scaled.array().exp();
  g.mixed.noalias() = g.scaled * g.weights.transpose();
  for (std::size_t s = 0; s < g.sums.size(); ++s)
    values_.col(static_cast<Eigen::Index>(g.sums[s])) =
        g.mixed.col(static_cast<Eigen::Index>(s)).array().log() + shift.array();
}

std::vector<double> Evaluator::forward(const QueryBatch& batch) {
  if (batch.num_variables() != circuit_->schema().size())
    throw InvalidArgument("query batch does not match the circuit schema");
  batch_ = &batch;
  values_.resize(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(circuit_->size()));
  for (const auto& step : steps_) {
    switch (step.kind) {
      case Step::Leaf:
        forward_leaf(step.index, batch);
        break;
      case Step::Product: {
        const auto& ch = circuit_->node(step.index).children();
        auto out = values_.col(static_cast<Eigen::Index>(step.index));
        out = values_.col(static_cast<Eigen::Index>(ch[0]));
        for (std::size_t i = 1; i < ch.size(); ++i) out += values_.col(static_cast<Eigen::Index>(ch[i]));
        break;
      }
      case Step::SumGroup:
        forward_group(groups_[step.index]);
        break;
    }
  }
  const auto root = values_.col(static_cast<Eigen::Index>(circuit_->root()));
  return std::vector<double>(root.data(), root.data() + root.size());
}

void Evaluator::backward_leaf(NodeId id, std::span<double> grad) {
  const auto& leaf = std::get<LeafNode>(circuit_->node(id).kind);
  const auto& cache = leaf_cache_[id];
  const auto adj = adjoint_.col(static_cast<Eigen::Index>(id));
  const QueryBatch& batch = *batch_;
  std::size_t param = view_.offset(id);
  for (std::size_t f = 0; f < leaf.factors.size(); ++f) {
    const VarIndex v = leaf.factors[f].variable;
    if (std::holds_alternative<Categorical>(leaf.factors[f].distribution)) {
      const auto& p = cache[f].prob;
      double total = 0.0;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const double a = adj(static_cast<Eigen::Index>(b));
        const Relation r = batch.relation(v, b);
        if (a == 0.0 || r == Relation::True) continue;
        const auto k = static_cast<std::size_t>(batch.value(v, b));
        total += a;
        if (r == Relation::Equals) {
          grad[param + k] += a;
        } else {
          const double scale = a * std::exp(-cache[f].log_cdf[k]);
          for (std::size_t j = 0; j <= k; ++j) grad[param + j] += scale * p[j];
        }
      }
      if (total != 0.0)
        for (std::size_t j = 0; j < p.size(); ++j) grad[param + j] -= total * p[j];
      param += p.size();
    } else {
      const double mean = theta_[param];
      const double log_std = theta_[param + 1];
      const double inv_std = std::exp(-log_std);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const double a = adj(static_cast<Eigen::Index>(b));
        const Relation r = batch.relation(v, b);
        if (a == 0.0 || r == Relation::True) continue;
        const double z = (batch.value(v, b) - mean) * inv_std;
        if (r == Relation::Equals) {
          grad[param] += a * z * inv_std;
          grad[param + 1] += a * (z * z - 1.0);
        } else {
          const double h = math::normal_hazard(z);
          grad[param] -= a * h * inv_std;
          grad[param + 1] -= a * h * z;
        }
      }
      param += 2;
    }
  }
}

void Evaluator::backward_group(Group& g, std::span<double> grad) {
  const Eigen::Index batch = values_.rows();
  const auto n_sums = static_cast<Eigen::Index>(g.sums.size());
  Eigen::MatrixXd q(batch, n_sums);
  bool any = false;
  for (Eigen::Index s = 0; s < n_sums; ++s) {
    const auto adj = adjoint_.col(static_cast<Eigen::Index>(g.sums[static_cast<std::size_t>(s)]));
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double m = g.mixed(b, s);
      q(b, s) = (adj(b) == 0.0 || m == 0.0) ? 0.0 : adj(b) / m;
      any = any || q(b, s) != 0.0;
    }
  }
  if (!any) return;

  const Eigen::MatrixXd d_scaled = q * g.weights;
  for (std::size_t j = 0; j < g.children.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    adjoint_.col(static_cast<Eigen::Index>(g.children[j])).array() +=
        d_scaled.col(jj).array() * g.scaled.col(jj).array();
  }
  const Eigen::MatrixXd d_weights = q.transpose() * g.scaled;
  const auto n_children = d_weights.cols();
  for (Eigen::Index s = 0; s < n_sums; ++s) {
    // Softmax Jacobian, centred on the first entry so equal inputs give an exact zero.
    const double pivot = d_weights(s, 0);
    double mean = 0.0;
    for (Eigen::Index j = 0; j < n_children; ++j) mean += g.weights(s, j) * (d_weights(s, j) - pivot);
    const std::size_t off = view_.offset(g.sums[static_cast<std::size_t>(s)]);
    for (Eigen::Index j = 0; j < n_children; ++j)
      grad[off + static_cast<std::size_t>(j)] += g.weights(s, j) * ((d_weights(s, j) - pivot) - mean);
  }
}

void Evaluator::backward(std::span<const double> root_adjoint, std::span<double> grad) {
  if (batch_ == nullptr) throw InvalidArgument("backward called before forward");
  if (root_adjoint.size() != static_cast<std::size_t>(values_.rows()))
    throw InvalidArgument("adjoint count does not match the last forward batch");
  if (grad.size() != view_.size()) throw InvalidArgument("gradient buffer has the wrong length");
  adjoint_.setZero(values_.rows(), values_.cols());
  auto root = adjoint_.col(static_cast<Eigen::Index>(circuit_->root()));
  for (std::size_t b = 0; b < root_adjoint.size(); ++b) root(static_cast<Eigen::Index>(b)) = root_adjoint[b];

  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    switch (it->kind) {
      case Step::Leaf:
        backward_leaf(it->index, grad);
        break;
      case Step::Product: {
        const auto adj = adjoint_.col(static_cast<Eigen::Index>(it->index));
        for (NodeId c : circuit_->node(it->index).children()) adjoint_.col(static_cast<Eigen::Index>(c)) += adj;
        break;
      }
      case Step::SumGroup:
        backward_group(groups_[it->index], grad);
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Convenience queries

double log_density(const Circuit& circuit, std::span<const double> x) {
  check_row(x, circuit.schema());
  Evaluator eval(circuit);
  QueryBatch batch(circuit.schema().size());
  batch.add_point(x);
  return eval.forward(batch)[0];
}

double log_event_prob(const Circuit& circuit, const Event& event) {
  check_event(event, circuit.schema());
  Evaluator eval(circuit);
  QueryBatch batch(circuit.schema().size());
  batch.add(event);
  return eval.forward(batch)[0];
}

double conditional_prob(const Circuit& circuit, const Event& f, const Event& g) {
  check_event(f, circuit.schema());
  check_event(g, circuit.schema());
  const auto joint = conjoin(f, g);
  if (!joint) throw InvalidArgument("conditional query has contradictory atoms in f and g");
  Evaluator eval(circuit);
  QueryBatch batch(circuit.schema().size());
  batch.add(*joint);
  batch.add(g);
  const auto logs = eval.forward(batch);
  if (!(logs[1] >= math::kLogUnderflow)) throw ConditioningError("conditioning event has probability below exp(-700)");
  return std::min(1.0, std::exp(logs[0] - logs[1]));
}

std::vector<std::vector<double>> sample(const Circuit& circuit, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample count must be >= 1");
  const auto& nodes = circuit.nodes();
  // Cumulative mixture weights per sum and categorical factor.
  std::vector<std::vector<double>> sum_cdf(nodes.size());
  for (NodeId id = 0; id < nodes.size(); ++id) {
    if (const auto* s = std::get_if<SumNode>(&nodes[id].kind)) {
      auto p = math::softmax(s->log_weights);
      for (std::size_t j = 1; j < p.size(); ++j) p[j] += p[j - 1];
      sum_cdf[id] = std::move(p);
    }
  }
  auto pick = [](const std::vector<double>& cdf, double u) {
    const double target = u * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out(n, std::vector<double>(circuit.schema().size(), 0.0));
  std::vector<NodeId> stack;
  for (auto& row : out) {
    stack.assign(1, circuit.root());
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      const Node& node = nodes[id];
      if (const auto* s = std::get_if<SumNode>(&node.kind)) {
        stack.push_back(s->children[pick(sum_cdf[id], uniform(rng))]);
      } else if (const auto* p = std::get_if<ProductNode>(&node.kind)) {
        stack.insert(stack.end(), p->children.rbegin(), p->children.rend());
      } else {
        for (const auto& f : std::get<LeafNode>(node.kind).factors) {
          if (const auto* c = std::get_if<Categorical>(&f.distribution)) {
            auto cdf = math::softmax(c->logits);
            for (std::size_t j = 1; j < cdf.size(); ++j) cdf[j] += cdf[j - 1];
            row[f.variable] = static_cast<double>(pick(cdf, uniform(rng)));
          } else {
            const auto& g = std::get<Gaussian>(f.distribution);
            row[f.variable] = g.mean + std::exp(g.log_std) * normal(rng);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace pcforge
