#pragma once

// Shared oracles for the test suites: a naive recursive circuit evaluator,
// brute-force enumeration over discrete domains, and random circuits.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pcforge/circuit.hpp"
#include "pcforge/inference.hpp"

namespace testing {

using namespace pcforge;

inline VariableSchema binary_schema(std::size_t n) {
  std::vector<Variable> vars;
  for (std::size_t i = 0; i < n; ++i) vars.push_back(Variable::discrete("X" + std::to_string(i), 2));
  return VariableSchema(std::move(vars));
}

// Every complete assignment of an all-discrete schema, last variable fastest.
inline std::vector<std::vector<double>> enumerate(const VariableSchema& schema) {
  std::size_t total = 1;
  for (const auto& v : schema.variables()) total *= static_cast<std::size_t>(v.cardinality);
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < total; ++k) {
    std::vector<double> row(schema.size());
    std::size_t rest = k;
    for (std::size_t v = schema.size(); v-- > 0;) {
      const auto card = static_cast<std::size_t>(schema[v].cardinality);
      row[v] = static_cast<double>(rest % card);
      rest /= card;
    }
    out.push_back(std::move(row));
  }
  return out;
}

// Direct linear-space recursion over the node graph, no batching, no log
// tricks. Only meaningful for small circuits.
inline double naive_value(const Circuit& c, NodeId id, const std::vector<double>& x, std::vector<double>& memo) {
  if (!std::isnan(memo[id])) return memo[id];
  const Node& n = c.node(id);
  if (const auto* s = std::get_if<SumNode>(&n.kind)) {
    double z = 0.0;
    for (double w : s->log_weights) z += std::exp(w);
    double v = 0.0;
    for (std::size_t k = 0; k < s->children.size(); ++k)
      v += std::exp(s->log_weights[k]) / z * naive_value(c, s->children[k], x, memo);
    return memo[id] = v;
  }
  if (const auto* p = std::get_if<ProductNode>(&n.kind)) {
    double v = 1.0;
    for (NodeId ch : p->children) v *= naive_value(c, ch, x, memo);
    return memo[id] = v;
  }
  double v = 1.0;
  for (const auto& f : std::get<LeafNode>(n.kind).factors) {
    const double xv = x[f.variable];
    if (const auto* cat = std::get_if<Categorical>(&f.distribution)) {
      double z = 0.0;
      for (double l : cat->logits) z += std::exp(l);
      v *= std::exp(cat->logits[static_cast<std::size_t>(xv)]) / z;
    } else {
      const auto& g = std::get<Gaussian>(f.distribution);
      const double sd = std::exp(g.log_std);
      const double z = (xv - g.mean) / sd;
      v *= std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
    }
  }
  return memo[id] = v;
}

inline double naive_density(const Circuit& c, const std::vector<double>& x) {
  std::vector<double> memo(c.size(), std::nan(""));
  return naive_value(c, c.root(), x, memo);
}

inline bool satisfies(const std::vector<double>& x, const Event& e) {
  for (const auto& a : e.atoms()) {
    if (a.relation == Relation::Equals && x[a.variable] != a.value) return false;
    if (a.relation == Relation::AtMost && x[a.variable] > a.value) return false;
  }
  return true;
}

// P(e) by summing the naive density over every satisfying assignment.
inline double brute_prob(const Circuit& c, const Event& e) {
  double p = 0.0;
  for (const auto& x : enumerate(c.schema()))
    if (satisfies(x, e)) p += naive_density(c, x);
  return p;
}

// Overwrites every parameter with N(0, scale) draws.
inline void randomize(Circuit& c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& node : c.mutable_nodes()) {
    if (auto* s = std::get_if<SumNode>(&node.kind)) {
      for (double& w : s->log_weights) w = nd(rng);
    } else if (auto* l = std::get_if<LeafNode>(&node.kind)) {
      for (auto& f : l->factors) {
        if (auto* cat = std::get_if<Categorical>(&f.distribution))
          for (double& v : cat->logits) v = nd(rng);
        else {
          auto& g = std::get<Gaussian>(f.distribution);
          g.mean = nd(rng);
          g.log_std = 0.3 * nd(rng);
        }
      }
    }
  }
}

// Random structure over `schema` with knobs drawn from small ranges.
inline Circuit random_circuit(const VariableSchema& schema, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> knob(1, 3);
  StructureConfig cfg{knob(rng), knob(rng), knob(rng), knob(rng), seed};
  Circuit c = build_random_structure(schema, cfg);
  randomize(c, seed ^ 0x5eedULL);
  return c;
}

// Random event: each variable independently absent, Equals or AtMost.
inline Event random_event(const VariableSchema& schema, std::mt19937_64& rng) {
  std::vector<Atom> atoms;
  std::uniform_int_distribution<int> pick(0, 2);
  for (VarIndex v = 0; v < schema.size(); ++v) {
    const int r = pick(rng);
    if (r == 0) continue;
    std::uniform_int_distribution<int> val(0, schema[v].cardinality - 1);
    atoms.push_back(r == 1 ? Atom::equals(v, val(rng)) : Atom::at_most(v, val(rng)));
  }
  return Event(std::move(atoms));
}

}  // namespace testing
