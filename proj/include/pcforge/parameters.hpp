#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pcforge/circuit.hpp"

namespace pcforge {

struct ParameterSlot {
  NodeId node = 0;
  std::size_t slot = 0;
  bool operator==(const ParameterSlot&) const = default;
};

// Flat index space over every parameter of a circuit. Nodes are laid out in
// id order. Within a sum node the slots are its child logits; within a leaf
// they run factor by factor (categorical logits, or Gaussian mean then
// log-std).
class ParameterView {
 public:
  ParameterView() = default;
  explicit ParameterView(const Circuit& circuit);

  std::size_t size() const { return total_; }
  std::size_t offset(NodeId node) const { return offsets_.at(node); }
  std::size_t count(NodeId node) const { return offsets_.at(node + 1) - offsets_.at(node); }

  std::size_t index(ParameterSlot slot) const;
  ParameterSlot slot(std::size_t flat_index) const;

  std::vector<double> gather(const Circuit& circuit) const;
  void scatter(std::span<const double> values, Circuit& circuit) const;

 private:
  std::vector<std::size_t> offsets_;  // size = nodes + 1
  std::size_t total_ = 0;
};

}  // namespace pcforge
