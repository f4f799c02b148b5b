#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pcforge/circuit.hpp"

namespace pcforge {

// N x d table of values typed by a schema. Discrete values are stored as
// category indices.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(VariableSchema schema) : schema_(std::move(schema)) {}

  const VariableSchema& schema() const { return schema_; }
  std::size_t rows() const { return schema_.empty() ? 0 : values_.size() / schema_.size(); }
  std::size_t cols() const { return schema_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<const double> row(std::size_t i) const { return std::span(values_).subspan(i * cols(), cols()); }
  double at(std::size_t i, VarIndex v) const { return values_[i * cols() + v]; }
  const std::vector<double>& values() const { return values_; }

  // Throws InvalidArgument when the row does not fit the schema.
  void append(std::span<const double> row);

  Dataset select(std::span<const std::size_t> indices) const;
  // Rows [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;

  bool operator==(const Dataset&) const = default;

 private:
  VariableSchema schema_;
  std::vector<double> values_;
};

// Comma-separated, one header row naming the schema variables in order.
Dataset parse_csv(const std::string& text, const VariableSchema& schema);
Dataset load_csv(const std::filesystem::path& path, const VariableSchema& schema);
std::string format_csv(const Dataset& data);
void save_csv(const Dataset& data, const std::filesystem::path& path);

// Schema file: one variable per line, `<name> discrete <k>` or
// `<name> continuous`; '#' starts a comment.
VariableSchema parse_schema(const std::string& text);
VariableSchema load_schema(const std::filesystem::path& path);
std::string format_schema(const VariableSchema& schema);

// Discrete Bayesian network with tabular CPTs.
struct BayesNet {
  VariableSchema schema;
  std::vector<std::vector<VarIndex>> parents;  // per node, in declaration order
  // cpt[v][config * card + value]; configs enumerate parent values in
  // mixed radix with the last parent varying fastest.
  std::vector<std::vector<double>> cpt;

  std::size_t parent_config(VarIndex v, std::span<const double> row) const;
  std::vector<VarIndex> topological_order() const;
  // Exact joint probability of a complete assignment.
  double probability(std::span<const double> row) const;
};

// `.bn` fixture format:
//   node <name> card <k>
//   edge <parent> -> <child>
//   cpt <name> | <parent values...> : <probs...>
BayesNet parse_bn(const std::string& text);
BayesNet load_bn(const std::filesystem::path& path);

Dataset sample_bn(const BayesNet& bn, std::size_t n, std::uint64_t seed);

// x ~ U(lo, hi), y ~ N(sin x, 1), z ~ N(cos x, 1).
Dataset gen_helix(std::size_t n, double lo, double hi, std::uint64_t seed);

struct PointPair {
  std::vector<double> x;
  std::vector<double> x_prime;
  bool operator==(const PointPair&) const = default;
};

// k random coordinate permutations per row, paired with the row. Every
// variable must share one domain.
std::vector<PointPair> gen_permutation_pairs(const Dataset& data, std::size_t k, std::uint64_t seed);

// n manifold pairs ((x, sin x, cos x), (x + 2pi, sin(x + 2pi), cos(x + 2pi)))
// with x ~ U(0, 2pi).
std::vector<PointPair> gen_helix_pairs(std::size_t n, std::uint64_t seed);

// Pairs CSV: header `<names...>,<names with a trailing '>`, then x and x'
// concatenated on each row.
std::vector<PointPair> parse_pairs_csv(const std::string& text, const VariableSchema& schema);
std::vector<PointPair> load_pairs_csv(const std::filesystem::path& path, const VariableSchema& schema);
std::string format_pairs_csv(const std::vector<PointPair>& pairs, const VariableSchema& schema);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace pcforge
