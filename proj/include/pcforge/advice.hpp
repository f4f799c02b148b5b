#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pcforge/constraints.hpp"

namespace pcforge {

// One parsed statement; a `ci` line yields one statement per context value.
struct AdviceStatement {
  std::size_t line = 0;
  Constraint constraint;
};

// Parses the line-oriented advice format (see docs/FORMATS.md). Relative
// `generalize pairs` paths resolve against `base_dir`. Throws DataError
// prefixed with "advice line N:" on any malformed statement.
std::vector<AdviceStatement> parse_advice_statements(const std::string& text, const VariableSchema& schema,
                                                     const std::filesystem::path& base_dir = {});
std::vector<Constraint> parse_advice(const std::string& text, const VariableSchema& schema,
                                     const std::filesystem::path& base_dir = {});
std::vector<Constraint> load_advice(const std::filesystem::path& path, const VariableSchema& schema);

// One CSI constraint per value of the discrete variable `k` (or a single
// context-free CSI when `k` is absent).
std::vector<Constraint> expand_ci_to_csi(VarIndex i, VarIndex j, std::optional<VarIndex> k,
                                         const VariableSchema& schema);

// Single advice line that parses back to `c`.
std::string format_constraint(const Constraint& c, const VariableSchema& schema);

}  // namespace pcforge
