#include "pcforge/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "pcforge/errors.hpp"
#include "pcforge/inference.hpp"

namespace pcforge {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

bool parse_double(const std::string& cell, double& out) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && b != e;
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// Parses and range-checks one cell; errors carry 1-based row/column.
double parse_cell(const std::string& cell, const Variable& var, std::size_t row, std::size_t col) {
  auto where = [&] {
    return "row " + std::to_string(row) + ", column " + std::to_string(col) + " ('" + var.name + "')";
  };
  double v = 0.0;
  if (!parse_double(cell, v) || !std::isfinite(v)) throw DataError("unparsable value '" + cell + "' at " + where());
  if (var.is_discrete() && (v != std::floor(v) || v < 0 || v >= var.cardinality))
    throw DataError("value '" + cell + "' out of range [0, " + std::to_string(var.cardinality - 1) + "] at " + where());
  return v;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void Dataset::append(std::span<const double> row) {
  check_row(row, schema_);
  values_.insert(values_.end(), row.begin(), row.end());
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  Dataset out(schema_);
  out.values_.reserve(indices.size() * cols());
  for (std::size_t i : indices) {
    if (i >= rows()) throw InvalidArgument("row index out of range");
    const auto r = row(i);
    out.values_.insert(out.values_.end(), r.begin(), r.end());
  }
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw InvalidArgument("invalid row slice");
  Dataset out(schema_);
  out.values_.assign(values_.begin() + static_cast<std::ptrdiff_t>(begin * cols()),
                     values_.begin() + static_cast<std::ptrdiff_t>(end * cols()));
  return out;
}

Dataset parse_csv(const std::string& text, const VariableSchema& schema) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV is empty; a header row is required");
  const auto header = split_csv(line);
  if (header.size() != schema.size()) throw DataError("CSV header has " + std::to_string(header.size()) +
                                                      " columns, schema has " + std::to_string(schema.size()));
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] != schema[c].name)
      throw DataError("CSV header column " + std::to_string(c + 1) + " is '" + header[c] + "', expected '" +
                      schema[c].name + "'");

  Dataset data(schema);
  std::vector<double> row(schema.size());
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != schema.size())
      throw DataError("row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(schema.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_cell(cells[c], schema[c], row_no, c + 1);
    data.append(row);
  }
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const VariableSchema& schema) {
  return parse_csv(read_text_file(path), schema);
}

std::string format_csv(const Dataset& data) {
  std::ostringstream out;
  for (std::size_t c = 0; c < data.cols(); ++c) out << (c ? "," : "") << data.schema()[c].name;
  out << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t c = 0; c < data.cols(); ++c) out << (c ? "," : "") << format_number(data.at(i, c));
    out << '\n';
  }
  return out.str();
}

void save_csv(const Dataset& data, const std::filesystem::path& path) { write_text_file(path, format_csv(data)); }

VariableSchema parse_schema(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<Variable> vars;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto words = split_words(strip_comment(line));
    if (words.empty()) continue;
    auto fail = [&](const std::string& what) {
      throw DataError("schema line " + std::to_string(lineno) + ": " + what);
    };
    if (words.size() == 2 && words[1] == "continuous") {
      vars.push_back(Variable::continuous(words[0]));
    } else if (words.size() == 3 && words[1] == "discrete") {
      int k = 0;
      auto [p, ec] = std::from_chars(words[2].data(), words[2].data() + words[2].size(), k);
      if (ec != std::errc() || p != words[2].data() + words[2].size()) fail("bad cardinality '" + words[2] + "'");
      vars.push_back(Variable::discrete(words[0], k));
    } else {
      fail("expected '<name> discrete <k>' or '<name> continuous'");
    }
  }
  try {
    return VariableSchema(std::move(vars));
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("schema: ") + e.what());
  }
}

VariableSchema load_schema(const std::filesystem::path& path) { return parse_schema(read_text_file(path)); }

std::string format_schema(const VariableSchema& schema) {
  std::ostringstream out;
  for (const auto& v : schema.variables()) {
    if (v.is_discrete())
      out << v.name << " discrete " << v.cardinality << '\n';
    else
      out << v.name << " continuous\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Bayesian networks

std::size_t BayesNet::parent_config(VarIndex v, std::span<const double> row) const {
  std::size_t config = 0;
  for (VarIndex p : parents[v]) config = config * static_cast<std::size_t>(schema[p].cardinality) +
                                         static_cast<std::size_t>(row[p]);
  return config;
}

std::vector<VarIndex> BayesNet::topological_order() const {
  const std::size_t n = schema.size();
  std::vector<std::size_t> pending(n);
  std::vector<std::vector<VarIndex>> children(n);
  for (VarIndex v = 0; v < n; ++v) {
    pending[v] = parents[v].size();
    for (VarIndex p : parents[v]) children[p].push_back(v);
  }
  std::vector<VarIndex> order;
  std::vector<bool> done(n, false);
  while (order.size() < n) {
    bool progressed = false;
    for (VarIndex v = 0; v < n; ++v) {
      if (done[v] || pending[v] != 0) continue;
      done[v] = true;
      order.push_back(v);
      for (VarIndex c : children[v]) --pending[c];
      progressed = true;
      break;
    }
    if (!progressed) throw DataError("Bayesian network graph has a cycle");
  }
  return order;
}

double BayesNet::probability(std::span<const double> row) const {
  double p = 1.0;
  for (VarIndex v = 0; v < schema.size(); ++v) {
    const auto k = static_cast<std::size_t>(schema[v].cardinality);
    p *= cpt[v][parent_config(v, row) * k + static_cast<std::size_t>(row[v])];
  }
  return p;
}

BayesNet parse_bn(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Variable> vars;
  std::vector<std::pair<std::string, std::string>> edges;
  struct CptLine {
    std::string node;
    std::vector<std::string> config;
    std::vector<std::string> probs;
    std::size_t lineno;
  };
  std::vector<CptLine> cpts;
  auto fail = [&](std::size_t at, const std::string& what) -> void {
    throw DataError("bn line " + std::to_string(at) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++lineno;
    const auto words = split_words(strip_comment(line));
    if (words.empty()) continue;
    if (words[0] == "node") {
      if (words.size() != 4 || words[2] != "card") fail(lineno, "expected 'node <name> card <k>'");
      int k = 0;
      auto [p, ec] = std::from_chars(words[3].data(), words[3].data() + words[3].size(), k);
      if (ec != std::errc() || p != words[3].data() + words[3].size()) fail(lineno, "bad cardinality");
      vars.push_back(Variable::discrete(words[1], k));
    } else if (words[0] == "edge") {
      if (words.size() != 4 || words[2] != "->") fail(lineno, "expected 'edge <parent> -> <child>'");
      edges.emplace_back(words[1], words[3]);
    } else if (words[0] == "cpt") {
      const auto bar = std::find(words.begin(), words.end(), "|");
      const auto colon = std::find(words.begin(), words.end(), ":");
      if (words.size() < 2 || bar != words.begin() + 2 || colon == words.end() || colon < bar)
        fail(lineno, "expected 'cpt <name> | <parent values> : <probs>'");
      cpts.push_back(CptLine{words[1], {bar + 1, colon}, {colon + 1, words.end()}, lineno});
    } else {
      fail(lineno, "unknown statement '" + words[0] + "'");
    }
  }

  BayesNet bn;
  try {
    bn.schema = VariableSchema(std::move(vars));
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("bn: ") + e.what());
  }
  const std::size_t n = bn.schema.size();
  auto lookup = [&](const std::string& name, std::size_t at) {
    auto v = bn.schema.find(name);
    if (!v) fail(at, "unknown node '" + name + "'");
    return *v;
  };
  bn.parents.assign(n, {});
  for (const auto& [a, b] : edges) {
    const VarIndex pa = lookup(a, 0), ch = lookup(b, 0);
    if (std::find(bn.parents[ch].begin(), bn.parents[ch].end(), pa) != bn.parents[ch].end())
      throw DataError("bn: duplicate edge " + a + " -> " + b);
    bn.parents[ch].push_back(pa);
  }
  (void)bn.topological_order();

  bn.cpt.assign(n, {});
  std::vector<std::vector<bool>> seen(n);
  for (VarIndex v = 0; v < n; ++v) {
    std::size_t configs = 1;
    for (VarIndex p : bn.parents[v]) configs *= static_cast<std::size_t>(bn.schema[p].cardinality);
    bn.cpt[v].assign(configs * static_cast<std::size_t>(bn.schema[v].cardinality), 0.0);
    seen[v].assign(configs, false);
  }
  for (const auto& c : cpts) {
    const VarIndex v = lookup(c.node, c.lineno);
    const auto& parents = bn.parents[v];
    if (c.config.size() != parents.size())
      fail(c.lineno, "cpt for '" + c.node + "' needs " + std::to_string(parents.size()) + " parent values");
    std::vector<double> row(n, 0.0);
    for (std::size_t i = 0; i < parents.size(); ++i) {
      double x = 0;
      const Variable& pv = bn.schema[parents[i]];
      if (!parse_double(c.config[i], x) || x != std::floor(x) || x < 0 || x >= pv.cardinality)
        fail(c.lineno, "bad value '" + c.config[i] + "' for parent '" + pv.name + "'");
      row[parents[i]] = x;
    }
    const auto k = static_cast<std::size_t>(bn.schema[v].cardinality);
    if (c.probs.size() != k) fail(c.lineno, "cpt row needs " + std::to_string(k) + " probabilities");
    const std::size_t config = bn.parent_config(v, row);
    if (seen[v][config]) fail(c.lineno, "duplicate cpt row");
    seen[v][config] = true;
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double p = 0;
      if (!parse_double(c.probs[j], p) || p < 0 || p > 1) fail(c.lineno, "bad probability '" + c.probs[j] + "'");
      bn.cpt[v][config * k + j] = p;
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) fail(c.lineno, "cpt row does not sum to 1");
  }
  for (VarIndex v = 0; v < n; ++v)
    if (std::find(seen[v].begin(), seen[v].end(), false) != seen[v].end())
      throw DataError("bn: cpt for '" + bn.schema[v].name + "' is missing parent configurations");
  return bn;
}

BayesNet load_bn(const std::filesystem::path& path) { return parse_bn(read_text_file(path)); }

Dataset sample_bn(const BayesNet& bn, std::size_t n, std::uint64_t seed) {
  const auto order = bn.topological_order();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Dataset data(bn.schema);
  std::vector<double> row(bn.schema.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (VarIndex v : order) {
      const auto k = static_cast<std::size_t>(bn.schema[v].cardinality);
      const double* probs = &bn.cpt[v][bn.parent_config(v, row) * k];
      const double u = uniform(rng);
      double acc = 0.0;
      std::size_t pick = k - 1;
      for (std::size_t j = 0; j < k; ++j) {
        acc += probs[j];
        if (u < acc) {
          pick = j;
          break;
        }
      }
      // Never land on a zero-probability tail category through rounding.
      while (probs[pick] == 0.0 && pick > 0) --pick;
      row[v] = static_cast<double>(pick);
    }
    data.append(row);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Synthetic generators

Dataset gen_helix(std::size_t n, double lo, double hi, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("helix sample count must be >= 1");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw InvalidArgument("helix range must satisfy lo < hi");
  VariableSchema schema({Variable::continuous("x"), Variable::continuous("y"), Variable::continuous("z")});
  Dataset data(schema);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo, hi);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng);
    const double y = std::sin(x) + noise(rng);
    const double z = std::cos(x) + noise(rng);
    const double row[] = {x, y, z};
    data.append(row);
  }
  return data;
}

std::vector<PointPair> gen_helix_pairs(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("helix pair count must be >= 1");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, two_pi);
  std::vector<PointPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng);
    const double x2 = x + two_pi;
    out.push_back(PointPair{{x, std::sin(x), std::cos(x)}, {x2, std::sin(x2), std::cos(x2)}});
  }
  return out;
}

std::vector<PointPair> gen_permutation_pairs(const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw InvalidArgument("permutation count must be >= 1");
  const auto& vars = data.schema().variables();
  for (const auto& v : vars)
    if (v.kind != vars.front().kind || v.cardinality != vars.front().cardinality)
      throw InvalidArgument("permutation pairs need every variable to share one domain");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(data.cols());
  std::vector<PointPair> out;
  out.reserve(data.rows() * k);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto row = data.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      PointPair pair{{row.begin(), row.end()}, std::vector<double>(row.size())};
      for (std::size_t c = 0; c < perm.size(); ++c) pair.x_prime[c] = row[perm[c]];
      out.push_back(std::move(pair));
    }
  }
  return out;
}

std::vector<PointPair> parse_pairs_csv(const std::string& text, const VariableSchema& schema) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("pairs CSV is empty; a header row is required");
  const auto header = split_csv(line);
  const std::size_t d = schema.size();
  if (header.size() != 2 * d) throw DataError("pairs CSV header needs " + std::to_string(2 * d) + " columns");
  for (std::size_t c = 0; c < d; ++c)
    if (header[c] != schema[c].name || header[d + c] != schema[c].name + "'")
      throw DataError("pairs CSV header column mismatch at variable '" + schema[c].name + "'");
  std::vector<PointPair> out;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2 * d) throw DataError("pairs row " + std::to_string(row_no) + " has the wrong width");
    PointPair p{std::vector<double>(d), std::vector<double>(d)};
    for (std::size_t c = 0; c < d; ++c) {
      p.x[c] = parse_cell(cells[c], schema[c], row_no, c + 1);
      p.x_prime[c] = parse_cell(cells[d + c], schema[c], row_no, d + c + 1);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PointPair> load_pairs_csv(const std::filesystem::path& path, const VariableSchema& schema) {
  return parse_pairs_csv(read_text_file(path), schema);
}

std::string format_pairs_csv(const std::vector<PointPair>& pairs, const VariableSchema& schema) {
  std::ostringstream out;
  const std::size_t d = schema.size();
  for (std::size_t c = 0; c < d; ++c) out << (c ? "," : "") << schema[c].name;
  for (std::size_t c = 0; c < d; ++c) out << ',' << schema[c].name << '\'';
  out << '\n';
  for (const auto& p : pairs) {
    for (std::size_t c = 0; c < d; ++c) out << (c ? "," : "") << format_number(p.x[c]);
    for (std::size_t c = 0; c < d; ++c) out << ',' << format_number(p.x_prime[c]);
    out << '\n';
  }
  return out.str();
}

}  // namespace pcforge
