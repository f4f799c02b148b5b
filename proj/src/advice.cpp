#include "pcforge/advice.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "pcforge/errors.hpp"

namespace pcforge {

namespace {

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// Token cursor over one statement; every failure is a DataError that the
// caller prefixes with the line number.
class Tokens {
 public:
  explicit Tokens(std::vector<std::string> words) : words_(std::move(words)) {}

  bool done() const { return pos_ == words_.size(); }
  const std::string& peek() const {
    if (done()) throw DataError("unexpected end of statement");
    return words_[pos_];
  }
  std::string next(const char* what) {
    if (done()) throw DataError(std::string("missing ") + what);
    return words_[pos_++];
  }
  void expect(const std::string& word) {
    const auto got = next(("'" + word + "'").c_str());
    if (got != word) throw DataError("expected '" + word + "', got '" + got + "'");
  }
  bool accept(const std::string& word) {
    if (!done() && words_[pos_] == word) {
      ++pos_;
      return true;
    }
    return false;
  }
  void finish() const {
    if (!done()) throw DataError("unexpected token '" + words_[pos_] + "'");
  }

 private:
  std::vector<std::string> words_;
  std::size_t pos_ = 0;
};

double parse_real(const std::string& s, const char* what) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || b == e || !std::isfinite(v))
    throw DataError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

VarIndex variable(const VariableSchema& schema, const std::string& name) {
  auto v = schema.find(name);
  if (!v) throw DataError("unknown variable '" + name + "'");
  return *v;
}

int direction(const std::string& tok) {
  if (tok == "+") return +1;
  if (tok == "-") return -1;
  throw DataError("malformed direction '" + tok + "' (expected + or -)");
}

Atom assignment(const VariableSchema& schema, const std::string& tok) {
  const auto eq = tok.find('=');
  if (eq == std::string::npos) throw DataError("expected <var>=<value>, got '" + tok + "'");
  const VarIndex v = variable(schema, tok.substr(0, eq));
  const double value = parse_real(tok.substr(eq + 1), "value");
  const Variable& var = schema[v];
  if (var.is_discrete() && (value != std::floor(value) || value < 0 || value >= var.cardinality))
    throw DataError("value " + tok.substr(eq + 1) + " out of range for '" + var.name + "'");
  return Atom::equals(v, value);
}

Event conjunction(const std::vector<Atom>& atoms) {
  for (std::size_t a = 0; a < atoms.size(); ++a)
    for (std::size_t b = a + 1; b < atoms.size(); ++b)
      if (atoms[a].variable == atoms[b].variable) throw DataError("duplicate atom on one variable");
  return Event(atoms);
}

double optional_eps(Tokens& t) {
  if (!t.accept("eps")) return kDefaultMargin;
  const double e = parse_real(t.next("margin"), "margin");
  if (!(e > 0.0)) throw DataError("eps must be > 0");
  return e;
}

std::vector<std::string> split(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<Constraint> parse_statement(const std::string& line, const VariableSchema& schema,
                                        const std::filesystem::path& base_dir) {
  auto words = split(line);
  const std::string head = words.front();
  if (head == "generalize") {
    Tokens t(words);
    t.next("keyword");
    const auto mode = t.next("generalize mode");
    GeneralizationSpec spec;
    if (mode == "pairs") {
      spec.pairs_path = t.next("pairs path");
      t.finish();
      std::filesystem::path p = spec.pairs_path;
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      spec.pairs = load_pairs_csv(p, schema);
      if (spec.pairs.empty()) throw DataError("pairs file '" + spec.pairs_path + "' has no pairs");
    } else if (mode == "permute") {
      const double k = parse_real(t.next("permutation count"), "permutation count");
      if (k < 1 || k != std::floor(k)) throw DataError("permutation count must be a positive integer");
      spec.permutations = static_cast<std::size_t>(k);
      t.finish();
    } else {
      throw DataError("generalize mode must be 'pairs' or 'permute', got '" + mode + "'");
    }
    return {Constraint{spec, {}, 0.0}};
  }

  // Commas only separate context assignments; treat them as whitespace.
  std::string spaced = line;
  std::replace(spaced.begin(), spaced.end(), ',', ' ');
  Tokens t(split(spaced));
  t.next("keyword");

  if (head == "monotonic") {
    MonotonicSpec s;
    s.direction = direction(t.next("direction"));
    s.cause = variable(schema, t.next("cause"));
    t.expect("->");
    s.effect = variable(schema, t.next("effect"));
    if (s.cause == s.effect) throw DataError("cause and effect must differ");
    const double eps = optional_eps(t);
    t.finish();
    return {Constraint{s, {}, eps}};
  }
  if (head == "synergy") {
    SynergySpec s;
    s.direction = direction(t.next("direction"));
    s.cause1 = variable(schema, t.next("cause"));
    s.cause2 = variable(schema, t.next("second cause"));
    t.expect("->");
    s.effect = variable(schema, t.next("effect"));
    if (s.cause1 == s.cause2 || s.cause1 == s.effect || s.cause2 == s.effect)
      throw DataError("synergy variables must be distinct");
    const double eps = optional_eps(t);
    t.finish();
    return {Constraint{s, {}, eps}};
  }
  if (head == "csi" || head == "ci") {
    const VarIndex i = variable(schema, t.next("variable"));
    t.expect("indep");
    const VarIndex j = variable(schema, t.next("variable"));
    if (i == j) throw DataError("independence needs two distinct variables");
    if (head == "ci") {
      std::optional<VarIndex> k;
      if (t.accept("given")) k = variable(schema, t.next("conditioning variable"));
      t.finish();
      try {
        return expand_ci_to_csi(i, j, k, schema);
      } catch (const InvalidArgument& e) {
        throw DataError(e.what());
      }
    }
    std::vector<Atom> ctx;
    if (t.accept("given")) {
      do ctx.push_back(assignment(schema, t.next("context assignment")));
      while (!t.done());
    }
    for (const auto& a : ctx)
      if (a.variable == i || a.variable == j) throw DataError("context may not mention the independent variables");
    t.finish();
    return {Constraint{CsiSpec{i, j, conjunction(ctx)}, {}, 0.0}};
  }
  if (head == "imbalance") {
    ImbalanceSpec s;
    const auto pol = t.next("polarity");
    if (pol == "fn")
      s.polarity = Polarity::FalseNegative;
    else if (pol == "fp")
      s.polarity = Polarity::FalsePositive;
    else
      throw DataError("polarity must be 'fn' or 'fp', got '" + pol + "'");
    s.target = variable(schema, t.next("target"));
    if (!schema[s.target].is_discrete()) throw DataError("imbalance target must be discrete");
    t.expect("threshold");
    s.threshold = parse_real(t.next("threshold"), "threshold");
    if (s.threshold < 0 || s.threshold > 1) throw DataError("threshold must lie in [0, 1]");
    const double eps = optional_eps(t);
    t.finish();
    return {Constraint{s, {}, eps}};
  }
  if (head == "privileged") {
    PrivilegedSpec s;
    while (!t.done()) {
      const VarIndex v = variable(schema, t.next("variable"));
      if (std::find(s.privileged.begin(), s.privileged.end(), v) != s.privileged.end())
        throw DataError("duplicate privileged variable '" + schema[v].name + "'");
      s.privileged.push_back(v);
    }
    if (s.privileged.empty()) throw DataError("privileged needs at least one variable");
    if (s.privileged.size() == schema.size()) throw DataError("privileged variables leave nothing observed");
    return {Constraint{s, {}, 0.0}};
  }
  if (head == "prefer") {
    PreferenceSpec s;
    const Atom target = assignment(schema, t.next("target"));
    if (target.value != 1.0) throw DataError("preference target must be written <target>=1");
    s.target = target.variable;
    t.expect("if");
    std::vector<Atom> rule{assignment(schema, t.next("rule assignment"))};
    while (t.accept("and")) rule.push_back(assignment(schema, t.next("rule assignment")));
    for (const auto& a : rule)
      if (a.variable == s.target) throw DataError("preference rule may not mention its target");
    s.rule = conjunction(rule);
    t.expect("prob");
    s.p = parse_real(t.next("probability"), "probability");
    if (s.p < 0 || s.p > 1) throw DataError("probability must lie in [0, 1]");
    t.finish();
    return {Constraint{s, {}, 0.0}};
  }
  throw DataError("unknown statement '" + head + "'");
}

}  // namespace

std::vector<Constraint> expand_ci_to_csi(VarIndex i, VarIndex j, std::optional<VarIndex> k,
                                         const VariableSchema& schema) {
  if (i >= schema.size() || j >= schema.size() || (k && *k >= schema.size()))
    throw InvalidArgument("variable index out of range");
  if (!k) return {Constraint{CsiSpec{i, j, Event()}, {}, 0.0}};
  if (*k == i || *k == j) throw InvalidArgument("conditioning variable must differ from the independent pair");
  if (!schema[*k].is_discrete())
    throw InvalidArgument("cannot expand a CI over continuous '" + schema[*k].name + "' into CSI statements");
  std::vector<Constraint> out;
  for (int z = 0; z < schema[*k].cardinality; ++z)
    out.push_back(Constraint{CsiSpec{i, j, Event({Atom::equals(*k, z)})}, {}, 0.0});
  return out;
}

std::vector<AdviceStatement> parse_advice_statements(const std::string& text, const VariableSchema& schema,
                                                     const std::filesystem::path& base_dir) {
  std::istringstream in(text);
  std::vector<AdviceStatement> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (split(line).empty()) continue;
    try {
      for (auto& c : parse_statement(line, schema, base_dir)) {
        check_constraint(c, schema);
        out.push_back(AdviceStatement{lineno, std::move(c)});
      }
    } catch (const Error& e) {
      throw DataError("advice line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Constraint> parse_advice(const std::string& text, const VariableSchema& schema,
                                     const std::filesystem::path& base_dir) {
  std::vector<Constraint> out;
  for (auto& s : parse_advice_statements(text, schema, base_dir)) out.push_back(std::move(s.constraint));
  return out;
}

std::vector<Constraint> load_advice(const std::filesystem::path& path, const VariableSchema& schema) {
  return parse_advice(read_text_file(path), schema, path.parent_path());
}

std::string format_constraint(const Constraint& c, const VariableSchema& schema) {
  auto name = [&](VarIndex v) { return schema[v].name; };
  auto dir = [](int d) { return d > 0 ? "+" : "-"; };
  auto atoms = [&](const Event& e, const char* sep) {
    std::string out;
    for (const auto& a : e.atoms()) {
      if (!out.empty()) out += sep;
      out += name(a.variable) + "=" + format_number(a.value);
    }
    return out;
  };
  const std::string eps = " eps " + format_number(c.epsilon);
  switch (c.kind()) {
    case ConstraintKind::Generalization: {
      const auto& s = std::get<GeneralizationSpec>(c.body);
      if (s.permutations > 0) return "generalize permute " + std::to_string(s.permutations);
      if (s.pairs_path.empty()) throw InvalidArgument("inline generalization pairs have no advice syntax");
      return "generalize pairs " + s.pairs_path;
    }
    case ConstraintKind::Privileged: {
      std::string out = "privileged";
      for (VarIndex v : std::get<PrivilegedSpec>(c.body).privileged) out += " " + name(v);
      return out;
    }
    case ConstraintKind::CSI: {
      const auto& s = std::get<CsiSpec>(c.body);
      std::string out = "csi " + name(s.i) + " indep " + name(s.j);
      if (!s.context.empty()) out += " given " + atoms(s.context, ", ");
      return out;
    }
    case ConstraintKind::ClassImbalance: {
      const auto& s = std::get<ImbalanceSpec>(c.body);
      return std::string("imbalance ") + (s.polarity == Polarity::FalseNegative ? "fn " : "fp ") + name(s.target) +
             " threshold " + format_number(s.threshold) + eps;
    }
    case ConstraintKind::Monotonic: {
      const auto& s = std::get<MonotonicSpec>(c.body);
      return std::string("monotonic ") + dir(s.direction) + " " + name(s.cause) + " -> " + name(s.effect) + eps;
    }
    case ConstraintKind::Synergy: {
      const auto& s = std::get<SynergySpec>(c.body);
      return std::string("synergy ") + dir(s.direction) + " " + name(s.cause1) + " " + name(s.cause2) + " -> " +
             name(s.effect) + eps;
    }
    case ConstraintKind::Preference: {
      const auto& s = std::get<PreferenceSpec>(c.body);
      return "prefer " + name(s.target) + "=1 if " + atoms(s.rule, " and ") + " prob " + format_number(s.p);
    }
  }
  return {};
}

}  // namespace pcforge
