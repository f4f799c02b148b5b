#include <charconv>
#include <fstream>
#include <sstream>

#include "pcforge/circuit.hpp"
#include "pcforge/errors.hpp"

namespace pcforge {

namespace {

constexpr const char* kMagic = "pcforge-circuit";
constexpr const char* kVersion = "v1";

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_ids(std::ostream& out, const std::vector<std::size_t>& ids) {
  out << ' ' << ids.size();
  for (auto id : ids) out << ' ' << id;
}

// Whitespace tokenizer over one line with typed readers; every failure is a
// corrupt-file DataError carrying the line number.
class LineReader {
 public:
  LineReader(std::string line, std::size_t lineno) : in_(std::move(line)), lineno_(lineno) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of line");
    return w;
  }

  void expect(const std::string& w) {
    if (word() != w) fail("expected '" + w + "'");
  }

  std::size_t count() {
    const std::string w = word();
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size()) fail("bad integer '" + w + "'");
    return v;
  }

  double real() {
    const std::string w = word();
    double v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size()) fail("bad number '" + w + "'");
    return v;
  }

  std::vector<std::size_t> ids() {
    std::vector<std::size_t> out(count());
    for (auto& v : out) v = count();
    return out;
  }

  void finish() {
    std::string extra;
    if (in_ >> extra) fail("trailing token '" + extra + "'");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("corrupt checkpoint at line " + std::to_string(lineno_) + ": " + what);
  }

 private:
  std::istringstream in_;
  std::size_t lineno_;
};

}  // namespace

std::string serialize(const Circuit& circuit) {
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  const auto& schema = circuit.schema();
  out << "schema " << schema.size() << '\n';
  for (const auto& v : schema.variables()) {
    if (v.is_discrete())
      out << "var " << v.name << " discrete " << v.cardinality << '\n';
    else
      out << "var " << v.name << " continuous\n";
  }
  out << "nodes " << circuit.size() << '\n';
  for (NodeId id = 0; id < circuit.size(); ++id) {
    const Node& node = circuit.node(id);
    out << "node " << id;
    if (const auto* s = std::get_if<SumNode>(&node.kind)) {
      out << " sum";
      write_ids(out, node.scope);
      write_ids(out, s->children);
      for (double w : s->log_weights) out << ' ' << format_double(w);
    } else if (const auto* p = std::get_if<ProductNode>(&node.kind)) {
      out << " product";
      write_ids(out, node.scope);
      write_ids(out, p->children);
    } else {
      const auto& leaf = std::get<LeafNode>(node.kind);
      out << " leaf";
      write_ids(out, node.scope);
      out << ' ' << leaf.factors.size();
      for (const auto& f : leaf.factors) {
        out << ' ' << f.variable;
        if (const auto* c = std::get_if<Categorical>(&f.distribution)) {
          out << " categorical " << c->logits.size();
          for (double l : c->logits) out << ' ' << format_double(l);
        } else {
          const auto& g = std::get<Gaussian>(f.distribution);
          out << " gaussian " << format_double(g.mean) << ' ' << format_double(g.log_std);
        }
      }
    }
    out << '\n';
  }
  out << "root " << circuit.root() << '\n';
  out << "end\n";
  return out.str();
}

Circuit deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> LineReader {
    if (!std::getline(in, line)) throw DataError("corrupt checkpoint: truncated after line " + std::to_string(lineno));
    return LineReader(line, ++lineno);
  };

  {
    auto r = next();
    if (r.word() != kMagic) r.fail("not a pcforge circuit checkpoint");
    const std::string version = r.word();
    if (version != kVersion) throw DataError("unsupported checkpoint version '" + version + "'");
    r.finish();
  }

  std::vector<Variable> vars;
  {
    auto r = next();
    r.expect("schema");
    vars.resize(r.count());
    r.finish();
  }
  for (auto& v : vars) {
    auto r = next();
    r.expect("var");
    v.name = r.word();
    const std::string kind = r.word();
    if (kind == "discrete") {
      v = Variable::discrete(v.name, static_cast<int>(r.count()));
    } else if (kind == "continuous") {
      v = Variable::continuous(v.name);
    } else {
      r.fail("unknown variable kind '" + kind + "'");
    }
    r.finish();
  }
  VariableSchema schema;
  try {
    schema = VariableSchema(std::move(vars));
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("corrupt checkpoint: ") + e.what());
  }

  std::vector<Node> nodes;
  {
    auto r = next();
    r.expect("nodes");
    nodes.resize(r.count());
    r.finish();
  }
  for (NodeId id = 0; id < nodes.size(); ++id) {
    auto r = next();
    r.expect("node");
    if (r.count() != id) r.fail("node ids must be consecutive");
    const std::string kind = r.word();
    Node& node = nodes[id];
    node.scope = r.ids();
    if (kind == "sum") {
      SumNode s;
      s.children = r.ids();
      s.log_weights.resize(s.children.size());
      for (double& w : s.log_weights) w = r.real();
      node.kind = std::move(s);
    } else if (kind == "product") {
      node.kind = ProductNode{r.ids()};
    } else if (kind == "leaf") {
      LeafNode leaf;
      leaf.factors.resize(r.count());
      for (auto& f : leaf.factors) {
        f.variable = r.count();
        const std::string dist = r.word();
        if (dist == "categorical") {
          Categorical c;
          c.logits.resize(r.count());
          for (double& l : c.logits) l = r.real();
          f.distribution = std::move(c);
        } else if (dist == "gaussian") {
          Gaussian g;
          g.mean = r.real();
          g.log_std = r.real();
          f.distribution = g;
        } else {
          r.fail("unknown leaf distribution '" + dist + "'");
        }
      }
      node.kind = std::move(leaf);
    } else {
      r.fail("unknown node kind '" + kind + "'");
    }
    r.finish();
  }

  NodeId root = 0;
  {
    auto r = next();
    r.expect("root");
    root = r.count();
    r.finish();
    if (root >= nodes.size()) r.fail("root id out of range");
  }
  {
    auto r = next();
    r.expect("end");
    r.finish();
  }
  return Circuit(std::move(schema), std::move(nodes), root);
}

void save(const Circuit& circuit, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << serialize(circuit);
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

Circuit load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

Circuit load(const std::filesystem::path& path, const VariableSchema& expected) {
  Circuit c = load(path);
  if (!(c.schema() == expected)) throw DataError("checkpoint '" + path.string() + "' has a different schema");
  return c;
}

}  // namespace pcforge
