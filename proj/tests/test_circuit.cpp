#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "pcforge/errors.hpp"
#include "pcforge/math.hpp"
#include "pcforge/parameters.hpp"

using namespace pcforge;
using testing::binary_schema;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("pcforge_test_circuit_" + name);
}

bool has_violation(const ValidationReport& r, ViolationKind kind, NodeId node) {
  for (const auto& v : r.violations)
    if (v.kind == kind && v.node == node) return true;
  return false;
}

std::vector<VariableSchema> schema_family() {
  return {
      binary_schema(1),
      binary_schema(4),
      VariableSchema({Variable::discrete("a", 3), Variable::discrete("b", 5), Variable::continuous("c")}),
      VariableSchema({Variable::continuous("x"), Variable::continuous("y"), Variable::continuous("z")}),
      binary_schema(9),
  };
}

}  // namespace

TEST_CASE("schema rejects bad variables") {
  CHECK_THROWS_AS(VariableSchema({Variable::discrete("a", 2), Variable::discrete("a", 2)}), InvalidArgument);
  CHECK_THROWS_AS(VariableSchema({Variable::discrete("", 2)}), InvalidArgument);
  CHECK_THROWS_AS(VariableSchema({Variable::discrete("a", 1)}), InvalidArgument);
  CHECK_THROWS_AS(VariableSchema({Variable::discrete("a b", 2)}), InvalidArgument);
  const VariableSchema ok({Variable::discrete("a", 2), Variable::continuous("b")});
  CHECK(ok.index_of("b") == 1);
  CHECK_THROWS_AS((void)ok.index_of("c"), InvalidArgument);
  CHECK_FALSE(ok.all_discrete());
}

TEST_CASE("minimal structure: one root sum over one product over two leaves") {
  const Circuit c = build_random_structure(binary_schema(2), StructureConfig{1, 1, 1, 1, 3});
  CHECK(validate(c).ok());
  REQUIRE(c.size() == 4);
  const Node& root = c.node(c.root());
  REQUIRE(root.is_sum());
  REQUIRE(root.children().size() == 1);
  const Node& prod = c.node(root.children()[0]);
  REQUIRE(prod.is_product());
  REQUIRE(prod.children().size() == 2);
  for (NodeId leaf : prod.children()) {
    CHECK(c.node(leaf).is_leaf());
    CHECK(c.node(leaf).scope.size() == 1);
  }
}

TEST_CASE("tabular regime D=2 I=20 S=20 R=5 builds and validates") {
  const Circuit c = build_random_structure(binary_schema(5), StructureConfig{2, 20, 20, 5, 1});
  CHECK(validate(c).ok());
  CHECK(c.parameter_count() > 80000);
}

TEST_CASE("node count matches a hand replay of the recursion") {
  // 4 variables, D=2, I=2, S=2, R=2. Per replica: the root region splits 2|2
  // (level 1); each level-1 region splits 1|1 into terminal regions with
  // 2 leaves each (4 regions * 2 = 8 leaves); each level-1 partition holds
  // 2*2 = 4 products (8 total) under 2 sums per region (4 sums); the top
  // partition holds 2*2 = 4 products. 8 + 8 + 4 + 4 = 24 per replica, two
  // replicas, plus the root sum: 49.
  const Circuit c = build_random_structure(binary_schema(4), StructureConfig{2, 2, 2, 2, 11});
  CHECK(validate(c).ok());
  std::size_t sums = 0, products = 0, leaves = 0;
  for (const auto& n : c.nodes()) {
    sums += n.is_sum();
    products += n.is_product();
    leaves += n.is_leaf();
  }
  CHECK(leaves == 16);
  CHECK(products == 24);
  CHECK(sums == 9);
  CHECK(c.size() == 49);
}

TEST_CASE("validate flags a non-smooth sum") {
  Circuit c(binary_schema(2));
  const NodeId a = c.add_leaf({Factor{0, Categorical{{0.0, 0.0}}}});
  const NodeId b = c.add_leaf({Factor{1, Categorical{{0.0, 0.0}}}});
  const NodeId s = c.add_sum({a, b});
  c.set_root(s);
  CHECK(has_violation(validate(c), ViolationKind::Smoothness, s));
}

TEST_CASE("validate flags a non-decomposable product") {
  Circuit c(binary_schema(2));
  const NodeId ab = c.add_leaf({Factor{0, Categorical{{0.0, 0.0}}}, Factor{1, Categorical{{0.0, 0.0}}}});
  const NodeId b = c.add_leaf({Factor{1, Categorical{{0.0, 0.0}}}});
  const NodeId p = c.add_product({ab, b});
  c.set_root(p);
  CHECK(has_violation(validate(c), ViolationKind::Decomposability, p));
}

TEST_CASE("validate flags cycles, unreachable nodes and bad weights") {
  Circuit c(binary_schema(1));
  const NodeId a = c.add_leaf({Factor{0, Categorical{{0.0, 0.0}}}});
  const NodeId orphan = c.add_leaf({Factor{0, Categorical{{0.0, 0.0}}}});
  const NodeId s = c.add_sum({a}, {std::nan("")});
  c.set_root(s);
  const auto r = validate(c);
  CHECK(has_violation(r, ViolationKind::Unreachable, orphan));
  CHECK(has_violation(r, ViolationKind::Normalization, s));

  Circuit cyc(binary_schema(1));
  const NodeId l = cyc.add_leaf({Factor{0, Categorical{{0.0, 0.0}}}});
  const NodeId s1 = cyc.add_sum({l});
  const NodeId s2 = cyc.add_sum({s1});
  std::get<SumNode>(cyc.mutable_node(s1).kind).children = {s2};
  cyc.set_root(s2);
  bool cycle = false;
  for (const auto& v : validate(cyc).violations) cycle = cycle || v.kind == ViolationKind::Acyclicity;
  CHECK(cycle);
}

TEST_CASE("validate flags a root that misses variables") {
  Circuit c(binary_schema(2));
  c.set_root(c.add_leaf({Factor{0, Categorical{{0.0, 0.0}}}}));
  bool scope = false;
  for (const auto& v : validate(c).violations) scope = scope || v.kind == ViolationKind::Scope;
  CHECK(scope);
}

TEST_CASE("generated circuits validate for 100 seeds on 5 schemas") {
  for (const auto& schema : schema_family())
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto c = testing::random_circuit(schema, seed);
      const auto report = validate(c);
      if (!report.ok()) FAIL("seed " << seed << ": " << report.violations.front().message);
    }
}

TEST_CASE("every sum's softmax weights sum to one within 1e-12") {
  for (const auto& schema : schema_family())
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto c = testing::random_circuit(schema, seed);
      for (const auto& n : c.nodes())
        if (const auto* s = std::get_if<SumNode>(&n.kind)) {
          double total = 0.0;
          for (double w : math::softmax(s->log_weights)) total += w;
          CHECK(std::abs(total - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("structure generation is a pure function of schema and config") {
  const auto schema = binary_schema(7);
  const StructureConfig cfg{3, 2, 3, 2, 42};
  CHECK(build_random_structure(schema, cfg) == build_random_structure(schema, cfg));
  StructureConfig other = cfg;
  other.seed = 43;
  CHECK_FALSE(build_random_structure(schema, cfg) == build_random_structure(schema, other));
}

TEST_CASE("structure config bounds are enforced") {
  CHECK_THROWS_AS(build_random_structure(binary_schema(2), StructureConfig{0, 1, 1, 1, 0}), InvalidArgument);
  CHECK_THROWS_AS(build_random_structure(VariableSchema(), StructureConfig{}), InvalidArgument);
}

TEST_CASE("parameter view is a bijection over every slot") {
  const auto c = testing::random_circuit(VariableSchema({Variable::discrete("a", 3), Variable::continuous("b")}), 5);
  const ParameterView view(c);
  CHECK(view.size() == c.parameter_count());
  for (std::size_t i = 0; i < view.size(); ++i) CHECK(view.index(view.slot(i)) == i);
  auto theta = view.gather(c);
  for (double& t : theta) t += 1.0;
  Circuit copy = c;
  view.scatter(theta, copy);
  CHECK(view.gather(copy) == theta);
}

TEST_CASE("checkpoint round trip of the minimal circuit gives identical densities") {
  Circuit c = build_random_structure(binary_schema(2), StructureConfig{1, 1, 1, 1, 9});
  testing::randomize(c, 3);
  const auto path = temp_file("minimal.ckpt");
  save(c, path);
  const Circuit back = load(path);
  CHECK(back == c);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const std::vector<double> x{static_cast<double>(rng() % 2), static_cast<double>(rng() % 2)};
    CHECK(log_density(back, x) == log_density(c, x));
  }
}

TEST_CASE("checkpoint round trip of the tabular regime is bit exact") {
  Circuit c = build_random_structure(binary_schema(5), StructureConfig{2, 20, 20, 5, 2});
  testing::randomize(c, 8, 3.0);
  const Circuit back = deserialize(serialize(c));
  const ParameterView view(c);
  const auto a = view.gather(c), b = view.gather(back);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  CHECK(back == c);
}

TEST_CASE("checkpoint round trip with Gaussian leaves") {
  const auto schema = VariableSchema({Variable::continuous("x"), Variable::discrete("k", 4)});
  const auto c = testing::random_circuit(schema, 17);
  CHECK(deserialize(serialize(c)) == c);
}

TEST_CASE("corrupt, truncated and mismatched checkpoints are rejected") {
  const auto c = build_random_structure(binary_schema(3), StructureConfig{2, 2, 2, 1, 4});
  const std::string text = serialize(c);
  CHECK_THROWS_AS(deserialize(text.substr(0, text.size() / 2)), DataError);
  CHECK_THROWS_AS(deserialize(""), DataError);
  std::string wrong = text;
  wrong.replace(0, std::string("pcforge-circuit v1").size(), "pcforge-circuit v9");
  CHECK_THROWS_WITH_AS(deserialize(wrong), doctest::Contains("unsupported checkpoint version"), DataError);
  std::string garbled = text;
  garbled[garbled.find("sum")] = 'X';
  CHECK_THROWS_AS(deserialize(garbled), DataError);

  const auto path = temp_file("mismatch.ckpt");
  save(c, path);
  CHECK_NOTHROW(load(path, c.schema()));
  CHECK_THROWS_AS(load(path, binary_schema(4)), DataError);
  CHECK_THROWS_AS(load(temp_file("does_not_exist.ckpt")), DataError);
}
