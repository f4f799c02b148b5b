#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "helpers.hpp"
#include "pcforge/cli.hpp"
#include "pcforge/data.hpp"
#include "pcforge/errors.hpp"

using namespace pcforge;

namespace {

const std::filesystem::path kFixtures = PCFORGE_FIXTURES;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "pcforge");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch() {
  const auto dir = std::filesystem::temp_directory_path() / "pcforge_test_cli";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string str(const std::filesystem::path& p) { return p.string(); }

const std::vector<std::string> kSmall{"--epochs", "2", "--depth", "1", "--inputs", "1", "--sums", "2", "--replicas", "1",
                                      "--batch_size", "50", "--lr", "0.05"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

// Earthquake samples plus their schema in the scratch directory.
void earthquake_data(std::size_t n) {
  const auto dir = scratch();
  const auto r = run({"gen-data", "bn", "--bn", str(kFixtures / "earthquake.bn"), "-n", std::to_string(n), "--seed", "1",
                      "--out", str(dir / "eq.csv"), "--schema-out", str(dir / "eq.schema")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
}

}  // namespace

TEST_CASE("eval on a uniform 3-binary model prints -3 ln 2") {
  Circuit c(testing::binary_schema(3));
  std::vector<NodeId> leaves;
  for (VarIndex v = 0; v < 3; ++v) leaves.push_back(c.add_leaf({Factor{v, Categorical{{0.0, 0.0}}}}));
  c.set_root(c.add_product(leaves));
  const auto dir = scratch();
  save(c, dir / "uniform.ckpt");
  write_text_file(dir / "u.csv", "X0,X1,X2\n0,1,1\n1,1,0\n");
  const auto r = run({"eval", "--model", str(dir / "uniform.ckpt"), "--data", str(dir / "u.csv")});
  CHECK(r.code == 0);
  CHECK(std::stod(r.out) == doctest::Approx(-2.0794).epsilon(1e-4));
}

TEST_CASE("config files: parsing, precedence and unknown keys") {
  const auto cfg = cli::parse_config("# comment\nlr = 0.5\n\nepochs=3  # trailing\n");
  CHECK(cfg.at("lr") == "0.5");
  CHECK(cfg.at("epochs") == "3");
  CHECK_THROWS_AS(cli::parse_config("lr = 1\nlr = 2\n"), InvalidArgument);
  CHECK_THROWS_AS(cli::parse_config("no equals sign\n"), InvalidArgument);

  earthquake_data(50);
  const auto dir = scratch();
  write_text_file(dir / "bad.cfg", "learning_rate = 0.1\n");
  auto r = run(with_small({"train", "--data", str(dir / "eq.csv"), "--schema", str(dir / "eq.schema"), "--out",
                           str(dir / "m.ckpt"), "--config", str(dir / "bad.cfg")}));
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("learning_rate") != std::string::npos);

  // The flag's epochs = 2 overrides the file.
  write_text_file(dir / "ok.cfg", "epochs = 1000000\nseed = 4\n");
  r = run(with_small({"train", "--data", str(dir / "eq.csv"), "--schema", str(dir / "eq.schema"), "--out",
                      str(dir / "m.ckpt"), "--config", str(dir / "ok.cfg")}));
  CHECK_MESSAGE(r.code == 0, r.err);
  const std::string report = read_text_file(dir / "m.ckpt.report");
  CHECK(report.find("2 final zeta") != std::string::npos);
}

TEST_CASE("unknown flags and missing arguments are usage errors") {
  CHECK(run({"eval", "--bogus"}).code == cli::kUsage);
  CHECK(run({"eval"}).code == cli::kUsage);
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("data errors exit with code 2") {
  const auto dir = scratch();
  CHECK(run({"eval", "--model", str(dir / "missing.ckpt"), "--data", str(dir / "missing.csv")}).code == cli::kData);
  write_text_file(dir / "bad.schema", "X0 discrete 2\n");
  write_text_file(dir / "bad.csv", "X0\n7\n");
  const auto r = run(with_small(
      {"train", "--data", str(dir / "bad.csv"), "--schema", str(dir / "bad.schema"), "--out", str(dir / "bad.ckpt")}));
  CHECK(r.code == cli::kData);
  CHECK(r.err.find("row 1") != std::string::npos);
}

TEST_CASE("train, validate, sample and check round trip") {
  earthquake_data(100);
  const auto dir = scratch();
  auto r = run(with_small({"train", "--data", str(dir / "eq.csv"), "--schema", str(dir / "eq.schema"), "--advice",
                           str(kFixtures / "earthquake.advice"), "--out", str(dir / "k.ckpt"), "--dump",
                           str(dir / "k.dump"), "--t_max", "1"}));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("zeta") != std::string::npos);
  std::istringstream dump(read_text_file(dir / "k.dump"));
  std::size_t lines = 0;
  for (std::string line; std::getline(dump, line);) lines += !line.empty();
  CHECK(lines == 8);

  r = run({"validate", "--model", str(dir / "k.ckpt")});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("ok nodes", 0) == 0);

  r = run({"sample", "--model", str(dir / "k.ckpt"), "-n", "5", "--seed", "2", "--out", str(dir / "s.csv")});
  CHECK(r.code == 0);
  CHECK(load_csv(dir / "s.csv", load_schema(dir / "eq.schema")).rows() == 5);

  r = run({"check", "--model", str(dir / "k.ckpt"), "--advice", str(kFixtures / "earthquake.advice"), "--data",
           str(dir / "eq.csv")});
  CHECK(r.code == 0);
  CHECK(r.out.find("constraint 0 kind csi groundings 2") != std::string::npos);
  CHECK(r.out.find("total zeta") != std::string::npos);
}

TEST_CASE("gen-data helix and pairs") {
  const auto dir = scratch();
  auto r = run({"gen-data", "helix", "-n", "20", "--seed", "3", "--out", str(dir / "h.csv"), "--schema-out",
                str(dir / "h.schema")});
  REQUIRE(r.code == 0);
  const auto schema = load_schema(dir / "h.schema");
  CHECK(load_csv(dir / "h.csv", schema).rows() == 20);
  r = run({"gen-data", "pairs", "--mode", "helix", "-n", "7", "--seed", "1", "--out", str(dir / "hp.csv")});
  REQUIRE(r.code == 0);
  CHECK(load_pairs_csv(dir / "hp.csv", schema).size() == 7);

  earthquake_data(10);
  r = run({"gen-data", "pairs", "--mode", "permute", "--data", str(dir / "eq.csv"), "--schema", str(dir / "eq.schema"),
           "-k", "2", "--seed", "1", "--out", str(dir / "pp.csv")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(load_pairs_csv(dir / "pp.csv", load_schema(dir / "eq.schema")).size() == 20);
}

TEST_CASE("ablate over lambda prints one row per value") {
  earthquake_data(60);
  const auto dir = scratch();
  const auto r = run(with_small({"ablate", "--sweep", "lambda", "--values", "0.1,1,10,100", "--data",
                                 str(dir / "eq.csv"), "--schema", str(dir / "eq.schema"), "--advice",
                                 str(kFixtures / "earthquake.advice"), "--t_max", "1"}));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::istringstream in(r.out);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "sweep value test_ll train_ll zeta iterations");
  CHECK(lines[1].rfind("lambda 0.1 ", 0) == 0);
}
