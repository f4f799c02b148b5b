#include "pcforge/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "pcforge/advice.hpp"
#include "pcforge/constraints.hpp"
#include "pcforge/data.hpp"
#include "pcforge/errors.hpp"
#include "pcforge/inference.hpp"
#include "pcforge/training.hpp"

namespace pcforge::cli {

namespace {

std::string number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// Keys accepted by train / check / ablate, with their defaults.
const std::map<std::string, std::string>& setting_defaults() {
  static const std::map<std::string, std::string> defaults = {
      {"lr", "0.001"},          {"batch_size", "100"},    {"epochs", "1000"},      {"lambda0", "1"},
      {"gamma", "10"},          {"t_max", "10"},          {"violation_tol", "0.001"}, {"seed", "0"},
      {"beta1", "0.9"},         {"beta2", "0.999"},       {"adam_eps", "1e-8"},    {"depth", "2"},
      {"inputs", "20"},         {"sums", "20"},           {"replicas", "5"},       {"gamma_size", "1"},
      {"gamma_noise", "0"},     {"context", "data"},      {"csi_values", "reduced"}, {"cause_pairs", "all"},
  };
  return defaults;
}

// Precedence: flags > config file > defaults.
class Settings {
 public:
  Settings() : values_(setting_defaults()) {}

  void add_flags(CLI::App& app) {
    for (const auto& [key, def] : setting_defaults())
      app.add_option("--" + key, flags_[key], "setting (default " + def + ")");
    app.add_option("--config", config_path_, "flat key = value settings file");
  }

  void resolve(const CLI::App& app) {
    if (!config_path_.empty()) {
      for (const auto& [key, value] : parse_config(read_text_file(config_path_))) {
        if (!values_.count(key)) throw InvalidArgument("unknown config key '" + key + "' in " + config_path_);
        values_[key] = value;
      }
    }
    for (const auto& [key, value] : flags_)
      if (app.count("--" + key) > 0) values_[key] = value;
  }

  void set(const std::string& key, const std::string& value) { values_.at(key) = value; }

  double real(const std::string& key) const {
    const auto& s = values_.at(key);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
      throw InvalidArgument("setting '" + key + "' is not a number: '" + s + "'");
    return v;
  }

  std::uint64_t integer(const std::string& key) const {
    const auto& s = values_.at(key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw InvalidArgument("setting '" + key + "' is not a non-negative integer: '" + s + "'");
    return v;
  }

  int positive(const std::string& key) const {
    const auto v = integer(key);
    if (v < 1 || v > 1'000'000) throw InvalidArgument("setting '" + key + "' must be a positive integer");
    return static_cast<int>(v);
  }

  const std::string& word(const std::string& key) const { return values_.at(key); }

  TrainConfig train_config() const {
    TrainConfig c;
    c.lr = real("lr");
    c.batch_size = integer("batch_size");
    c.epochs = integer("epochs");
    c.lambda0 = real("lambda0");
    c.gamma = real("gamma");
    c.t_max = integer("t_max");
    c.violation_tol = real("violation_tol");
    c.seed = integer("seed");
    c.beta1 = real("beta1");
    c.beta2 = real("beta2");
    c.adam_eps = real("adam_eps");
    check_config(c);
    return c;
  }

  StructureConfig structure() const {
    return StructureConfig{positive("depth"), positive("inputs"), positive("sums"), positive("replicas"),
                           integer("seed")};
  }

  DomainSetSpec selector() const {
    DomainSetSpec s;
    s.gamma_size = real("gamma_size");
    s.gamma_noise = real("gamma_noise");
    const auto& ctx = word("context");
    if (ctx == "data")
      s.context = ContextSource::Data;
    else if (ctx == "grid")
      s.context = ContextSource::Grid;
    else
      throw InvalidArgument("context must be 'data' or 'grid'");
    const auto& csi = word("csi_values");
    if (csi == "reduced")
      s.csi_values = CsiValues::Reduced;
    else if (csi == "full")
      s.csi_values = CsiValues::Full;
    else
      throw InvalidArgument("csi_values must be 'reduced' or 'full'");
    const auto& cp = word("cause_pairs");
    if (cp == "all")
      s.cause_pairs = CausePairs::All;
    else if (cp == "adjacent")
      s.cause_pairs = CausePairs::Adjacent;
    else if (cp == "nonadjacent")
      s.cause_pairs = CausePairs::NonAdjacent;
    else
      throw InvalidArgument("cause_pairs must be 'all', 'adjacent' or 'nonadjacent'");
    return s;
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> flags_;
  std::string config_path_;
};

std::vector<GroundedConstraint> ground_advice(const std::string& advice_path, const VariableSchema& schema,
                                              const Dataset& data, const Settings& settings) {
  std::vector<GroundedConstraint> out;
  if (advice_path.empty()) return out;
  // Noise is applied once over the file's pooled groundings.
  auto selector = settings.selector();
  const double noise = selector.gamma_noise;
  selector.gamma_noise = 0.0;
  const auto seed = settings.integer("seed");
  auto constraints = load_advice(advice_path, schema);
  for (std::size_t c = 0; c < constraints.size(); ++c) {
    constraints[c].selector = selector;
    out.push_back(ground_constraint(constraints[c], schema, data, seed + c));
  }
  return inject_noise(std::move(out), noise, data, seed);
}

// Trains a fresh random structure; used by train and ablate.
TrainReport train_model(Circuit& circuit, const Dataset& data, const std::vector<GroundedConstraint>& grounded,
                        const Settings& settings, const IterationHook& hook = {}) {
  const auto config = settings.train_config();
  if (grounded.empty()) return fit_mle(circuit, data, config);
  return fit_with_knowledge(circuit, data, grounded, config, hook);
}

double max_abs_delta(const Circuit& circuit, const GroundedConstraint& gc) {
  double m = 0.0;
  for (double d : violation_values(circuit, gc.groundings)) m = std::max(m, std::abs(d));
  return m;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size() || item.empty())
      throw InvalidArgument("bad value '" + item + "' in --values");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("--values is empty");
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key or value");
    if (!out.emplace(key, value).second)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"pcforge: probabilistic circuits trained with domain knowledge"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate synthetic data");
  gen->require_subcommand(1);
  std::string bn_path, out_path, schema_out, data_path, schema_path, pair_mode = "permute";
  std::size_t n = 0, k = 2;
  std::uint64_t seed = 0;
  double lo = 0.0, hi = 2.0 * std::numbers::pi;
  auto* gen_bn = gen->add_subcommand("bn", "ancestral samples from a .bn fixture");
  gen_bn->add_option("--bn", bn_path, "network file")->required();
  gen_bn->add_option("-n", n, "rows")->required();
  gen_bn->add_option("--seed", seed);
  gen_bn->add_option("--out", out_path, "CSV output")->required();
  gen_bn->add_option("--schema-out", schema_out, "write the network's schema file");
  auto* gen_helix_cmd = gen->add_subcommand("helix", "noisy 3D helix");
  gen_helix_cmd->add_option("-n", n, "rows")->required();
  gen_helix_cmd->add_option("--lo", lo, "lower end of the x range");
  gen_helix_cmd->add_option("--hi", hi, "upper end of the x range");
  gen_helix_cmd->add_option("--seed", seed);
  gen_helix_cmd->add_option("--out", out_path, "CSV output")->required();
  gen_helix_cmd->add_option("--schema-out", schema_out, "write the x,y,z schema file");
  auto* gen_pairs = gen->add_subcommand("pairs", "similar-pair domain sets");
  gen_pairs->add_option("--mode", pair_mode, "permute | helix")->check(CLI::IsMember({"permute", "helix"}));
  gen_pairs->add_option("--data", data_path, "CSV (permute mode)");
  gen_pairs->add_option("--schema", schema_path, "schema file (permute mode)");
  gen_pairs->add_option("-k", k, "permutations per row (permute mode)");
  gen_pairs->add_option("-n", n, "pair count (helix mode)");
  gen_pairs->add_option("--seed", seed);
  gen_pairs->add_option("--out", out_path, "pairs CSV output")->required();

  // train
  auto* train = app.add_subcommand("train", "fit a random circuit, optionally with advice");
  Settings train_settings;
  std::string advice_path, model_path, report_path, dump_path;
  train->add_option("--data", data_path, "training CSV")->required();
  train->add_option("--schema", schema_path, "schema file")->required();
  train->add_option("--advice", advice_path, "advice file");
  train->add_option("--out", model_path, "checkpoint output")->required();
  train->add_option("--report", report_path, "report output (default <out>.report)");
  train->add_option("--dump", dump_path, "write grounded violations here");
  train_settings.add_flags(*train);

  // eval
  auto* eval = app.add_subcommand("eval", "mean log-likelihood of a dataset");
  eval->add_option("--model", model_path, "checkpoint")->required();
  eval->add_option("--data", data_path, "CSV")->required();

  // sample
  auto* samp = app.add_subcommand("sample", "draw samples from a model");
  samp->add_option("--model", model_path, "checkpoint")->required();
  samp->add_option("-n", n, "sample count")->required();
  samp->add_option("--seed", seed);
  samp->add_option("--out", out_path, "CSV output (default: stdout)");

  // validate
  auto* val = app.add_subcommand("validate", "structural report of a model");
  val->add_option("--model", model_path, "checkpoint")->required();

  // check
  auto* chk = app.add_subcommand("check", "per-constraint violation audit");
  Settings check_settings;
  chk->add_option("--model", model_path, "checkpoint")->required();
  chk->add_option("--advice", advice_path, "advice file")->required();
  chk->add_option("--data", data_path, "CSV")->required();
  chk->add_option("--dump", dump_path, "write grounded violations here");
  check_settings.add_flags(*chk);

  // ablate
  auto* abl = app.add_subcommand("ablate", "repeated train/eval runs over one setting");
  Settings ablate_settings;
  std::string sweep, values, test_path;
  abl->add_option("--sweep", sweep, "gamma_size | gamma_noise | lambda")
      ->required()
      ->check(CLI::IsMember({"gamma_size", "gamma_noise", "lambda"}));
  abl->add_option("--values", values, "comma-separated values")->required();
  abl->add_option("--data", data_path, "training CSV")->required();
  abl->add_option("--schema", schema_path, "schema file")->required();
  abl->add_option("--advice", advice_path, "advice file")->required();
  abl->add_option("--test", test_path, "held-out CSV (default: training data)");
  ablate_settings.add_flags(*abl);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) err << app.help();
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      if (gen_bn->parsed()) {
        const auto bn = load_bn(bn_path);
        save_csv(sample_bn(bn, n, seed), out_path);
        if (!schema_out.empty()) write_text_file(schema_out, format_schema(bn.schema));
      } else if (gen_helix_cmd->parsed()) {
        const auto data = gen_helix(n, lo, hi, seed);
        save_csv(data, out_path);
        if (!schema_out.empty()) write_text_file(schema_out, format_schema(data.schema()));
      } else {
        if (pair_mode == "helix") {
          const auto pairs = gen_helix_pairs(n, seed);
          const VariableSchema schema({Variable::continuous("x"), Variable::continuous("y"), Variable::continuous("z")});
          write_text_file(out_path, format_pairs_csv(pairs, schema));
        } else {
          if (data_path.empty() || schema_path.empty()) throw InvalidArgument("permute mode needs --data and --schema");
          const auto schema = load_schema(schema_path);
          const auto data = load_csv(data_path, schema);
          write_text_file(out_path, format_pairs_csv(gen_permutation_pairs(data, k, seed), schema));
        }
      }
      return kOk;
    }

    if (train->parsed()) {
      train_settings.resolve(*train);
      const auto schema = load_schema(schema_path);
      const auto data = load_csv(data_path, schema);
      const auto grounded = ground_advice(advice_path, schema, data, train_settings);
      if (!dump_path.empty()) write_text_file(dump_path, dump_grounded(grounded, schema));
      Circuit circuit = build_random_structure(schema, train_settings.structure());
      const auto report =
          train_model(circuit, data, grounded, train_settings, [&](std::size_t, const Circuit& c) { save(c, model_path); });
      save(circuit, model_path);
      write_text_file(report_path.empty() ? model_path + ".report" : report_path, format_report(report));
      out << "train_ll " << number(evaluate(circuit, data)) << '\n';
      out << "iterations " << report.outer.size() << '\n';
      out << "zeta " << number(report.final_violation) << '\n';
      if (!grounded.empty()) {
        const bool ok = report.final_violation <= train_settings.real("violation_tol");
        out << "satisfied " << (ok ? "yes" : "no") << '\n';
      }
      return kOk;
    }

    if (eval->parsed()) {
      const Circuit circuit = load(model_path);
      const auto data = load_csv(data_path, circuit.schema());
      out << std::setprecision(17) << evaluate(circuit, data) << '\n';
      return kOk;
    }

    if (samp->parsed()) {
      const Circuit circuit = load(model_path);
      Dataset data(circuit.schema());
      for (const auto& row : sample(circuit, n, seed)) data.append(row);
      if (out_path.empty())
        out << format_csv(data);
      else
        save_csv(data, out_path);
      return kOk;
    }

    if (val->parsed()) {
      const Circuit circuit = load(model_path);
      const auto report = validate(circuit);
      if (report.ok()) {
        out << "ok nodes " << circuit.size() << " parameters " << circuit.parameter_count() << '\n';
        return kOk;
      }
      for (const auto& v : report.violations)
        out << to_string(v.kind) << " node " << v.node << ": " << v.message << '\n';
      return kData;
    }

    if (chk->parsed()) {
      check_settings.resolve(*chk);
      const Circuit circuit = load(model_path);
      const auto data = load_csv(data_path, circuit.schema());
      const auto grounded = ground_advice(advice_path, circuit.schema(), data, check_settings);
      if (!dump_path.empty()) write_text_file(dump_path, dump_grounded(grounded, circuit.schema()));
      double total = 0.0, worst = 0.0;
      for (std::size_t c = 0; c < grounded.size(); ++c) {
        const double z = penalty(circuit, grounded[c].constraint, grounded[c].groundings);
        const double m = max_abs_delta(circuit, grounded[c]);
        total += z;
        worst = std::max(worst, m);
        out << "constraint " << c << " kind " << to_string(grounded[c].constraint.kind()) << " groundings "
            << grounded[c].groundings.size() << " zeta " << number(z) << " max_abs_delta " << number(m) << '\n';
      }
      out << "total zeta " << number(total) << " max_abs_delta " << number(worst) << '\n';
      return kOk;
    }

    if (abl->parsed()) {
      ablate_settings.resolve(*abl);
      const auto schema = load_schema(schema_path);
      const auto data = load_csv(data_path, schema);
      const auto test = test_path.empty() ? data : load_csv(test_path, schema);
      out << "sweep value test_ll train_ll zeta iterations\n";
      for (double v : parse_list(values)) {
        Settings s = ablate_settings;
        s.set(sweep == "lambda" ? "lambda0" : sweep, number(v));
        const auto grounded = ground_advice(advice_path, schema, data, s);
        Circuit circuit = build_random_structure(schema, s.structure());
        const auto report = train_model(circuit, data, grounded, s);
        out << sweep << ' ' << number(v) << ' ' << number(evaluate(circuit, test)) << ' '
            << number(evaluate(circuit, data)) << ' ' << number(report.final_violation) << ' '
            << report.outer.size() << '\n';
      }
      return kOk;
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace pcforge::cli
