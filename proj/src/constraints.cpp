#include "pcforge/constraints.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pcforge/errors.hpp"
#include "pcforge/math.hpp"

namespace pcforge {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// Equals atoms for every variable of `x` not in `skip`.
Event point_except(std::span<const double> x, std::initializer_list<VarIndex> skip) {
  std::vector<Atom> atoms;
  for (VarIndex v = 0; v < x.size(); ++v)
    if (std::find(skip.begin(), skip.end(), v) == skip.end()) atoms.push_back(Atom::equals(v, x[v]));
  return Event(std::move(atoms));
}

Event with_atoms(const Event& base, std::initializer_list<Atom> extra) {
  std::vector<Atom> atoms = base.atoms();
  atoms.insert(atoms.end(), extra.begin(), extra.end());
  return Event(std::move(atoms));
}

ViolationTerm make_term(double sign, Event f, Event g) {
  ViolationTerm t{sign, {std::move(f), std::move(g)}, std::nullopt};
  t.joint = conjoin(t.query.f, t.query.g);
  return t;
}

std::vector<double> sorted_column(const Dataset& data, VarIndex v) {
  std::vector<double> col(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) col[r] = data.at(r, v);
  std::sort(col.begin(), col.end());
  return col;
}

// Distinct observed categories (discrete) or the quartiles (continuous).
std::vector<double> support_points(const Dataset& data, VarIndex v) {
  auto col = sorted_column(data, v);
  if (data.schema()[v].is_discrete()) {
    col.erase(std::unique(col.begin(), col.end()), col.end());
    return col;
  }
  std::vector<double> q;
  for (double p : {0.25, 0.5, 0.75}) {
    const double pos = p * static_cast<double>(col.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, col.size() - 1);
    q.push_back(col[lo] + (pos - static_cast<double>(lo)) * (col[hi] - col[lo]));
  }
  q.erase(std::unique(q.begin(), q.end()), q.end());
  return q;
}

std::vector<double> thresholds(const Dataset& data, VarIndex v) {
  auto pts = support_points(data, v);
  if (data.schema()[v].is_discrete() && !pts.empty()) pts.pop_back();
  return pts;
}

std::vector<std::pair<double, double>> cause_pairs(const Dataset& data, VarIndex v, CausePairs mode) {
  const auto pts = support_points(data, v);
  std::vector<std::pair<double, double>> out;
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      const bool adjacent = b == a + 1;
      if ((mode == CausePairs::Adjacent && !adjacent) || (mode == CausePairs::NonAdjacent && adjacent)) continue;
      out.emplace_back(pts[a], pts[b]);
    }
  return out;
}

// Context rows for monotonic and synergy groundings. Returned rows are full
// width; the entries of `skip` are zeroed and ignored by instantiate().
std::vector<std::vector<double>> contexts(const Dataset& data, const VariableSchema& schema, ContextSource source,
                                          std::initializer_list<VarIndex> skip) {
  const std::size_t n = schema.size();
  auto skipped = [&](VarIndex v) { return std::find(skip.begin(), skip.end(), v) != skip.end(); };
  std::vector<std::vector<double>> out;
  if (source == ContextSource::Data) {
    std::set<std::vector<double>> seen;
    for (std::size_t r = 0; r < data.rows(); ++r) {
      std::vector<double> row(data.row(r).begin(), data.row(r).end());
      for (VarIndex v : skip) row[v] = 0.0;
      if (seen.insert(row).second) out.push_back(std::move(row));
    }
    return out;
  }
  std::size_t total = 1;
  for (VarIndex v = 0; v < n; ++v) {
    if (skipped(v)) continue;
    if (!schema[v].is_discrete()) throw InvalidArgument("grid contexts need discrete context variables");
    total *= static_cast<std::size_t>(schema[v].cardinality);
    if (total > kContextGridCap)
      throw InvalidArgument("context grid exceeds " + std::to_string(kContextGridCap) + " assignments");
  }
  std::vector<double> row(n, 0.0);
  for (std::size_t k = 0; k < total; ++k) {
    out.push_back(row);
    for (VarIndex v = n; v-- > 0;) {  // odometer, last variable fastest
      if (skipped(v)) continue;
      if (++row[v] < schema[v].cardinality) break;
      row[v] = 0.0;
    }
  }
  return out;
}

GroundingKey row_key(std::span<const double> row) {
  GroundingKey k;
  k.x.assign(row.begin(), row.end());
  return k;
}

bool satisfies(std::span<const double> row, const Event& e) {
  for (const auto& a : e.atoms()) {
    if (a.relation == Relation::Equals && row[a.variable] != a.value) return false;
    if (a.relation == Relation::AtMost && row[a.variable] > a.value) return false;
  }
  return true;
}

std::vector<GroundingKey> grounding_keys(const Constraint& c, const VariableSchema& schema, const Dataset& data,
                                         std::uint64_t seed) {
  const std::size_t n = schema.size();
  const auto& sel = c.selector;
  std::vector<GroundingKey> keys;
  auto need_data = [&] {
    if (data.rows() == 0) throw DataError("empty domain set: " + to_string(c.kind()) + " grounding needs data rows");
  };
  std::visit(
      overloaded{
          [&](const GeneralizationSpec& s) {
            std::vector<PointPair> pairs = s.pairs;
            if (s.permutations > 0) {
              need_data();
              pairs = gen_permutation_pairs(data, s.permutations, seed);
            }
            for (auto& p : pairs) {
              GroundingKey k;
              k.x = std::move(p.x);
              k.x_prime = std::move(p.x_prime);
              keys.push_back(std::move(k));
            }
          },
          [&](const PrivilegedSpec& s) {
            need_data();
            for (std::size_t r = 0; r < data.rows(); ++r)
              for (VarIndex v = 0; v < n; ++v) {
                if (std::find(s.privileged.begin(), s.privileged.end(), v) != s.privileged.end()) continue;
                GroundingKey k;
                k.x.assign(data.row(r).begin(), data.row(r).end());
                k.variable = v;
                keys.push_back(std::move(k));
              }
          },
          [&](const CsiSpec& s) {
            const int drop = sel.csi_values == CsiValues::Reduced ? 1 : 0;
            std::vector<double> base(n, 0.0);
            for (const auto& a : s.context.atoms()) base[a.variable] = a.value;
            for (int vi = 0; vi < schema[s.i].cardinality - drop; ++vi)
              for (int vj = 0; vj < schema[s.j].cardinality - drop; ++vj)
                for (int dir = 0; dir < 2; ++dir) {
                  GroundingKey k;
                  k.x = base;
                  k.x[s.i] = vi;
                  k.x[s.j] = vj;
                  k.csi_direction = dir;
                  keys.push_back(std::move(k));
                }
          },
          [&](const ImbalanceSpec& s) {
            need_data();
            const double keep = s.polarity == Polarity::FalseNegative ? 1.0 : 0.0;
            for (std::size_t r = 0; r < data.rows(); ++r)
              if (data.at(r, s.target) == keep) keys.push_back(row_key(data.row(r)));
          },
          [&](const MonotonicSpec& s) {
            need_data();
            const auto vs = thresholds(data, s.effect);
            const auto pairs = cause_pairs(data, s.cause, sel.cause_pairs);
            for (const auto& ctx : contexts(data, schema, sel.context, {s.cause, s.effect}))
              for (double v : vs)
                for (auto [lo, hi] : pairs) {
                  GroundingKey k;
                  k.x = ctx;
                  k.v = v;
                  k.lo = lo;
                  k.hi = hi;
                  keys.push_back(std::move(k));
                }
          },
          [&](const SynergySpec& s) {
            need_data();
            const auto vs = thresholds(data, s.effect);
            const auto p1 = cause_pairs(data, s.cause1, sel.cause_pairs);
            const auto p2 = cause_pairs(data, s.cause2, sel.cause_pairs);
            for (const auto& ctx : contexts(data, schema, sel.context, {s.cause1, s.cause2, s.effect}))
              for (double v : vs)
                for (auto [lo, hi] : p1)
                  for (auto [lo2, hi2] : p2) {
                    GroundingKey k;
                    k.x = ctx;
                    k.v = v;
                    k.lo = lo;
                    k.hi = hi;
                    k.lo2 = lo2;
                    k.hi2 = hi2;
                    keys.push_back(std::move(k));
                  }
          },
          [&](const PreferenceSpec& s) {
            need_data();
            for (std::size_t r = 0; r < data.rows(); ++r)
              if (satisfies(data.row(r), s.rule)) keys.push_back(row_key(data.row(r)));
          },
      },
      c.body);
  return keys;
}

}  // namespace

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::Generalization: return "generalization";
    case ConstraintKind::Privileged: return "privileged";
    case ConstraintKind::CSI: return "csi";
    case ConstraintKind::ClassImbalance: return "imbalance";
    case ConstraintKind::Monotonic: return "monotonic";
    case ConstraintKind::Synergy: return "synergy";
    case ConstraintKind::Preference: return "preference";
  }
  return "?";
}

bool is_equality(ConstraintKind kind) {
  return kind == ConstraintKind::Generalization || kind == ConstraintKind::Privileged || kind == ConstraintKind::CSI ||
         kind == ConstraintKind::Preference;
}

void check_constraint(const Constraint& c, const VariableSchema& schema) {
  const std::size_t n = schema.size();
  auto var = [&](VarIndex v, const char* role) {
    if (v >= n) throw InvalidArgument(std::string(role) + " variable index out of range");
  };
  auto discrete = [&](VarIndex v, const char* role) {
    var(v, role);
    if (!schema[v].is_discrete()) throw InvalidArgument(std::string(role) + " '" + schema[v].name + "' must be discrete");
  };
  auto direction = [](int d) {
    if (d != 1 && d != -1) throw InvalidArgument("direction must be +1 or -1");
  };
  if (is_equality(c.kind())) {
    if (c.epsilon != 0.0) throw InvalidArgument(to_string(c.kind()) + " is an equality constraint; epsilon must be 0");
  } else if (!(c.epsilon > 0.0) || !std::isfinite(c.epsilon)) {
    throw InvalidArgument(to_string(c.kind()) + " is an inequality constraint; epsilon must be > 0");
  }
  if (!(c.selector.gamma_size >= 0.0) || !std::isfinite(c.selector.gamma_size))
    throw InvalidArgument("gamma_size must be finite and >= 0");
  if (!(c.selector.gamma_noise >= 0.0 && c.selector.gamma_noise <= 1.0))
    throw InvalidArgument("gamma_noise must lie in [0, 1]");

  std::visit(overloaded{
                 [&](const GeneralizationSpec& s) {
                   if ((s.permutations > 0) == !s.pairs.empty())
                     throw InvalidArgument("generalization needs either explicit pairs or a permutation count");
                   for (const auto& p : s.pairs) {
                     check_row(p.x, schema);
                     check_row(p.x_prime, schema);
                   }
                 },
                 [&](const PrivilegedSpec& s) {
                   if (s.privileged.empty()) throw InvalidArgument("privileged needs at least one variable");
                   std::set<VarIndex> seen;
                   for (VarIndex v : s.privileged) {
                     var(v, "privileged");
                     if (!seen.insert(v).second) throw InvalidArgument("duplicate privileged variable");
                   }
                   if (seen.size() == n) throw InvalidArgument("privileged variables leave nothing observed");
                 },
                 [&](const CsiSpec& s) {
                   discrete(s.i, "csi");
                   discrete(s.j, "csi");
                   if (s.i == s.j) throw InvalidArgument("csi needs two distinct variables");
                   check_event(s.context, schema);
                   for (const auto& a : s.context.atoms()) {
                     if (a.relation != Relation::Equals) throw InvalidArgument("csi context must be an assignment");
                     if (a.variable == s.i || a.variable == s.j)
                       throw InvalidArgument("csi context may not mention the independent variables");
                   }
                 },
                 [&](const ImbalanceSpec& s) {
                   discrete(s.target, "imbalance target");
                   if (!(s.threshold >= 0.0 && s.threshold <= 1.0))
                     throw InvalidArgument("imbalance threshold must lie in [0, 1]");
                 },
                 [&](const MonotonicSpec& s) {
                   var(s.cause, "cause");
                   var(s.effect, "effect");
                   if (s.cause == s.effect) throw InvalidArgument("monotonic cause and effect must differ");
                   direction(s.direction);
                 },
                 [&](const SynergySpec& s) {
                   var(s.cause1, "cause");
                   var(s.cause2, "cause");
                   var(s.effect, "effect");
                   if (s.cause1 == s.cause2 || s.cause1 == s.effect || s.cause2 == s.effect)
                     throw InvalidArgument("synergy variables must be distinct");
                   direction(s.direction);
                 },
                 [&](const PreferenceSpec& s) {
                   discrete(s.target, "preference target");
                   check_event(s.rule, schema);
                   if (s.rule.find(s.target)) throw InvalidArgument("preference rule may not mention its target");
                   if (!(s.p >= 0.0 && s.p <= 1.0)) throw InvalidArgument("preference probability must lie in [0, 1]");
                 },
             },
             c.body);
}

GroundedViolation instantiate(const Constraint& c, const GroundingKey& key, std::size_t n) {
  if (key.x.size() != n) throw InvalidArgument("grounding anchor has the wrong width");
  GroundedViolation gv;
  gv.kind = c.kind();
  gv.epsilon = c.epsilon;
  gv.key = key;
  const auto& x = key.x;
  std::visit(
      overloaded{
          [&](const GeneralizationSpec&) {
            gv.terms.push_back(make_term(+1.0, Event::point(x), Event()));
            gv.terms.push_back(make_term(-1.0, Event::point(key.x_prime), Event()));
          },
          [&](const PrivilegedSpec& s) {
            const VarIndex i = key.variable;
            std::vector<Atom> observed;
            for (VarIndex v = 0; v < n; ++v)
              if (v != i && std::find(s.privileged.begin(), s.privileged.end(), v) == s.privileged.end())
                observed.push_back(Atom::equals(v, x[v]));
            const Event f({Atom::equals(i, x[i])});
            gv.terms.push_back(make_term(+1.0, f, Event(std::move(observed))));
            gv.terms.push_back(make_term(-1.0, f, point_except(x, {i})));
          },
          [&](const CsiSpec& s) {
            const VarIndex a = key.csi_direction == 0 ? s.i : s.j;
            const VarIndex b = key.csi_direction == 0 ? s.j : s.i;
            const Event f({Atom::equals(a, x[a])});
            gv.terms.push_back(make_term(+1.0, f, with_atoms(s.context, {Atom::equals(b, x[b])})));
            gv.terms.push_back(make_term(-1.0, f, s.context));
          },
          [&](const ImbalanceSpec& s) {
            const double value = s.polarity == Polarity::FalseNegative ? 0.0 : 1.0;
            gv.terms.push_back(make_term(+1.0, Event({Atom::equals(s.target, value)}), point_except(x, {s.target})));
            gv.constant = -s.threshold;
          },
          [&](const MonotonicSpec& s) {
            const Event ctx = point_except(x, {s.cause, s.effect});
            const Event f({Atom::at_most(s.effect, key.v)});
            const double d = s.direction;
            gv.terms.push_back(make_term(+d, f, with_atoms(ctx, {Atom::equals(s.cause, key.hi)})));
            gv.terms.push_back(make_term(-d, f, with_atoms(ctx, {Atom::equals(s.cause, key.lo)})));
          },
          [&](const SynergySpec& s) {
            const Event ctx = point_except(x, {s.cause1, s.cause2, s.effect});
            const Event f({Atom::at_most(s.effect, key.v)});
            const double d = s.direction;
            auto g = [&](double a, double b) {
              return with_atoms(ctx, {Atom::equals(s.cause1, a), Atom::equals(s.cause2, b)});
            };
            gv.terms.push_back(make_term(+d, f, g(key.lo, key.lo2)));
            gv.terms.push_back(make_term(+d, f, g(key.hi, key.hi2)));
            gv.terms.push_back(make_term(-d, f, g(key.hi, key.lo2)));
            gv.terms.push_back(make_term(-d, f, g(key.lo, key.hi2)));
          },
          [&](const PreferenceSpec& s) {
            gv.terms.push_back(make_term(+1.0, Event({Atom::equals(s.target, 1.0)}), point_except(x, {s.target})));
            gv.constant = -s.p;
          },
      },
      c.body);
  return gv;
}

std::vector<GroundedViolation> ground(const Constraint& c, const VariableSchema& schema, const Dataset& data,
                                      std::uint64_t seed) {
  check_constraint(c, schema);
  if (data.rows() > 0 && data.schema() != schema) throw InvalidArgument("dataset schema differs from the constraint schema");
  std::mt19937_64 rng(seed);
  auto keys = grounding_keys(c, schema, data, rng());

  if (data.rows() > 0) {
    const auto budget = static_cast<std::size_t>(std::llround(c.selector.gamma_size * static_cast<double>(data.rows())));
    if (budget == 0) throw DataError("empty domain set: " + to_string(c.kind()) + " sample budget is 0");
    if (keys.size() > budget) {
      std::vector<std::size_t> idx(keys.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(budget);
      std::sort(idx.begin(), idx.end());
      std::vector<GroundingKey> kept;
      kept.reserve(budget);
      for (std::size_t i : idx) kept.push_back(std::move(keys[i]));
      keys = std::move(kept);
    }
  }
  if (keys.empty()) throw DataError("empty domain set: " + to_string(c.kind()) + " constraint has no groundings");

  std::vector<GroundedViolation> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(instantiate(c, k, schema.size()));
  return inject_noise(c, std::move(out), c.selector.gamma_noise, data, rng());
}

GroundedConstraint ground_constraint(const Constraint& c, const VariableSchema& schema, const Dataset& data,
                                     std::uint64_t seed) {
  return GroundedConstraint{c, ground(c, schema, data, seed)};
}

namespace {

// Moves a grounding's anchor onto uniformly drawn data rows.
GroundedViolation reanchor(const Constraint& c, GroundingKey key, const Dataset& data, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, data.rows() - 1);
  const auto row = data.row(pick(rng));
  key.x.assign(row.begin(), row.end());
  if (c.kind() == ConstraintKind::Generalization) {
    const auto other = data.row(pick(rng));
    key.x_prime.assign(other.begin(), other.end());
  }
  return instantiate(c, key, data.cols());
}

}  // namespace

std::vector<GroundedViolation> inject_noise(const Constraint& c, std::vector<GroundedViolation> grounded,
                                            double gamma_noise, const Dataset& data, std::uint64_t seed) {
  if (!(gamma_noise >= 0.0 && gamma_noise <= 1.0)) throw InvalidArgument("gamma_noise must lie in [0, 1]");
  const auto count = static_cast<std::size_t>(std::floor(gamma_noise * static_cast<double>(grounded.size()) + 1e-9));
  if (count == 0) return grounded;
  if (data.rows() == 0) throw DataError("noise injection needs data rows");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(grounded.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t k = 0; k < count; ++k) grounded[idx[k]] = reanchor(c, grounded[idx[k]].key, data, rng);
  return grounded;
}

std::vector<GroundedConstraint> inject_noise(std::vector<GroundedConstraint> grounded, double gamma_noise,
                                             const Dataset& data, std::uint64_t seed) {
  if (!(gamma_noise >= 0.0 && gamma_noise <= 1.0)) throw InvalidArgument("gamma_noise must lie in [0, 1]");
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  for (std::size_t c = 0; c < grounded.size(); ++c)
    for (std::size_t k = 0; k < grounded[c].groundings.size(); ++k) idx.emplace_back(c, k);
  const auto count = static_cast<std::size_t>(std::floor(gamma_noise * static_cast<double>(idx.size()) + 1e-9));
  if (count == 0) return grounded;
  if (data.rows() == 0) throw DataError("noise injection needs data rows");
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t n = 0; n < count; ++n) {
    auto& [constraint, groundings] = grounded[idx[n].first];
    auto& g = groundings[idx[n].second];
    g = reanchor(constraint, g.key, data, rng);
  }
  return grounded;
}

// ---------------------------------------------------------------------------
// Evaluation

ViolationRecorder::ViolationRecorder(CircuitTape& tape, std::span<const GroundedConstraint> constraints)
    : tape_(&tape), constraints_(constraints) {
  handles_.resize(constraints.size());
  for (std::size_t c = 0; c < constraints.size(); ++c) {
    const auto& gs = constraints[c].groundings;
    handles_[c].resize(gs.size());
    for (std::size_t k = 0; k < gs.size(); ++k)
      for (const auto& term : gs[k].terms) {
        if (!term.joint) {
          handles_[c][k].emplace_back(std::nullopt);
          continue;
        }
        TermHandles h{tape.request(*term.joint), std::nullopt};
        if (!term.query.g.empty()) h.given = tape.request(term.query.g);
        handles_[c][k].emplace_back(h);
      }
  }
}

Var ViolationRecorder::delta(std::size_t c, std::size_t k) {
  const auto& gv = constraints_[c].groundings.at(k);
  Tape& t = tape_->tape();
  std::vector<Var> parts;
  for (std::size_t m = 0; m < gv.terms.size(); ++m) {
    const auto& h = handles_[c][k][m];
    if (!h) continue;
    Var lp = tape_->log_prob(h->joint);
    if (h->given) {
      if (tape_->log_value(*h->given) < math::kLogUnderflow)
        throw ConditioningError("conditioning on a null event in a " + to_string(gv.kind) + " grounding");
      lp = t.sub(lp, tape_->log_prob(*h->given));
    }
    parts.push_back(t.scale(t.exp(lp), gv.terms[m].sign));
  }
  return t.shift(t.sum(parts), gv.constant + gv.epsilon);
}

Var ViolationRecorder::penalty(std::size_t c) {
  Tape& t = tape_->tape();
  const bool equality = is_equality(constraints_[c].constraint.kind());
  std::vector<Var> parts;
  for (std::size_t k = 0; k < constraints_[c].groundings.size(); ++k) {
    const Var d = delta(c, k);
    parts.push_back(equality ? t.abs(d) : t.square(t.max0(d)));
  }
  return t.sum(parts);
}

Var ViolationRecorder::total() {
  std::vector<Var> parts;
  for (std::size_t c = 0; c < constraints_.size(); ++c) parts.push_back(penalty(c));
  return tape_->tape().sum(parts);
}

std::vector<double> violation_values(const Circuit& circuit, std::span<const GroundedViolation> grounded) {
  Evaluator evaluator(circuit);
  CircuitTape tape(evaluator);
  const GroundedConstraint gc{Constraint{}, {grounded.begin(), grounded.end()}};
  ViolationRecorder rec(tape, std::span(&gc, 1));
  tape.evaluate();
  std::vector<double> out;
  out.reserve(grounded.size());
  for (std::size_t k = 0; k < grounded.size(); ++k) out.push_back(rec.delta(0, k).value());
  return out;
}

double violation_value(const Circuit& circuit, const GroundedViolation& v) {
  return violation_values(circuit, std::span(&v, 1)).front();
}

double penalty_from_deltas(ConstraintKind kind, std::span<const double> deltas) {
  double z = 0.0;
  for (double d : deltas) {
    if (is_equality(kind)) {
      z += std::abs(d);
    } else {
      const double m = std::max(0.0, d);
      z += m * m;
    }
  }
  return z;
}

double penalty(const Circuit& circuit, const Constraint& c, std::span<const GroundedViolation> grounded) {
  if (grounded.empty()) throw InvalidArgument("penalty needs at least one grounding");
  return penalty_from_deltas(c.kind(), violation_values(circuit, grounded));
}

double total_violation(const Circuit& circuit, std::span<const GroundedConstraint> constraints) {
  double z = 0.0;
  for (const auto& gc : constraints) z += penalty(circuit, gc.constraint, gc.groundings);
  return z;
}

// ---------------------------------------------------------------------------
// Audit dump

std::string format_event(const Event& e, const VariableSchema& schema) {
  if (e.empty()) return "true";
  std::string out;
  for (const auto& a : e.atoms()) {
    if (!out.empty()) out += ',';
    out += schema[a.variable].name;
    out += a.relation == Relation::AtMost ? "<=" : "=";
    out += format_number(a.value);
  }
  return out;
}

std::string format_grounded(const GroundedViolation& v, const VariableSchema& schema) {
  std::ostringstream out;
  out << to_string(v.kind) << " eps=" << format_number(v.epsilon) << " const=" << format_number(v.constant);
  for (const auto& t : v.terms) {
    out << ' ' << (t.sign < 0 ? '-' : '+') << "P(" << format_event(t.query.f, schema) << " | "
        << format_event(t.query.g, schema) << ')';
    if (!t.joint) out << '!';
  }
  return out.str();
}

std::string dump_grounded(std::span<const GroundedConstraint> constraints, const VariableSchema& schema) {
  std::ostringstream out;
  for (std::size_t c = 0; c < constraints.size(); ++c)
    for (std::size_t k = 0; k < constraints[c].groundings.size(); ++k)
      out << c << ' ' << k << ' ' << format_grounded(constraints[c].groundings[k], schema) << '\n';
  return out.str();
}

}  // namespace pcforge
