#pragma once

// Deterministic experiment runner: per-trial ensembles, verification suites,
// norm reports, parameter sweeps, and their JSON/CSV serializations.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bloom/bmo.hpp"
#include "bloom/dyadic.hpp"
#include "bloom/normest.hpp"
#include "bloom/operators.hpp"
#include "bloom/stopping.hpp"
#include "bloom/weights.hpp"

namespace bloom {

using Json = nlohmann::ordered_json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Suite { identities, equivalences, paraproduct_bounds, commutator_bounds, carleson, ppott, stopping, neccon_chain };

inline constexpr Suite all_suites[] = {Suite::identities,        Suite::equivalences, Suite::paraproduct_bounds,
                                       Suite::commutator_bounds, Suite::carleson,     Suite::ppott,
                                       Suite::stopping,          Suite::neccon_chain};

inline std::string_view to_string(Suite s) {
  switch (s) {
    case Suite::identities: return "identities";
    case Suite::equivalences: return "equivalences";
    case Suite::paraproduct_bounds: return "paraproduct-bounds";
    case Suite::commutator_bounds: return "commutator-bounds";
    case Suite::carleson: return "carleson";
    case Suite::ppott: return "ppott";
    case Suite::stopping: return "stopping";
    case Suite::neccon_chain: return "neccon-chain";
  }
  return "?";
}

inline Suite parse_suite(std::string_view name) {
  for (auto s : all_suites)
    if (to_string(s) == name) return s;
  throw ConfigError("unknown suite '" + std::string(name) + "'");
}

/// Either a generated ensemble member or literal leaf values.
struct FieldSpec {
  EnsembleSpec spec;
  std::optional<std::vector<double>> leaves;
};

struct Tolerances {
  double identity = 1e-11;
  double energy = 1e-10;
  double duality = 1e-9;
  double lower_bound = 1e-6;
  double carleson = 1e-10;
  /// Optional hard caps on measured quantities; unset means record only.
  std::optional<double> chain_ratio;
  std::optional<double> commutator_band;
};

struct ExperimentConfig {
  int depth = 8;
  FieldSpec mu{{.kind = EnsembleKind::cascade}, {}};
  FieldSpec lambda{{.kind = EnsembleKind::cascade}, {}};
  FieldSpec b{{.kind = EnsembleKind::log_symbol}, {}};
  std::vector<Suite> suites{std::begin(all_suites), std::end(all_suites)};
  int trials = 4;
  std::uint64_t seed = 0;
  Tolerances tolerances;
  std::string json_out;
  std::string csv_out;
};

/// Per-trial seed: SplitMix64 of (master seed XOR trial index).
constexpr std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial) { return mix_seed(master ^ trial); }

inline void validate(const ExperimentConfig& c) {
  if (c.trials < 1) throw ConfigError("trials must be at least 1");
  if (c.depth < 2 || c.depth > 14) throw ConfigError("depth must lie in [2, 14]");
  if (c.suites.empty()) throw ConfigError("no suites selected");
  const std::size_t leaves = std::size_t{1} << c.depth;
  for (const auto* f : {&c.mu, &c.lambda, &c.b}) {
    if (f->leaves && f->leaves->size() != leaves)
      throw ConfigError("literal leaves have " + std::to_string(f->leaves->size()) + " entries, depth " +
                        std::to_string(c.depth) + " needs " + std::to_string(leaves));
  }
  for (const auto* f : {&c.mu, &c.lambda})
    if (!f->leaves && is_symbol_kind(f->spec.kind))
      throw ConfigError("weight ensemble cannot be a symbol kind '" + std::string(to_string(f->spec.kind)) + "'");
  try {
    for (const auto* f : {&c.mu, &c.lambda, &c.b}) {
      auto s = f->spec;
      s.depth = c.depth;
      detail::validate(s);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Trial inputs

struct TrialInputs {
  int trial = 0;
  std::uint64_t seed = 0;
  Weight mu;
  Weight lambda;
  StepFunction b;
  StepFunction f;  ///< admissible probe function for the identities
};

namespace detail {

inline Weight make_weight(const FieldSpec& field, int depth, std::uint64_t seed) {
  if (field.leaves) return Weight(StepFunction(DyadicGrid(depth), *field.leaves));
  auto s = field.spec;
  s.depth = depth;
  s.seed = seed;
  return generate_weight(s);
}

inline StepFunction make_symbol(const FieldSpec& field, int depth, std::uint64_t seed) {
  if (field.leaves) return StepFunction(DyadicGrid(depth), *field.leaves);
  auto s = field.spec;
  s.depth = depth;
  s.seed = seed;
  return is_symbol_kind(s.kind) ? generate_symbol(s) : generate_weight(s).function();
}

}  // namespace detail

inline TrialInputs make_trial(const ExperimentConfig& c, int trial) {
  const auto seed = trial_seed(c.seed, static_cast<std::uint64_t>(trial));
  EnsembleSpec probe{.kind = EnsembleKind::haar_sparse_symbol, .depth = c.depth, .seed = derive_seed(seed, 4)};
  probe.sparsity = 0.5;
  return {trial,
          seed,
          detail::make_weight(c.mu, c.depth, derive_seed(seed, 1)),
          detail::make_weight(c.lambda, c.depth, derive_seed(seed, 2)),
          detail::make_symbol(c.b, c.depth, derive_seed(seed, 3)),
          generate_symbol(probe)};
}

// ---------------------------------------------------------------------------
// Records and results

/// Named values in insertion order.
struct Record {
  std::vector<std::pair<std::string, double>> values;

  void set(std::string name, double v) { values.emplace_back(std::move(name), v); }
  double get(std::string_view name) const {
    for (const auto& [k, v] : values)
      if (k == name) return v;
    throw std::out_of_range("no value '" + std::string(name) + "'");
  }
};

/// A hard assertion evaluated on one trial: passes when value <= bound.
struct Check {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool passed() const { return std::isfinite(value) && value <= bound; }
};

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  Record record;
  std::vector<Check> checks;
};

struct CriterionSummary {
  std::string name;
  bool passed = true;
  double worst = 0.0;
  double bound = 0.0;
  int failures = 0;
  std::vector<std::uint64_t> failing_seeds;
};

struct Quantiles {
  double min = 0.0, median = 0.0, q90 = 0.0, max = 0.0;
};

struct SuiteResult {
  Suite suite = Suite::identities;
  std::vector<TrialRecord> trials;
  std::vector<CriterionSummary> criteria;
  std::vector<std::pair<std::string, Quantiles>> quantiles;

  bool passed() const {
    return std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.passed; });
  }
  const CriterionSummary& criterion(std::string_view name) const {
    for (const auto& c : criteria)
      if (c.name == name) return c;
    throw std::out_of_range("no criterion '" + std::string(name) + "'");
  }
  const Quantiles& quantile(std::string_view name) const {
    for (const auto& [k, q] : quantiles)
      if (k == name) return q;
    throw std::out_of_range("no measurement '" + std::string(name) + "'");
  }
};

/// Nearest-rank quantiles; non-finite samples are skipped.
inline Quantiles quantiles_of(std::vector<double> xs) {
  std::erase_if(xs, [](double x) { return !std::isfinite(x); });
  if (xs.empty()) return {NAN, NAN, NAN, NAN};
  std::sort(xs.begin(), xs.end());
  auto rank = [&](double p) {
    const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(xs.size())));
    return xs[std::clamp<std::size_t>(k, 1, xs.size()) - 1];
  };
  return {xs.front(), rank(0.5), rank(0.9), xs.back()};
}

inline double safe_ratio(double a, double b) {
  if (b > 0.0) return a / b;
  return a > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

/// Max/min over a set of positive quantities; 1 when all vanish.
inline double spread(const std::vector<double>& xs) {
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  if (*hi <= 0.0) return 1.0;
  return safe_ratio(*hi, *lo);
}

// ---------------------------------------------------------------------------
// Suites

namespace detail {

inline StepFunction commutator_transpose(const StepFunction& b, const StepFunction& f) {
  return haar_shift_adjoint(pointwise_multiply(b, f)) - pointwise_multiply(b, haar_shift_adjoint(f));
}

/// Operator norms: dense up to the cap, certified Rayleigh lower estimate beyond it.
inline double paraproduct_norm(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  if (mu.depth() <= default_dense_depth_cap) return weighted_operator_norm(paraproduct_matrix(b), mu, lambda);
  return weighted_operator_norm_iterative([&](const StepFunction& f) { return paraproduct(b, f); },
                                          [&](const StepFunction& f) { return paraproduct_adjoint(b, f); }, mu,
                                          lambda)
      .lower;
}

inline double paraproduct_adjoint_norm(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  if (mu.depth() <= default_dense_depth_cap) return weighted_operator_norm(paraproduct_adjoint_matrix(b), mu, lambda);
  return weighted_operator_norm_iterative([&](const StepFunction& f) { return paraproduct_adjoint(b, f); },
                                          [&](const StepFunction& f) { return paraproduct(b, f); }, mu, lambda)
      .lower;
}

inline double shift_norm(const Weight& w) {
  if (w.depth() <= default_dense_depth_cap) return weighted_operator_norm(shift_matrix(w.grid()), w, w);
  return weighted_operator_norm_iterative([](const StepFunction& f) { return haar_shift(f, ShiftMode::truncate); },
                                          [](const StepFunction& f) { return haar_shift_adjoint(f); }, w, w)
      .lower;
}

inline double commutator_norm(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  if (mu.depth() <= default_dense_depth_cap) return weighted_operator_norm(commutator_matrix(b), mu, lambda);
  return weighted_operator_norm_iterative(
             [&](const StepFunction& f) { return commutator_shift(b, f, ShiftMode::truncate); },
             [&](const StepFunction& f) { return commutator_transpose(b, f); }, mu, lambda)
      .lower;
}

inline double relative(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

inline void suite_identities(const TrialInputs& in, const Tolerances& tol, TrialRecord& out) {
  const auto& b = in.b;
  const auto& f = in.f;
  auto& r = out.record;
  const double roundtrip = max_abs_difference(haar_synthesize(haar_analyze(b)), b);
  const auto spec = haar_analyze(b);
  double energy = spec.mean() * spec.mean();
  for (double c : spec.coeffs()) energy += c * c;
  const double parseval = std::abs(energy - inner_product(b, b)) / std::max(1.0, inner_product(b, b));

  const auto product = StepFunction::constant(b.grid(), b.integral() * f.integral()) + paraproduct(b, f) +
                       paraproduct(f, b) + paraproduct_adjoint(b, f);
  const double decomposition = max_abs_difference(pointwise_multiply(b, f), product);

  const double adjoint = std::abs(inner_product(paraproduct(b, f), b) - inner_product(f, paraproduct_adjoint(b, b))) /
                         std::max(1.0, l2_norm(paraproduct(b, f)) * l2_norm(b));

  const auto mean_free = f - StepFunction::constant(f.grid(), f.integral());
  const double isometry = std::abs(l2_norm(haar_shift(f)) - l2_norm(mean_free));

  const auto terms = expansion_terms(b, f);
  const auto remainder = remainder_closed_form(b, f);
  const double remainder_residual = max_abs_difference(remainder, terms.pi_shf_b - terms.sh_pi_f_b);

  const auto fs = haar_analyze(f);
  double predicted = 0.0;
  for (std::size_t i = 0; i < spec.coeffs().size(); ++i) {
    const auto I = DyadicInterval::from_index(i);
    const double c = spec.coeffs()[i] * fs.coeffs()[i];
    predicted += c * c * in.lambda.average(I) / I.length();
  }
  const double energy_error = relative(in.lambda.norm_squared(square_function(remainder)), predicted);

  r.set("haar_roundtrip", roundtrip);
  r.set("parseval", parseval);
  r.set("product_decomposition", decomposition);
  r.set("adjointness", adjoint);
  r.set("shift_isometry", isometry);
  r.set("expansion_residual", terms.residual());
  r.set("expansion_flipped_residual", terms.flipped_residual());
  r.set("remainder_residual", remainder_residual);
  r.set("remainder_energy_error", predicted == 0.0 ? 0.0 : energy_error);

  out.checks.push_back({"haar_roundtrip", roundtrip, tol.identity});
  out.checks.push_back({"parseval", parseval, tol.identity});
  out.checks.push_back({"product_decomposition", decomposition, tol.identity});
  out.checks.push_back({"adjointness", adjoint, tol.identity});
  out.checks.push_back({"shift_isometry", isometry, tol.identity});
  out.checks.push_back({"expansion_residual", terms.residual(), tol.identity});
  out.checks.push_back({"remainder_residual", remainder_residual, tol.identity});
  out.checks.push_back({"remainder_energy", predicted == 0.0 ? 0.0 : energy_error, tol.energy});
}

inline void suite_equivalences(const TrialInputs& in, const Tolerances& tol, TrialRecord& out) {
  const auto& [mu, lambda, b] = std::tie(in.mu, in.lambda, in.b);
  const auto rho = rho_weight(mu, lambda);
  auto& r = out.record;
  const double b2 = bloom_b2(b, mu, lambda), b2d = bloom_b2_dual(b, mu, lambda);
  const double br = bmo_rho(b, rho), br1 = bmo_rho_l1(b, rho), nc = neccon_functional(b, mu, lambda);
  r.set("a2_mu", a2_characteristic(mu));
  r.set("a2_lambda", a2_characteristic(lambda));
  r.set("a2_rho", a2_characteristic(rho));
  r.set("bloom_b2", b2);
  r.set("bloom_b2_dual", b2d);
  r.set("bmo_rho", br);
  r.set("bmo_rho_l1", br1);
  r.set("neccon", nc);
  const double chain = spread({b2, b2d, br, br1, nc});
  r.set("chain_ratio", chain);
  r.set("symmetry_ratio", safe_ratio(b2, b2d));
  r.set("b2_over_bmo_rho", safe_ratio(b2, br));
  if (b.depth() <= 10) {
    const double l2 = bloom_b2_l2form(b, mu, lambda);
    r.set("bloom_b2_l2form", l2);
    r.set("form_ratio", safe_ratio(l2, b2));
    const bool lebesgue = std::all_of(lambda.function().values().begin(), lambda.function().values().end(),
                                      [&](double v) { return v == lambda[0]; });
    if (lebesgue) out.checks.push_back({"form_agreement", b2 > 0 ? relative(l2, b2) : l2, tol.energy});
  }
  if (tol.chain_ratio) out.checks.push_back({"chain_ratio", chain, *tol.chain_ratio});
}

inline void suite_paraproduct_bounds(const TrialInputs& in, const Tolerances& tol, TrialRecord& out) {
  const auto& [mu, lambda, b] = std::tie(in.mu, in.lambda, in.b);
  auto& r = out.record;
  const double pi = paraproduct_norm(b, mu, lambda);
  const double pis = paraproduct_adjoint_norm(b, mu, lambda);
  const double dual = paraproduct_adjoint_norm(b, lambda.inverse(), mu.inverse());
  const double b2 = bloom_b2(b, mu, lambda), b2d = bloom_b2_dual(b, mu, lambda);
  const double lower = safe_ratio(b2, pi), lower_dual = safe_ratio(b2d, pis);
  const double duality = pi > 0 ? relative(pi, dual) : dual;
  r.set("paraproduct_norm", pi);
  r.set("paraproduct_adjoint_norm", pis);
  r.set("paraproduct_dual_norm", dual);
  r.set("bloom_b2", b2);
  r.set("bloom_b2_dual", b2d);
  r.set("lower_ratio", lower);
  r.set("lower_ratio_dual", lower_dual);
  r.set("upper_constant", safe_ratio(pi, b2));
  r.set("upper_constant_dual", safe_ratio(pis, b2d));
  r.set("a2_product", a2_characteristic(mu) * a2_characteristic(lambda));
  r.set("necessity_audit", necessity_test_function_bound(b, mu, lambda).max_ratio);
  out.checks.push_back({"norm_duality", duality, tol.duality});
  out.checks.push_back({"lower_bound", lower, 1.0 + tol.lower_bound});
  out.checks.push_back({"lower_bound_dual", lower_dual, 1.0 + tol.lower_bound});
}

inline void suite_commutator_bounds(const TrialInputs& in, const Tolerances& tol, TrialRecord& out) {
  const auto& [mu, lambda, b] = std::tie(in.mu, in.lambda, in.b);
  auto& r = out.record;
  const double com = commutator_norm(b, mu, lambda);
  const double br = bmo_rho(b, rho_weight(mu, lambda));
  const double ratio = safe_ratio(com, br);
  r.set("commutator_norm", com);
  r.set("bmo_rho", br);
  r.set("commutator_ratio", ratio);
  r.set("truncated", 1.0);
  if (tol.commutator_band && br > 0.0)
    out.checks.push_back({"commutator_band", std::max(ratio, 1.0 / ratio), *tol.commutator_band});
}

inline void suite_carleson(const TrialInputs& in, const Tolerances& tol, TrialRecord& out) {
  const auto& [mu, lambda, b] = std::tie(in.mu, in.lambda, in.b);
  auto& r = out.record;
  const double b2 = bloom_b2(b, mu, lambda), b2d = bloom_b2_dual(b, mu, lambda);
  const auto primal = primal_carleson_sequence(b, mu, lambda);
  const auto dual = dual_carleson_sequence(b, mu, lambda);
  const double c1 = carleson_constant(primal), c2 = carleson_constant(dual);
  r.set("carleson_primal", c1);
  r.set("bloom_b2_squared", b2 * b2);
  r.set("carleson_dual", c2);
  r.set("bloom_b2_dual_squared", b2d * b2d);
  out.checks.push_back({"cet1_definitional", safe_ratio(c1, b2 * b2), 1.0 + tol.carleson});
  out.checks.push_back({"cet2_definitional", safe_ratio(c2, b2d * b2d), 1.0 + tol.carleson});
  if (b.depth() <= default_dense_depth_cap) {
    const double e1 = embedding_best_constant(primal), e2 = embedding_best_constant(dual);
    r.set("embedding_primal", e1);
    r.set("embedding_dual", e2);
    r.set("embedding_factor_primal", safe_ratio(e1, c1));
    r.set("embedding_factor_dual", safe_ratio(e2, c2));
    out.checks.push_back({"embedding_primal", safe_ratio(e1, c1), carleson_embedding_factor * (1 + 1e-9)});
    out.checks.push_back({"embedding_dual", safe_ratio(e2, c2), carleson_embedding_factor * (1 + 1e-9)});
  }
}

inline void suite_ppott(const TrialInputs& in, const Tolerances&, TrialRecord& out) {
  auto& r = out.record;
  for (const auto& [name, w] : {std::pair<const char*, const Weight*>{"mu", &in.mu}, {"lambda", &in.lambda}}) {
    const double a2 = a2_characteristic(*w);
    r.set(std::string("a2_") + name, a2);
    if (w->depth() <= default_dense_depth_cap) {
      const double c = square_function_weight_constant(*w);
      r.set(std::string("ppott_constant_") + name, c);
      r.set(std::string("ppott_over_a2_") + name, c / a2);
    }
    const double sh = shift_norm(*w);
    r.set(std::string("shift_norm_") + name, sh);
    r.set(std::string("shift_over_a2_") + name, sh / a2);
  }
}

inline void suite_stopping(const TrialInputs& in, const Tolerances&, TrialRecord& out) {
  const auto& [mu, lambda, b] = std::tie(in.mu, in.lambda, in.b);
  auto& r = out.record;
  const auto& grid = b.grid();
  const auto root = DyadicInterval::root();
  const auto rho = rho_weight(mu, lambda);
  const auto mu_inv = mu.inverse();
  constexpr int max_generations = 64;
  bool consistent = true;
  double decay = 0.0;
  for (const auto& [name, w] :
       {std::pair<const char*, const Weight*>{"mu_inv", &mu_inv}, {"lambda", &lambda}, {"rho", &rho}}) {
    const PredicateFamily family = [w](double c) { return deviation_predicate({*w}, c); };
    double minimal = NAN, uniform = NAN;
    try {
      minimal = minimal_packing_constant(grid, root, family, *w).constant;
      uniform = uniform_packing_constant(grid, root, family, *w, 0.5, max_generations).constant;
    } catch (const PackingTargetUnreachable&) {
    }
    r.set(std::string("packing_constant_") + name, minimal);
    r.set(std::string("uniform_constant_") + name, uniform);
    out.checks.push_back({std::string("packing_finite_") + name, std::isfinite(uniform) ? 0.0 : 1.0, 0.0});
    if (!std::isfinite(uniform)) continue;
    const auto gens = corona_generations(grid, root, family(uniform), max_generations);
    const auto masses = generation_masses(gens, *w);
    const double total = w->mass(root);
    for (std::size_t g = 0; g < masses.size(); ++g)
      decay = std::max(decay, masses[g] / std::ldexp(total, -static_cast<int>(g) - 1));
    consistent = consistent && corona_is_consistent(grid, gens);
    r.set(std::string("generations_") + name, static_cast<double>(gens.size()));
  }
  r.set("corona_decay", decay);
  out.checks.push_back({"corona_decay", decay, 1.0 + 1e-12});

  // Three-condition construction and the square-sum estimate on its unstopped collection.
  const double b2 = bloom_b2(b, mu, lambda);
  const PredicateFamily joint = [&](double c) { return deviation_predicate({mu_inv, rho}, c); };
  double c = NAN;
  try {
    c = minimal_packing_constant(grid, root, joint, mu_inv).constant;
  } catch (const PackingTargetUnreachable&) {
  }
  if (std::isfinite(c) && b2 > 0.0) {
    const double c_b = 4.0 * bmo_rho(b, rho) / std::sqrt(rho.average(root));
    const auto fam = maximal_stopping_intervals(grid, root, three_condition_predicate(mu, rho, b, c, c_b));
    consistent = consistent && family_is_consistent(grid, fam);
    const auto spec = haar_analyze(b);
    double energy = 0.0;
    for (const auto& I : fam.unstopped)
      if (I.level < grid.depth()) energy += spec.coeff(I) * spec.coeff(I);
    const double scale = b2 * b2 * root.length() / (mu_inv.average(root) * lambda.average(root));
    r.set("three_condition_constant", c);
    r.set("three_condition_members", static_cast<double>(fam.members.size()));
    r.set("square_sum_constant", energy / scale);
  }
  out.checks.push_back({"families_consistent", consistent ? 0.0 : 1.0, 0.0});
}

inline void suite_neccon_chain(const TrialInputs& in, const Tolerances&, TrialRecord& out) {
  const auto& [mu, lambda, b] = std::tie(in.mu, in.lambda, in.b);
  auto& r = out.record;
  const double nc = neccon_functional(b, mu, lambda);
  const double w = weighted_oscillation_sup(b, mu, lambda);
  const double a2 = a2_characteristic(mu);
  r.set("neccon", nc);
  r.set("weighted_oscillation", w);
  r.set("a2_mu", a2);
  r.set("b2_over_neccon", safe_ratio(bloom_b2(b, mu, lambda), nc));
  out.checks.push_back({"sandwich_lower", safe_ratio(w * w, nc * nc), 1.0 + 1e-12});
  out.checks.push_back({"sandwich_upper", safe_ratio(nc * nc, a2 * w * w), 1.0 + 1e-12});
}

inline void run_suite_trial(Suite s, const TrialInputs& in, const Tolerances& tol, TrialRecord& out) {
  switch (s) {
    case Suite::identities: return suite_identities(in, tol, out);
    case Suite::equivalences: return suite_equivalences(in, tol, out);
    case Suite::paraproduct_bounds: return suite_paraproduct_bounds(in, tol, out);
    case Suite::commutator_bounds: return suite_commutator_bounds(in, tol, out);
    case Suite::carleson: return suite_carleson(in, tol, out);
    case Suite::ppott: return suite_ppott(in, tol, out);
    case Suite::stopping: return suite_stopping(in, tol, out);
    case Suite::neccon_chain: return suite_neccon_chain(in, tol, out);
  }
}

/// Runs job(i) for i in [0, n) on a thread pool; the first exception in index order is rethrown.
template <typename Job>
void parallel_for(int n, Job job) {
  const int threads = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, std::max(n, 1));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  {
    std::vector<std::jthread> pool;
    for (int k = 0; k < threads; ++k)
      pool.emplace_back([&, k] {
        for (int i = k; i < n; i += threads) {
          try {
            job(i);
          } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
          }
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline SuiteResult summarize(Suite s, std::vector<TrialRecord> trials) {
  SuiteResult result{s, std::move(trials), {}, {}};
  for (const auto& t : result.trials) {
    for (const auto& c : t.checks) {
      auto it = std::find_if(result.criteria.begin(), result.criteria.end(),
                             [&](const auto& x) { return x.name == c.name; });
      if (it == result.criteria.end()) {
        result.criteria.push_back({c.name, true, c.value, c.bound, 0, {}});
        it = result.criteria.end() - 1;
      }
      if (!(c.value <= it->worst)) it->worst = c.value;
      if (!c.passed()) {
        it->passed = false;
        ++it->failures;
        it->failing_seeds.push_back(t.seed);
      }
    }
    for (const auto& [k, v] : t.record.values) {
      auto it = std::find_if(result.quantiles.begin(), result.quantiles.end(), [&](const auto& x) { return x.first == k; });
      if (it == result.quantiles.end()) result.quantiles.emplace_back(k, Quantiles{});
    }
  }
  for (auto& [k, q] : result.quantiles) {
    std::vector<double> xs;
    for (const auto& t : result.trials)
      for (const auto& [name, v] : t.record.values)
        if (name == k) xs.push_back(v);
    q = quantiles_of(std::move(xs));
  }
  return result;
}

}  // namespace detail

inline std::vector<SuiteResult> run(const ExperimentConfig& config) {
  validate(config);
  std::vector<std::optional<TrialInputs>> inputs(static_cast<std::size_t>(config.trials));
  detail::parallel_for(config.trials, [&](int t) { inputs[static_cast<std::size_t>(t)] = make_trial(config, t); });
  for (const auto& in : inputs)
    if (!is_admissible(in->b) &&
        std::find(config.suites.begin(), config.suites.end(), Suite::identities) != config.suites.end())
      throw ConfigError("identities suite needs an admissible symbol (Haar spectrum on levels <= depth-2)");

  std::vector<SuiteResult> results;
  for (Suite s : config.suites) {
    std::vector<TrialRecord> trials(inputs.size());
    detail::parallel_for(config.trials, [&](int t) {
      const auto& in = *inputs[static_cast<std::size_t>(t)];
      auto& rec = trials[static_cast<std::size_t>(t)];
      rec.trial = t;
      rec.seed = in.seed;
      detail::run_suite_trial(s, in, config.tolerances, rec);
    });
    results.push_back(detail::summarize(s, std::move(trials)));
  }
  return results;
}

inline bool all_passed(const std::vector<SuiteResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed(); });
}

// ---------------------------------------------------------------------------
// Norm reports

struct NormReport {
  int depth = 0;
  double a2_mu = 0, a2_lambda = 0, a2_rho = 0;
  BmoReport functionals;
  bool has_operator_norms = false;
  double paraproduct = 0, paraproduct_adjoint = 0, shift_mu = 0, shift_lambda = 0, commutator = 0;
  bool shift_truncated = true;
  double expansion_residual = NAN, product_residual = NAN;

  std::vector<std::pair<std::string, double>> ratios() const {
    return {{"b2_over_paraproduct", safe_ratio(functionals.bloom_b2.value, paraproduct)},
            {"b2_dual_over_paraproduct_adjoint", safe_ratio(functionals.bloom_b2_dual.value, paraproduct_adjoint)},
            {"paraproduct_over_b2", safe_ratio(paraproduct, functionals.bloom_b2.value)},
            {"commutator_over_bmo_rho", safe_ratio(commutator, functionals.bmo_rho.value)},
            {"b2_over_bmo_rho", safe_ratio(functionals.bloom_b2.value, functionals.bmo_rho.value)},
            {"b2_over_b2_dual", safe_ratio(functionals.bloom_b2.value, functionals.bloom_b2_dual.value)},
            {"shift_mu_over_a2", shift_mu / a2_mu},
            {"shift_lambda_over_a2", shift_lambda / a2_lambda}};
  }
};

/// Full report for one triple. `probe`, when given and admissible together with b,
/// adds identity residuals.
inline NormReport norm_report(const StepFunction& b, const Weight& mu, const Weight& lambda,
                              const StepFunction* probe = nullptr) {
  b.require_same_grid(mu.function());
  b.require_same_grid(lambda.function());
  NormReport r;
  r.depth = b.depth();
  r.a2_mu = a2_characteristic(mu);
  r.a2_lambda = a2_characteristic(lambda);
  r.a2_rho = a2_characteristic(rho_weight(mu, lambda));
  r.functionals = bmo_report(b, mu, lambda);
  r.has_operator_norms = true;
  r.paraproduct = detail::paraproduct_norm(b, mu, lambda);
  r.paraproduct_adjoint = detail::paraproduct_adjoint_norm(b, mu, lambda);
  r.shift_mu = detail::shift_norm(mu);
  r.shift_lambda = detail::shift_norm(lambda);
  r.commutator = detail::commutator_norm(b, mu, lambda);
  if (probe && is_admissible(b) && is_admissible(*probe)) {
    r.expansion_residual = expansion_terms(b, *probe).residual();
    const auto& f = *probe;
    const auto rhs = StepFunction::constant(b.grid(), b.integral() * f.integral()) + paraproduct(b, f) +
                     paraproduct(f, b) + paraproduct_adjoint(b, f);
    r.product_residual = max_abs_difference(pointwise_multiply(b, f), rhs);
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const DyadicInterval& I) { return Json::array({I.level, I.position}); }

inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json to_json(const EnsembleSpec& s) {
  Json j;
  j["kind"] = std::string(to_string(s.kind));
  j["alpha"] = s.alpha;
  j["center"] = s.center;
  j["delta"] = s.delta;
  j["sparsity"] = s.sparsity;
  j["amplitude"] = s.amplitude;
  if (!s.values.empty()) j["values"] = s.values;
  j["admissible"] = s.admissible;
  if (s.a2_target) j["a2_target"] = Json::array({s.a2_target->first, s.a2_target->second});
  j["max_retries"] = s.max_retries;
  return j;
}

inline EnsembleSpec ensemble_from_json(const Json& j) {
  EnsembleSpec s;
  try {
    if (j.contains("kind")) s.kind = parse_ensemble_kind(j.at("kind").get<std::string>());
    s.alpha = j.value("alpha", s.alpha);
    s.center = j.value("center", s.center);
    s.delta = j.value("delta", s.delta);
    s.sparsity = j.value("sparsity", s.sparsity);
    s.amplitude = j.value("amplitude", s.amplitude);
    if (j.contains("values")) s.values = j.at("values").get<std::vector<double>>();
    s.admissible = j.value("admissible", s.admissible);
    if (j.contains("a2_target")) {
      const auto t = j.at("a2_target").get<std::vector<double>>();
      if (t.size() != 2) throw ConfigError("a2_target needs two numbers");
      s.a2_target = std::pair{t[0], t[1]};
    }
    s.max_retries = j.value("max_retries", s.max_retries);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad ensemble spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

inline Json to_json(const FieldSpec& f) {
  if (f.leaves) return Json{{"leaves", *f.leaves}};
  return to_json(f.spec);
}

inline FieldSpec field_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("ensemble entry must be an object");
  FieldSpec f;
  if (j.contains("leaves")) {
    try {
      f.leaves = j.at("leaves").get<std::vector<double>>();
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("bad leaves: ") + e.what());
    }
  } else {
    f.spec = ensemble_from_json(j);
  }
  return f;
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["depth"] = c.depth;
  j["mu"] = to_json(c.mu);
  j["lambda"] = to_json(c.lambda);
  j["b"] = to_json(c.b);
  Json suites = Json::array();
  for (auto s : c.suites) suites.push_back(std::string(to_string(s)));
  j["suites"] = suites;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  Json tol;
  tol["identity"] = c.tolerances.identity;
  tol["energy"] = c.tolerances.energy;
  tol["duality"] = c.tolerances.duality;
  tol["lower_bound"] = c.tolerances.lower_bound;
  tol["carleson"] = c.tolerances.carleson;
  if (c.tolerances.chain_ratio) tol["chain_ratio"] = *c.tolerances.chain_ratio;
  if (c.tolerances.commutator_band) tol["commutator_band"] = *c.tolerances.commutator_band;
  j["tolerances"] = tol;
  Json out;
  if (!c.json_out.empty()) out["json"] = c.json_out;
  if (!c.csv_out.empty()) out["csv"] = c.csv_out;
  j["outputs"] = out.is_null() ? Json::object() : out;
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  try {
    c.depth = j.value("depth", c.depth);
    if (j.contains("mu")) c.mu = field_from_json(j.at("mu"));
    if (j.contains("lambda")) c.lambda = field_from_json(j.at("lambda"));
    if (j.contains("b")) c.b = field_from_json(j.at("b"));
    if (j.contains("suites")) {
      c.suites.clear();
      for (const auto& s : j.at("suites")) c.suites.push_back(parse_suite(s.get<std::string>()));
    }
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    if (j.contains("tolerances")) {
      const auto& t = j.at("tolerances");
      c.tolerances.identity = t.value("identity", c.tolerances.identity);
      c.tolerances.energy = t.value("energy", c.tolerances.energy);
      c.tolerances.duality = t.value("duality", c.tolerances.duality);
      c.tolerances.lower_bound = t.value("lower_bound", c.tolerances.lower_bound);
      c.tolerances.carleson = t.value("carleson", c.tolerances.carleson);
      if (t.contains("chain_ratio")) c.tolerances.chain_ratio = t.at("chain_ratio").get<double>();
      if (t.contains("commutator_band")) c.tolerances.commutator_band = t.at("commutator_band").get<double>();
    }
    if (j.contains("outputs")) {
      const auto& o = j.at("outputs");
      c.json_out = o.value("json", std::string{});
      c.csv_out = o.value("csv", std::string{});
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return c;
}

inline Json to_json(const Quantiles& q) {
  return Json{{"min", number(q.min)}, {"median", number(q.median)}, {"q90", number(q.q90)}, {"max", number(q.max)}};
}

inline Json to_json(const SuiteResult& r) {
  Json j;
  j["suite"] = std::string(to_string(r.suite));
  j["passed"] = r.passed();
  Json criteria = Json::array();
  for (const auto& c : r.criteria)
    criteria.push_back(Json{{"name", c.name},
                            {"passed", c.passed},
                            {"worst", number(c.worst)},
                            {"bound", c.bound},
                            {"failures", c.failures},
                            {"failing_seeds", c.failing_seeds}});
  j["criteria"] = criteria;
  Json q = Json::object();
  for (const auto& [k, v] : r.quantiles) q[k] = to_json(v);
  j["quantiles"] = q;
  Json trials = Json::array();
  for (const auto& t : r.trials) {
    Json values = Json::object();
    for (const auto& [k, v] : t.record.values) values[k] = number(v);
    trials.push_back(Json{{"trial", t.trial}, {"seed", t.seed}, {"values", values}});
  }
  j["trials"] = trials;
  return j;
}

inline Json results_to_json(const ExperimentConfig& c, const std::vector<SuiteResult>& results) {
  Json suites = Json::array();
  for (const auto& r : results) suites.push_back(to_json(r));
  return Json{{"config", to_json(c)}, {"passed", all_passed(results)}, {"suites", suites}};
}

inline Json to_json(const Supremum& s) { return Json{{"value", number(s.value)}, {"argmax", to_json(s.argmax)}}; }

inline Json to_json(const NormReport& r) {
  Json j;
  j["depth"] = r.depth;
  j["a2"] = Json{{"mu", r.a2_mu}, {"lambda", r.a2_lambda}, {"rho", r.a2_rho}};
  j["functionals"] = Json{{"bloom_b2", to_json(r.functionals.bloom_b2)},
                          {"bloom_b2_dual", to_json(r.functionals.bloom_b2_dual)},
                          {"bloom_b2_l2form", to_json(r.functionals.bloom_b2_l2form)},
                          {"bmo_rho", to_json(r.functionals.bmo_rho)},
                          {"bmo_rho_l1", to_json(r.functionals.bmo_rho_l1)},
                          {"neccon", to_json(r.functionals.neccon)}};
  j["norms"] = Json{{"paraproduct", number(r.paraproduct)},
                    {"paraproduct_adjoint", number(r.paraproduct_adjoint)},
                    {"shift_mu", number(r.shift_mu)},
                    {"shift_lambda", number(r.shift_lambda)},
                    {"commutator", number(r.commutator)},
                    {"shift_truncated", r.shift_truncated}};
  Json ratios = Json::object();
  for (const auto& [k, v] : r.ratios()) ratios[k] = number(v);
  j["ratios"] = ratios;
  j["residuals"] = Json{{"expansion", number(r.expansion_residual)}, {"product", number(r.product_residual)}};
  return j;
}

inline Json to_json(const StepFunction& f) { return Json{{"depth", f.depth()}, {"values", f.values()}}; }

inline StepFunction step_function_from_json(const Json& j) {
  try {
    const int depth = j.at("depth").get<int>();
    return StepFunction(DyadicGrid(depth), j.at("values").get<std::vector<double>>());
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("bad step function: ") + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw OutputError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParameter { alpha, delta, depth, sparsity };

inline SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name == "alpha") return SweepParameter::alpha;
  if (name == "delta") return SweepParameter::delta;
  if (name == "depth") return SweepParameter::depth;
  if (name == "sparsity") return SweepParameter::sparsity;
  throw ConfigError("unknown sweep parameter '" + std::string(name) + "'");
}

/// Parses "start:stop:step" into start + k·step for k = 0..⌊(stop−start)/step⌋.
/// A single number is a one-point range.
inline std::vector<double> parse_range(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("malformed range '" + text + "'");
    }
    if (used != item.size() || !std::isfinite(v)) throw ConfigError("malformed range '" + text + "'");
    parts.push_back(v);
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3) throw ConfigError("range must be start:stop:step, got '" + text + "'");
  const auto [start, stop, step] = std::tuple{parts[0], parts[1], parts[2]};
  if (!(step > 0.0) || stop < start) throw ConfigError("range needs step > 0 and stop >= start, got '" + text + "'");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> values(count);
  for (std::size_t k = 0; k < count; ++k) values[k] = start + static_cast<double>(k) * step;
  return values;
}

inline ExperimentConfig apply_sweep(ExperimentConfig c, SweepParameter p, double v) {
  switch (p) {
    case SweepParameter::alpha:
      c.mu.leaves.reset();
      c.mu.spec.kind = EnsembleKind::power;
      c.mu.spec.alpha = v;
      break;
    case SweepParameter::delta:
      for (auto* f : {&c.mu, &c.lambda, &c.b}) f->spec.delta = v;
      break;
    case SweepParameter::depth:
      if (v != std::round(v)) throw ConfigError("depth values must be integers");
      c.depth = static_cast<int>(v);
      break;
    case SweepParameter::sparsity: c.b.spec.sparsity = v; break;
  }
  c.trials = 1;
  return c;
}

inline std::vector<std::string> norm_report_columns() {
  std::vector<std::string> cols{"depth",         "a2_mu",           "a2_lambda",       "a2_rho",
                                "bloom_b2",      "bloom_b2_dual",   "bloom_b2_l2form", "bmo_rho",
                                "bmo_rho_l1",    "neccon",          "paraproduct",     "paraproduct_adjoint",
                                "shift_mu",      "shift_lambda",    "commutator",      "expansion_residual",
                                "product_residual"};
  for (const auto& [k, v] : NormReport{}.ratios()) cols.push_back(k);
  return cols;
}

inline std::vector<double> norm_report_row(const NormReport& r) {
  const auto& f = r.functionals;
  std::vector<double> row{static_cast<double>(r.depth),
                          r.a2_mu,
                          r.a2_lambda,
                          r.a2_rho,
                          f.bloom_b2.value,
                          f.bloom_b2_dual.value,
                          f.bloom_b2_l2form.value,
                          f.bmo_rho.value,
                          f.bmo_rho_l1.value,
                          f.neccon.value,
                          r.paraproduct,
                          r.paraproduct_adjoint,
                          r.shift_mu,
                          r.shift_lambda,
                          r.commutator,
                          r.expansion_residual,
                          r.product_residual};
  for (const auto& [k, v] : r.ratios()) row.push_back(v);
  return row;
}

struct SweepTable {
  std::string parameter;
  std::vector<std::string> columns;  ///< excluding the parameter and seed columns
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> rows;
};

inline SweepTable sweep(SweepParameter p, const std::vector<double>& values, const ExperimentConfig& base) {
  const std::string names[] = {"alpha", "delta", "depth", "sparsity"};
  SweepTable table{names[static_cast<int>(p)], norm_report_columns(), values, {}, {}};
  table.rows.resize(values.size());
  table.seeds.resize(values.size());
  std::vector<ExperimentConfig> configs;
  for (double v : values) {
    configs.push_back(apply_sweep(base, p, v));
    validate(configs.back());
  }
  detail::parallel_for(static_cast<int>(values.size()), [&](int i) {
    const auto in = make_trial(configs[static_cast<std::size_t>(i)], 0);
    table.seeds[static_cast<std::size_t>(i)] = in.seed;
    table.rows[static_cast<std::size_t>(i)] = norm_report_row(norm_report(in.b, in.mu, in.lambda, &in.f));
  });
  return table;
}

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// CSV body plus trailing `#` lines classifying each column as increasing,
/// decreasing, constant, or mixed along the sweep.
inline std::string to_csv(const SweepTable& t) {
  std::string out = t.parameter + ",seed";
  for (const auto& c : t.columns) out += "," + c;
  out += "\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out += format_number(t.values[i]) + "," + std::to_string(t.seeds[i]);
    for (double v : t.rows[i]) out += "," + format_number(v);
    out += "\n";
  }
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    bool up = true, down = true;
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
      const double a = t.rows[i - 1][c], b = t.rows[i][c];
      if (!(b >= a)) up = false;
      if (!(b <= a)) down = false;
    }
    const char* trend = up && down ? "constant" : up ? "increasing" : down ? "decreasing" : "mixed";
    out += "# monotonicity," + t.columns[c] + "," + trend + "\n";
  }
  return out;
}

}  // namespace bloom
