// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Measured constants for criteria 8, 9 and 11 come from the frozen pilot fixture.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "ensembles.hpp"
#include "oracles.hpp"

using namespace bloom;

namespace {

constexpr int acceptance_depth = 8;
constexpr int ensemble_trials = 200;
constexpr std::uint64_t acceptance_seed = 0xACCE97;

int failures = 0;

void line(int n, bool passed, const std::string& title, const std::string& detail) {
  std::printf("criterion %2d %s  %s: %s\n", n, passed ? "PASS" : "FAIL", title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!passed) ++failures;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void criterion_haar_algebra() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  double roundtrip = 0.0, parseval = 0.0, ortho = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const DyadicGrid grid(1 + t % 12);
    const auto f = oracle::random_function(grid, rng);
    const auto s = haar_analyze(f);
    roundtrip = std::max(roundtrip, max_abs_difference(haar_synthesize(s), f));
    double energy = s.mean() * s.mean();
    for (double c : s.coeffs()) energy += c * c;
    parseval = std::max(parseval, std::abs(energy - inner_product(f, f)));
  }
  for (int d = 1; d <= 12; ++d) {
    const DyadicGrid grid(d);
    for (std::size_t i = 0; i < grid.haar_count(); ++i) {
      const auto s = haar_analyze(StepFunction::haar(grid, DyadicInterval::from_index(i)));
      ortho = std::max(ortho, std::abs(s.mean()));
      for (std::size_t j = 0; j < s.coeffs().size(); ++j)
        ortho = std::max(ortho, std::abs(s.coeffs()[j] - (i == j ? 1.0 : 0.0)));
    }
    std::uniform_int_distribution<std::size_t> pick(0, grid.haar_count() - 1);
    for (int k = 0; k < 200; ++k) {
      const auto i = pick(rng), j = pick(rng);
      const double g = inner_product(StepFunction::haar(grid, DyadicInterval::from_index(i)),
                                     StepFunction::haar(grid, DyadicInterval::from_index(j)));
      ortho = std::max(ortho, std::abs(g - (i == j ? 1.0 : 0.0)));
    }
  }
  const double elapsed = seconds_since(t0);
  const double worst = std::max({roundtrip, parseval, ortho});
  line(1, worst <= 1e-12 && elapsed < 10.0, "Haar algebra",
       "round-trip " + fmt(roundtrip) + ", Parseval " + fmt(parseval) + ", orthonormality " + fmt(ortho) +
           " (bound 1e-12), " + fmt(elapsed) + " s (bound 10 s)");
}

void criterion_product_decomposition() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const DyadicGrid grid(4 + t % 5);
    const auto b = oracle::random_admissible(grid, rng);
    const auto g = oracle::random_admissible(grid, rng);
    const auto rhs = StepFunction::constant(grid, b.integral() * g.integral()) + paraproduct(b, g) +
                     paraproduct(g, b) + paraproduct_adjoint(b, g);
    worst = std::max(worst, max_abs_difference(pointwise_multiply(b, g), rhs));
  }
  line(2, worst <= 1e-11, "product decomposition", "max residual " + fmt(worst) + " over 500 pairs (bound 1e-11)");
}

void criterion_expansion() {
  std::mt19937_64 rng(3);
  double worst = 0.0, flipped = 0.0;
  for (int d = 4; d <= 8; ++d)
    for (int t = 0; t < 200; ++t) {
      const auto b = oracle::random_admissible(DyadicGrid(d), rng);
      const auto f = oracle::random_admissible(DyadicGrid(d), rng);
      const auto terms = expansion_terms(b, f);
      worst = std::max(worst, terms.residual());
      flipped = std::max(flipped, terms.flipped_residual());
    }
  const DyadicGrid d2(2);
  const auto h = StepFunction::haar(d2, DyadicInterval::root());
  const auto worked = expansion_terms(h, h);
  const std::vector<double> expected{1, -1, 1, -1};
  // The direct commutator is exact in floating point; the six-term sum passes through
  // 1/√2·√2 and may land one ulp away.
  bool exact = true;
  double roundoff = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    exact = exact && worked.commutator[i] == expected[i];
    roundoff = std::max(roundoff, std::abs(worked.pi_shf_b[i] - expected[i]));
  }
  roundoff = std::max(roundoff, worked.residual());
  line(3, worst <= 1e-11 && exact && roundoff <= 1e-15, "expansion identity",
       "max residual " + fmt(worst) + " over 1000 trials (bound 1e-11); D=2 worked example: commutator " +
           (exact ? "bit-exact" : "NOT exact") + ", six-term sum within " + fmt(roundoff) +
           "; printed sign pattern residual " + fmt(flipped));
}

void criterion_remainder() {
  std::mt19937_64 rng(4);
  double residual = 0.0, energy = 0.0;
  for (int t = 0; t < 500; ++t) {
    const DyadicGrid grid(3 + t % 6);
    const auto b = oracle::random_admissible(grid, rng);
    const auto f = oracle::random_admissible(grid, rng);
    const Weight lambda(oracle::random_weight_values(grid, rng));
    const auto r = remainder_closed_form(b, f);
    const auto terms = expansion_terms(b, f);
    residual = std::max(residual, max_abs_difference(r, terms.pi_shf_b - terms.sh_pi_f_b));
    double predicted = 0.0;
    for (const auto& I : oracle::all_intervals(grid)) {
      const double c = oracle::haar_coefficient(b, I) * oracle::haar_coefficient(f, I);
      predicted += c * c * oracle::average(lambda.function(), I) / I.length();
    }
    const double measured = lambda.norm_squared(square_function(r));
    energy = std::max(energy, std::abs(measured - predicted) / std::max(predicted, 1e-300));
  }
  line(4, residual <= 1e-11 && energy <= 1e-10, "remainder closed form",
       "residual " + fmt(residual) + " (bound 1e-11), weighted energy relative error " + fmt(energy) +
           " (bound 1e-10)");
}

void criterion_duality(const std::vector<ensembles::Named>& ens) {
  double adjoint = 0.0, duality = 0.0;
  int triples = 0;
  for (const auto& [name, config] : ens) {
    for (int t = 0; t < 25; ++t) {
      const auto in = make_trial(config, t);
      std::mt19937_64 rng(in.seed);
      const auto f = oracle::random_function(in.b.grid(), rng);
      const auto g = oracle::random_function(in.b.grid(), rng);
      const double lhs = inner_product(paraproduct(in.b, f), g), rhs = inner_product(f, paraproduct_adjoint(in.b, g));
      adjoint = std::max(adjoint, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
      const double forward = weighted_operator_norm(paraproduct_matrix(in.b), in.mu, in.lambda);
      const double dual =
          weighted_operator_norm(paraproduct_adjoint_matrix(in.b), in.lambda.inverse(), in.mu.inverse());
      duality = std::max(duality, std::abs(forward - dual) / forward);
      ++triples;
    }
  }
  line(5, adjoint <= 1e-9 && duality <= 1e-9, "adjointness and norm duality",
       "pairing " + fmt(adjoint) + ", norm duality " + fmt(duality) + " over " + std::to_string(triples) +
           " triples at D=8 (bound 1e-9)");
}

const CriterionSummary* find(const SuiteResult& r, const std::string& name) {
  for (const auto& c : r.criteria)
    if (c.name == name) return &c;
  return nullptr;
}

std::string seeds(const CriterionSummary& c, std::size_t n = 3) {
  std::string s;
  for (std::size_t i = 0; i < std::min(n, c.failing_seeds.size()); ++i)
    s += (i ? "," : "") + std::to_string(c.failing_seeds[i]);
  return s;
}

Json read_fixture() {
  std::ifstream in(BLOOM_PILOT_FIXTURE);
  if (!in) {
    std::fprintf(stderr, "cannot open pilot fixture %s\n", BLOOM_PILOT_FIXTURE);
    std::exit(2);
  }
  return Json::parse(in);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fixture = read_fixture();

  criterion_haar_algebra();
  criterion_product_decomposition();
  criterion_expansion();
  criterion_remainder();

  auto ens = ensembles::standard(acceptance_depth, acceptance_seed, ensemble_trials);
  criterion_duality(ens);

  std::map<std::string, std::map<Suite, SuiteResult>> results;
  for (auto& [name, config] : ens) {
    config.suites = {Suite::equivalences, Suite::paraproduct_bounds, Suite::commutator_bounds, Suite::carleson,
                     Suite::stopping};
    config.tolerances.chain_ratio = 2.0 * fixture.at("chain_ratio").at(name).get<double>();
    config.tolerances.commutator_band = 2.0 * fixture.at("commutator_band").at(name).get<double>();
    for (auto& r : run(config)) results[name].emplace(r.suite, std::move(r));
  }

  {
    bool ok = true;
    std::string detail;
    for (const auto& [name, rs] : results) {
      const auto& r = rs.at(Suite::carleson);
      ok = ok && r.passed();
      detail += name + ": CET1 " + fmt(find(r, "cet1_definitional")->worst) + ", CET2 " +
                fmt(find(r, "cet2_definitional")->worst) + ", C*/cc " +
                fmt(std::max(find(r, "embedding_primal")->worst, find(r, "embedding_dual")->worst)) + "; ";
    }
    line(6, ok, "Carleson definitional inequalities and embedding",
         detail + "bounds 1+1e-10 and 4, " + std::to_string(ensemble_trials) + " trials per ensemble");
  }
  {
    bool ok = true;
    std::string detail;
    for (const auto& [name, rs] : results) {
      const auto& r = rs.at(Suite::paraproduct_bounds);
      for (const char* key : {"lower_bound", "lower_bound_dual"}) {
        const auto* c = find(r, key);
        ok = ok && c->passed;
        detail += name + " " + key + " max " + fmt(c->worst);
        if (c->failures) detail += " (" + std::to_string(c->failures) + " violations, seeds " + seeds(*c) + ")";
        detail += "; ";
      }
    }
    line(7, ok, "constant-1 lower bounds", detail + "bound 1+1e-6");
  }
  {
    bool ok = true;
    std::string detail;
    for (const auto& [name, rs] : results) {
      const auto* c = find(rs.at(Suite::equivalences), "chain_ratio");
      ok = ok && c->passed;
      detail += name + " " + fmt(c->worst) + " <= " + fmt(c->bound) + "; ";
    }
    line(8, ok, "equivalence chain", detail + "bound 2*K_ens from pilot");
  }
  {
    bool ok = true;
    std::string detail;
    for (const auto& [name, rs] : results) {
      const auto* c = find(rs.at(Suite::commutator_bounds), "commutator_band");
      const auto& q = rs.at(Suite::commutator_bounds).quantile("commutator_ratio");
      const bool passed = c == nullptr || c->passed;
      ok = ok && passed;
      detail += name + " [" + fmt(q.min) + ", " + fmt(q.max) + "] within [1/" + fmt(c ? c->bound : 0.0) + ", " +
                fmt(c ? c->bound : 0.0) + "]; ";
    }
    line(9, ok, "commutator two-sided bound", detail + "band from pilot 2K'");
  }
  {
    bool ok = true;
    std::string detail;
    for (const auto& [name, rs] : results) {
      const auto& r = rs.at(Suite::stopping);
      ok = ok && r.passed();
      detail += name + " decay " + fmt(find(r, "corona_decay")->worst);
      try {
        detail += ", square-sum K " + fmt(r.quantile("square_sum_constant").max);
      } catch (const std::out_of_range&) {
      }
      detail += "; ";
    }
    line(10, ok, "stopping machinery", detail + "packing constants finite, families consistent");
  }
  {
    std::mt19937_64 rng(11);
    double isometry = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const auto f = oracle::random_admissible(DyadicGrid(2 + t % 9), rng);
      const auto mean_free = f - StepFunction::constant(f.grid(), f.integral());
      isometry = std::max(isometry, std::abs(l2_norm(haar_shift(f)) - l2_norm(mean_free)) / l2_norm(mean_free));
    }
    const DyadicGrid grid(acceptance_depth);
    const double lebesgue = weighted_operator_norm(shift_matrix(grid), Weight::constant(grid), Weight::constant(grid));
    const double bound = 2.0 * fixture.at("shift_over_a2").get<double>();
    double worst = 0.0;
    int points = 0;
    for (double alpha : ensembles::alpha_sweep()) {
      EnsembleSpec spec{.kind = EnsembleKind::power, .depth = acceptance_depth};
      spec.alpha = alpha;
      const auto w = generate_weight(spec);
      worst = std::max(worst, weighted_operator_norm(shift_matrix(grid), w, w) / a2_characteristic(w));
      ++points;
    }
    line(11, isometry <= 1e-12 && std::abs(lebesgue - 1.0) <= 1e-12 && worst <= bound && points == 19,
         "shift bounds",
         "isometry " + fmt(isometry) + ", unweighted norm " + fmt(lebesgue) + ", max ||Sh||_w/[w]_A2 " + fmt(worst) +
             " over " + std::to_string(points) + " alphas (bound " + fmt(bound) + ")");
  }

  std::printf("total %.1f s, %d criteria failed\n", seconds_since(t0), failures);
  return failures == 0 ? 0 : 1;
}
