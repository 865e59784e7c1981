#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bloom/bmo.hpp"
#include "bloom/stopping.hpp"
#include "oracles.hpp"

using namespace bloom;

namespace {

const Weight step_weight(StepFunction(DyadicGrid(2), {4, 4, 1, 1}));

/// Maximal family by exhaustive enumeration: I stops if the predicate holds at I and at
/// no strict ancestor strictly below the root.
std::vector<DyadicInterval> brute_members(const DyadicGrid& grid, const DyadicInterval& root,
                                          const std::function<bool(const DyadicInterval&)>& holds) {
  std::vector<DyadicInterval> out;
  for (const auto& I : oracle::all_intervals(grid, true)) {
    if (!oracle::inside(I, root) || I == root) continue;
    if (!holds(I)) continue;
    bool maximal = true;
    for (auto A = I.parent(); A.level > root.level; A = A.parent())
      if (holds(A)) maximal = false;
    if (maximal) out.push_back(I);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(MaximalStopping, NeverStops) {
  const DyadicGrid grid(4);
  const auto fam = maximal_stopping_intervals(grid, DyadicInterval::root(), StoppingPredicate::never());
  EXPECT_TRUE(fam.members.empty());
  EXPECT_EQ(fam.unstopped.size(), grid.interval_count());
  EXPECT_TRUE(family_is_consistent(grid, fam));
}

TEST(MaximalStopping, ConstantWeightNeverDeviates) {
  const DyadicGrid grid(5);
  const auto fam =
      maximal_stopping_intervals(grid, DyadicInterval::root(), deviation_predicate({Weight::constant(grid)}, 2.0));
  EXPECT_TRUE(fam.members.empty());
}

TEST(MaximalStopping, StepWeightExample) {
  const StoppingPredicate above{[](const DyadicInterval& I, const DyadicInterval& root, double) {
                                  return step_weight.average(I) > 1.2 * step_weight.average(root);
                                },
                                {}};
  const auto fam = maximal_stopping_intervals(step_weight.grid(), DyadicInterval::root(), above);
  ASSERT_EQ(fam.members.size(), 1u);
  EXPECT_EQ(fam.members[0], (DyadicInterval{1, 0}));
  EXPECT_NEAR(packing_ratio(fam, step_weight), 0.8, 1e-15);
  EXPECT_TRUE(family_is_consistent(step_weight.grid(), fam));
}

TEST(MaximalStopping, AgreesWithExhaustiveEnumeration) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 40; ++t) {
    const DyadicGrid grid(2 + t % 6);
    const Weight w(oracle::random_weight_values(grid, rng, 0.1, 10.0));
    const DyadicInterval root = t % 3 == 0 ? DyadicInterval{1, 1} : DyadicInterval::root();
    const double c = 1.2 + 0.1 * (t % 7);
    auto fam = maximal_stopping_intervals(grid, root, deviation_predicate({w}, c));
    auto members = fam.members;
    std::sort(members.begin(), members.end());
    const auto expected = brute_members(grid, root, [&](const DyadicInterval& I) {
      const double a = oracle::average(w.function(), I), r = oracle::average(w.function(), root);
      return a > c * r || a < r / c;
    });
    EXPECT_EQ(members, expected);
    EXPECT_TRUE(family_is_consistent(grid, fam));
  }
}

TEST(MaximalStopping, PathSumsMatchBruteForce) {
  std::mt19937_64 rng(4);
  const DyadicGrid grid(6);
  const auto b = oracle::random_function(grid, rng);
  const Weight rho(oracle::random_weight_values(grid, rng));
  const DyadicInterval root{1, 0};
  // A huge threshold never stops; record each path sum through a wrapping predicate.
  auto pred = square_sum_predicate(b, rho, 1e300, 1.0);
  const auto inner = pred.stops;
  int checked = 0;
  pred.stops = [&](const DyadicInterval& I, const DyadicInterval& r, double path_sum) {
    double expected = 0.0;
    for (const auto& J : oracle::all_intervals(grid))
      if (oracle::inside(I, J) && oracle::inside(J, r)) {
        const double c = oracle::haar_coefficient(b, J);
        expected += c * c / J.length();
      }
    EXPECT_NEAR(path_sum, expected, 1e-12 * (1 + expected));
    ++checked;
    return inner(I, r, path_sum);
  };
  const auto fam = maximal_stopping_intervals(grid, root, pred);
  EXPECT_TRUE(fam.members.empty());
  EXPECT_EQ(checked, 62);
}

TEST(Packing, Examples) {
  const DyadicGrid grid(3);
  const auto one = Weight::constant(grid);
  EXPECT_EQ(packing_ratio(StoppingFamily{DyadicInterval::root(), {}, {}, 0}, one), 0.0);
  EXPECT_DOUBLE_EQ(packing_ratio(StoppingFamily{DyadicInterval::root(), {{1, 0}}, {}, 0}, one), 0.5);
}

TEST(Packing, MinimalConstantConstantWeight) {
  const DyadicGrid grid(6);
  const auto one = Weight::constant(grid);
  const auto r = minimal_packing_constant(
      grid, DyadicInterval::root(), [&](double c) { return deviation_predicate({one}, c); }, one);
  EXPECT_NEAR(r.constant, 1.1, 1e-15);
  EXPECT_EQ(r.ratio, 0.0);
}

TEST(Packing, MinimalConstantStepWeightExhaustive) {
  const auto& grid = step_weight.grid();
  const auto r = minimal_packing_constant(
      grid, DyadicInterval::root(), [&](double c) { return deviation_predicate({step_weight}, c); }, step_weight);
  // Exhaustive: first grid constant whose maximal family over the six proper subintervals packs <= 1/2.
  double expected = 0.0;
  for (double c : packing_constant_grid()) {
    const auto members = brute_members(grid, DyadicInterval::root(), [&](const DyadicInterval& I) {
      const double a = step_weight.average(I);
      return a > c * 2.5 || a < 2.5 / c;
    });
    double mass = 0.0;
    for (const auto& S : members) mass += step_weight.mass(S);
    if (mass / 2.5 <= 0.5) {
      expected = c;
      break;
    }
  }
  EXPECT_EQ(r.constant, expected);
  EXPECT_NEAR(r.constant, std::pow(1.1, 5), 1e-12);
  EXPECT_NEAR(r.ratio, 0.2, 1e-15);
}

TEST(Packing, UnreachableTarget) {
  const auto& grid = step_weight.grid();
  const StoppingPredicate always{[](const DyadicInterval&, const DyadicInterval&, double) { return true; }, {}};
  try {
    minimal_packing_constant(grid, DyadicInterval::root(), [&](double) { return always; }, step_weight);
    FAIL();
  } catch (const PackingTargetUnreachable& e) {
    EXPECT_DOUBLE_EQ(e.best_ratio(), 1.0);
  }
}

TEST(Corona, Examples) {
  const DyadicGrid grid(5);
  const auto never = corona_generations(grid, DyadicInterval::root(), StoppingPredicate::never(), 10);
  ASSERT_EQ(never.size(), 1u);
  EXPECT_TRUE(never[0].members.empty());
  const auto flat =
      corona_generations(grid, DyadicInterval::root(), deviation_predicate({Weight::constant(grid)}, 1.5), 10);
  ASSERT_EQ(flat.size(), 1u);
  EXPECT_TRUE(flat[0].members.empty());
}

TEST(Corona, CascadeMassDecays) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    EnsembleSpec spec;
    spec.kind = EnsembleKind::cascade;
    spec.depth = 10;
    spec.delta = 0.5;
    spec.seed = seed;
    const auto lambda = generate_weight(spec);
    const auto& grid = lambda.grid();
    const PredicateFamily family = [&](double c) { return deviation_predicate({lambda}, c); };
    const auto search = uniform_packing_constant(grid, DyadicInterval::root(), family, lambda, 0.5, 64);
    EXPECT_GE(search.constant, minimal_packing_constant(grid, DyadicInterval::root(), family, lambda).constant);
    const auto gens = corona_generations(grid, DyadicInterval::root(), family(search.constant), 64);
    const auto masses = generation_masses(gens, lambda);
    const double total = lambda.mass(DyadicInterval::root());
    for (std::size_t g = 0; g < masses.size(); ++g) {
      EXPECT_EQ(gens[g].generation, static_cast<int>(g) + 1);
      EXPECT_LE(masses[g], std::ldexp(total, -static_cast<int>(g) - 1) * (1 + 1e-12));
    }
  }
}

TEST(ThreeCondition, BuildsConsistentFamilies) {
  std::mt19937_64 rng(9);
  const DyadicGrid grid(7);
  const auto b = oracle::random_admissible(grid, rng);
  const Weight mu(oracle::random_weight_values(grid, rng));
  const Weight lambda(oracle::random_weight_values(grid, rng));
  const auto rho = rho_weight(mu, lambda);
  const auto fam =
      maximal_stopping_intervals(grid, DyadicInterval::root(), three_condition_predicate(mu, rho, b, 2.0, 3.0));
  EXPECT_TRUE(family_is_consistent(grid, fam));
  const auto jump = maximal_stopping_intervals(grid, {1, 1}, inverse_weight_jump_predicate(mu));
  EXPECT_TRUE(family_is_consistent(grid, jump));
  for (const auto& S : jump.members) EXPECT_GE(mu.inverse().average(S), 4.0 * mu.inverse().average({1, 1}));
}

TEST(Corona, StructureIsConsistent) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 10; ++t) {
    const DyadicGrid grid(8);
    const Weight w(oracle::random_weight_values(grid, rng, 0.05, 20.0));
    const auto gens = corona_generations(grid, DyadicInterval::root(), deviation_predicate({w}, 1.5), 64);
    EXPECT_GT(gens.size(), 1u);
    EXPECT_TRUE(corona_is_consistent(grid, gens));
    auto broken = gens;
    if (broken.size() > 1 && !broken[1].members.empty()) {
      broken[1].members.push_back(broken[1].members.front());
      EXPECT_FALSE(corona_is_consistent(grid, broken));
    }
  }
}
