#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bloom/weights.hpp"
#include "oracles.hpp"

using namespace bloom;

TEST(Weight, RejectsNonPositive) {
  EXPECT_THROW(Weight(StepFunction(DyadicGrid(1), {1.0, 0.0})), std::invalid_argument);
  EXPECT_THROW(Weight(StepFunction(DyadicGrid(1), {1.0, -2.0})), std::invalid_argument);
}

TEST(Weight, IntervalStatistics) {
  const auto one = Weight::constant(DyadicGrid(4));
  for (const auto& I : oracle::all_intervals(one.grid(), true)) {
    EXPECT_DOUBLE_EQ(interval_average(one, I), 1.0);
    EXPECT_DOUBLE_EQ(interval_mass(one, I), I.length());
  }
  const Weight w(StepFunction(DyadicGrid(1), {1, 3}));
  EXPECT_DOUBLE_EQ(w.average(DyadicInterval::root()), 2.0);
  EXPECT_DOUBLE_EQ(w.mass(DyadicInterval::root()), 2.0);

  std::mt19937_64 rng(3);
  const Weight v(oracle::random_weight_values(DyadicGrid(5), rng));
  const auto one_fn = StepFunction::constant(v.grid(), 1.0);
  const auto f = oracle::random_function(v.grid(), rng);
  for (const auto& I : oracle::all_intervals(v.grid(), true)) {
    EXPECT_NEAR(weighted_expectation(v, one_fn, I), 1.0, 1e-14);
    EXPECT_NEAR(v.expectation(f, I), oracle::weighted_integral(f, v.function(), I) / oracle::integral(v.function(), I),
                1e-12);
  }
}

TEST(A2, Examples) {
  EXPECT_DOUBLE_EQ(a2_characteristic(Weight::constant(DyadicGrid(6), 3.7)), 1.0);
  EXPECT_NEAR(a2_characteristic(Weight(StepFunction(DyadicGrid(1), {1, 3}))), 4.0 / 3.0, 1e-15);
  const auto r = a2_characteristic_at(Weight(StepFunction(DyadicGrid(2), {4, 4, 1, 1})));
  EXPECT_NEAR(r.value, 1.5625, 1e-15);
  EXPECT_EQ(r.argmax, DyadicInterval::root());
}

TEST(A2, MatchesOracleAndIsInversionSymmetric) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    const Weight w(oracle::random_weight_values(DyadicGrid(1 + t % 6), rng));
    const double a2 = a2_characteristic(w);
    EXPECT_GE(a2, 1.0 - 1e-14);
    EXPECT_NEAR(a2, oracle::a2(w.function()), 1e-12 * a2);
    EXPECT_NEAR(a2, a2_characteristic(w.inverse()), 1e-12 * a2);
  }
}

TEST(Rho, Examples) {
  std::mt19937_64 rng(9);
  const Weight mu(oracle::random_weight_values(DyadicGrid(4), rng));
  const Weight lambda(oracle::random_weight_values(DyadicGrid(4), rng));
  const auto same = rho_weight(mu, mu);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(same[i], 1.0);

  const auto r = rho_weight(Weight(StepFunction(DyadicGrid(1), {4, 1})), Weight::constant(DyadicGrid(1)));
  EXPECT_DOUBLE_EQ(r[0], 2.0);
  EXPECT_DOUBLE_EQ(r[1], 1.0);

  const auto a = rho_weight(mu, lambda), b = rho_weight(lambda, mu);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(a[i] * b[i], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(a2_characteristic(a)));
  EXPECT_THROW(rho_weight(mu, Weight::constant(DyadicGrid(3))), GridMismatch);
}

TEST(Generate, ConstantAndDegeneratePower) {
  EnsembleSpec spec;
  spec.depth = 6;
  const auto w = generate_weight(spec);
  EXPECT_EQ(a2_characteristic(w), 1.0);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(w[i], 1.0);

  spec.kind = EnsembleKind::power;
  spec.alpha = 0.0;
  const auto p = generate_weight(spec);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(p[i], 1.0);
}

TEST(Generate, PowerMassesAreExact) {
  for (double alpha : {-0.9, -0.5, -0.1, 0.3, 0.7, 0.95}) {
    EnsembleSpec spec;
    spec.kind = EnsembleKind::power;
    spec.depth = 10;
    spec.alpha = alpha;
    const auto w = generate_weight(spec);
    const double exact = 2.0 * std::pow(0.5, alpha + 1.0) / (alpha + 1.0);
    EXPECT_NEAR(w.mass(DyadicInterval::root()), exact, 1e-10) << alpha;
    // Interval masses agree with the antiderivative on every interval, not just the root.
    auto F = [&](double x) {
      const double d = x - 0.5;
      const double m = std::pow(std::abs(d), alpha + 1) / (alpha + 1);
      return d < 0 ? -m : m;
    };
    for (const auto& I : oracle::all_intervals(DyadicGrid(5)))
      EXPECT_NEAR(w.mass(I), F(I.end()) - F(I.start()), 1e-10);
  }
  EnsembleSpec bad;
  bad.kind = EnsembleKind::power;
  bad.alpha = 1.0;
  EXPECT_THROW(generate_weight(bad), std::invalid_argument);
}

TEST(Generate, CascadeIsDeterministicPositiveMartingale) {
  EnsembleSpec spec;
  spec.kind = EnsembleKind::cascade;
  spec.depth = 8;
  spec.delta = 0.4;
  spec.seed = 42;
  const auto w = generate_weight(spec);
  const auto again = generate_weight(spec);
  for (std::size_t i = 0; i < w.grid().leaf_count(); ++i) {
    EXPECT_GT(w[i], 0.0);
    EXPECT_EQ(w[i], again[i]);
  }
  EXPECT_TRUE(std::isfinite(a2_characteristic(w)));
  // Siblings average to the parent node value, so the root average is the root value 1.
  EXPECT_NEAR(w.average(DyadicInterval::root()), 1.0, 1e-13);
  for (std::size_t i = 0; i < w.grid().haar_count(); ++i)
    EXPECT_EQ(w.masses()[i], w.masses()[2 * i + 1] + w.masses()[2 * i + 2]);
  spec.seed = 43;
  EXPECT_NE(generate_weight(spec)[0], w[0]);
  spec.delta = 1.0;
  EXPECT_THROW(generate_weight(spec), std::invalid_argument);
}

TEST(Generate, A2TargetRejectionSampling) {
  EnsembleSpec spec;
  spec.kind = EnsembleKind::cascade;
  spec.depth = 8;
  spec.delta = 0.5;
  spec.seed = 1;
  spec.a2_target = std::pair{1.0, 4.0};
  const double a2 = a2_characteristic(generate_weight(spec));
  EXPECT_GE(a2, 1.0);
  EXPECT_LE(a2, 4.0);

  spec.a2_target = std::pair{100.0, 200.0};
  spec.max_retries = 5;
  EXPECT_THROW(generate_weight(spec), UnreachableA2Target);
}

TEST(Generate, Symbols) {
  EnsembleSpec spec;
  spec.kind = EnsembleKind::haar_sparse_symbol;
  spec.depth = 7;
  spec.seed = 5;
  spec.sparsity = 0.2;
  const auto b = generate_symbol(spec);
  const auto s = haar_analyze(b);
  EXPECT_LE(s.top_level(1e-14), 5);
  EXPECT_GE(s.top_level(1e-14), 0);
  EXPECT_EQ(generate_symbol(spec)[3], b[3]);

  spec.kind = EnsembleKind::log_symbol;
  const auto l = generate_symbol(spec);
  EXPECT_LE(haar_analyze(l).top_level(1e-14), 5);

  spec.admissible = false;
  EXPECT_EQ(haar_analyze(generate_symbol(spec)).top_level(1e-14), 6);
  EXPECT_THROW(generate_weight(spec), std::invalid_argument);
}

TEST(Seeds, Derivation) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}
