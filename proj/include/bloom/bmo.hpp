#pragma once

// BMO-type functionals of a symbol b relative to a pair of weights, evaluated
// exactly as maxima over the finite dyadic tree.

#include <algorithm>
#include <cmath>
#include <vector>

#include "bloom/dyadic.hpp"
#include "bloom/weights.hpp"

namespace bloom {

/// A supremum over the tree together with the interval that attains it.
struct Supremum {
  double value = 0.0;
  DyadicInterval argmax = DyadicInterval::root();

  void offer(double candidate, const DyadicInterval& interval) {
    if (candidate > value) {
      value = candidate;
      argmax = interval;
    }
  }
};

namespace detail {

/// sup_K w(K)^{-1} Σ_{I ⊆ K} term(I), via one bottom-up pass.
template <typename Term>
Supremum normalized_subtree_sup(const DyadicGrid& grid, const Weight& normalizer, Term&& term) {
  std::vector<double> subtree(grid.interval_count(), 0.0);
  Supremum best;
  for (std::size_t i = grid.haar_count(); i-- > 0;) {
    const auto I = DyadicInterval::from_index(i);
    subtree[i] = term(I) + subtree[2 * i + 1] + subtree[2 * i + 2];
    best.offer(subtree[i] / normalizer.mass(I), I);
  }
  return best;
}

/// ∫_I |b - ⟨b⟩_I|² w dx for every interval (w = nullptr means Lebesgue).
inline double oscillation(const StepFunction& b, const Weight* w, const DyadicInterval& I) {
  const auto& grid = b.grid();
  auto [lo, hi] = grid.leaf_range(I);
  double mean = 0.0;
  for (auto i = lo; i < hi; ++i) mean += b[i];
  mean /= static_cast<double>(hi - lo);
  double s = 0.0;
  for (auto i = lo; i < hi; ++i) {
    const double d = b[i] - mean;
    s += d * d * (w ? (*w)[i] : 1.0);
  }
  return s * grid.leaf_width();
}

}  // namespace detail

/// 𝐁₂[μ,λ] in coefficient form: sup_K μ⁻¹(K)⁻¹ Σ_{I⊆K} b̂(I)²⟨μ⁻¹⟩_I²⟨λ⟩_I, square-rooted.
inline Supremum bloom_b2_at(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  b.require_same_grid(mu.function());
  b.require_same_grid(lambda.function());
  const auto spectrum = haar_analyze(b);
  const auto mu_inv = mu.inverse();
  auto best = detail::normalized_subtree_sup(b.grid(), mu_inv, [&](const DyadicInterval& I) {
    const double c = spectrum.coeff(I);
    const double m = mu_inv.average(I);
    return c * c * m * m * lambda.average(I);
  });
  best.value = std::sqrt(best.value);
  return best;
}

inline double bloom_b2(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  return bloom_b2_at(b, mu, lambda).value;
}

/// 𝐁₂[λ⁻¹, μ⁻¹], the functional governing the adjoint paraproduct.
inline Supremum bloom_b2_dual_at(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  return bloom_b2_at(b, lambda.inverse(), mu.inverse());
}

inline double bloom_b2_dual(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  return bloom_b2_dual_at(b, mu, lambda).value;
}

/// 𝐁₂[μ,λ] in L²(λ) form: sup_K μ⁻¹(K)^{-1/2} ‖Σ_{I⊆K} b̂(I)⟨μ⁻¹⟩_I h_I‖_{L²(λ)}.
/// Synthesizes each localized sum separately; O(4^D).
inline Supremum bloom_b2_l2form_at(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  b.require_same_grid(mu.function());
  b.require_same_grid(lambda.function());
  const auto& grid = b.grid();
  const auto spectrum = haar_analyze(b);
  const auto mu_inv = mu.inverse();
  Supremum best;
  for (std::size_t k = 0; k < grid.haar_count(); ++k) {
    const auto K = DyadicInterval::from_index(k);
    HaarSpectrum local(grid);
    for (std::size_t i = 0; i < grid.haar_count(); ++i) {
      const auto I = DyadicInterval::from_index(i);
      if (I.within(K)) local.coeffs()[i] = spectrum.coeffs()[i] * mu_inv.average(I);
    }
    const auto g = haar_synthesize(local);
    best.offer(std::sqrt(lambda.norm_squared(g) / mu_inv.mass(K)), K);
  }
  return best;
}

inline double bloom_b2_l2form(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  return bloom_b2_l2form_at(b, mu, lambda).value;
}

/// Dyadic ‖b‖_{BMO_ρ} = sup_I (ρ(I)⁻¹ ∫_I |b − ⟨b⟩_I|²)^{1/2}.
inline Supremum bmo_rho_at(const StepFunction& b, const Weight& rho) {
  b.require_same_grid(rho.function());
  Supremum best;
  for (std::size_t i = 0; i < b.grid().haar_count(); ++i) {
    const auto I = DyadicInterval::from_index(i);
    best.offer(detail::oscillation(b, nullptr, I) / rho.mass(I), I);
  }
  best.value = std::sqrt(best.value);
  return best;
}

inline double bmo_rho(const StepFunction& b, const Weight& rho) { return bmo_rho_at(b, rho).value; }

/// L¹ form: sup_{I₀} ρ(I₀)⁻¹ ∫_{I₀} (Σ_{I⊆I₀} b̂(I)² 1_I/|I|)^{1/2}.
inline Supremum bmo_rho_l1_at(const StepFunction& b, const Weight& rho) {
  b.require_same_grid(rho.function());
  const auto& grid = b.grid();
  const auto spectrum = haar_analyze(b);
  std::vector<double> energy;
  Supremum best;
  for (std::size_t r = 0; r < grid.haar_count(); ++r) {
    const auto root = DyadicInterval::from_index(r);
    // Localized square function on the leaves of root, top-down inside the subtree.
    const int levels = grid.depth() - root.level;
    energy.assign((std::size_t{2} << levels) - 1, 0.0);
    for (std::size_t local = 0; local < (std::size_t{1} << levels) - 1; ++local) {
      const auto sub = DyadicInterval::from_index(local);
      const DyadicInterval I{root.level + sub.level, (root.position << sub.level) + sub.position};
      const double c = spectrum.coeff(I);
      const double here = energy[local] + c * c / I.length();
      energy[2 * local + 1] = here;
      energy[2 * local + 2] = here;
    }
    double integral = 0.0;
    for (std::size_t leaf = (std::size_t{1} << levels) - 1; leaf < energy.size(); ++leaf)
      integral += std::sqrt(energy[leaf]);
    integral *= grid.leaf_width();
    best.offer(integral / rho.mass(root), root);
  }
  return best;
}

inline double bmo_rho_l1(const StepFunction& b, const Weight& rho) { return bmo_rho_l1_at(b, rho).value; }

/// sup_I (μ⁻¹(I)|I|⁻²) ∫_I |b − ⟨b⟩_I|² λ, square-rooted.
inline Supremum neccon_functional_at(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  b.require_same_grid(mu.function());
  b.require_same_grid(lambda.function());
  const auto mu_inv = mu.inverse();
  Supremum best;
  for (std::size_t i = 0; i < b.grid().haar_count(); ++i) {
    const auto I = DyadicInterval::from_index(i);
    const double len = I.length();
    best.offer(mu_inv.mass(I) / (len * len) * detail::oscillation(b, &lambda, I), I);
  }
  best.value = std::sqrt(best.value);
  return best;
}

inline double neccon_functional(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  return neccon_functional_at(b, mu, lambda).value;
}

/// sup_I μ(I)⁻¹ ∫_I |b − ⟨b⟩_I|² λ, square-rooted (the form before the A2 sandwich).
inline double weighted_oscillation_sup(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  Supremum best;
  for (std::size_t i = 0; i < b.grid().haar_count(); ++i) {
    const auto I = DyadicInterval::from_index(i);
    best.offer(detail::oscillation(b, &lambda, I) / mu.mass(I), I);
  }
  return std::sqrt(best.value);
}

struct BmoReport {
  Supremum bloom_b2;
  Supremum bloom_b2_dual;
  Supremum bloom_b2_l2form;
  Supremum bmo_rho;
  Supremum bmo_rho_l1;
  Supremum neccon;
};

inline BmoReport bmo_report(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  const auto rho = rho_weight(mu, lambda);
  return {bloom_b2_at(b, mu, lambda),     bloom_b2_dual_at(b, mu, lambda), bloom_b2_l2form_at(b, mu, lambda),
          bmo_rho_at(b, rho),             bmo_rho_l1_at(b, rho),           neccon_functional_at(b, mu, lambda)};
}

}  // namespace bloom
