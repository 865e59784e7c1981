#pragma once

// Positive weights on the dyadic grid, their interval statistics and A2
// characteristic, and seeded generators for weight and symbol ensembles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bloom/dyadic.hpp"

namespace bloom {

/// A strictly positive step function with cached masses w(I) for every interval.
class Weight {
 public:
  explicit Weight(StepFunction values) : values_(std::move(values)) {
    for (double v : values_.values())
      if (!(v > 0.0)) throw std::invalid_argument("weight values must be strictly positive");
    masses_ = interval_integrals(values_);
  }

  static Weight constant(DyadicGrid grid, double c = 1.0) { return Weight(StepFunction::constant(grid, c)); }

  const DyadicGrid& grid() const { return values_.grid(); }
  int depth() const { return values_.depth(); }
  const StepFunction& function() const { return values_; }
  double operator[](std::size_t leaf) const { return values_[leaf]; }

  /// w(I)
  double mass(const DyadicInterval& interval) const { return masses_[interval.index()]; }
  /// ⟨w⟩_I = w(I)/|I|
  double average(const DyadicInterval& interval) const { return mass(interval) / interval.length(); }
  std::span<const double> masses() const { return masses_; }

  /// E_I^w(f) = w(I)^{-1} ∫_I f w.
  double expectation(const StepFunction& f, const DyadicInterval& interval) const {
    values_.require_same_grid(f);
    auto [lo, hi] = grid().leaf_range(interval);
    double s = 0.0;
    for (auto i = lo; i < hi; ++i) s += f[i] * values_[i];
    return s * grid().leaf_width() / mass(interval);
  }

  Weight inverse() const {
    StepFunction inv(grid());
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / values_[i];
    return Weight(std::move(inv));
  }

  /// ‖f‖²_{L²(w)}
  double norm_squared(const StepFunction& f) const {
    values_.require_same_grid(f);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * f[i] * values_[i];
    return s * grid().leaf_width();
  }
  double norm(const StepFunction& f) const { return std::sqrt(norm_squared(f)); }

 private:
  StepFunction values_;
  std::vector<double> masses_;
};

inline double interval_mass(const Weight& w, const DyadicInterval& I) { return w.mass(I); }
inline double interval_average(const Weight& w, const DyadicInterval& I) { return w.average(I); }
inline double weighted_expectation(const Weight& w, const StepFunction& f, const DyadicInterval& I) {
  return w.expectation(f, I);
}

struct A2Result {
  double value = 1.0;
  DyadicInterval argmax;
};

/// sup over dyadic I ⊆ [0,1) of ⟨w⟩_I ⟨w^{-1}⟩_I, with the attaining interval.
inline A2Result a2_characteristic_at(const Weight& w) {
  const auto inv = interval_integrals(w.inverse().function());
  const auto masses = w.masses();
  A2Result best{0.0, DyadicInterval::root()};
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const auto I = DyadicInterval::from_index(i);
    const double len = I.length();
    const double product = (masses[i] / len) * (inv[i] / len);
    if (product > best.value) best = {product, I};
  }
  return best;
}

inline double a2_characteristic(const Weight& w) { return a2_characteristic_at(w).value; }

/// Leafwise (μ/λ)^{1/2}.
inline Weight rho_weight(const Weight& mu, const Weight& lambda) {
  mu.function().require_same_grid(lambda.function());
  StepFunction rho(mu.grid());
  for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = std::sqrt(mu[i] / lambda[i]);
  return Weight(std::move(rho));
}

// ---------------------------------------------------------------------------
// Ensembles

enum class EnsembleKind { constant, two_value, power, cascade, log_symbol, haar_sparse_symbol };

inline std::string_view to_string(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::constant: return "constant";
    case EnsembleKind::two_value: return "two-value";
    case EnsembleKind::power: return "power";
    case EnsembleKind::cascade: return "cascade";
    case EnsembleKind::log_symbol: return "log-symbol";
    case EnsembleKind::haar_sparse_symbol: return "haar-sparse-symbol";
  }
  return "?";
}

inline EnsembleKind parse_ensemble_kind(std::string_view name) {
  for (auto kind : {EnsembleKind::constant, EnsembleKind::two_value, EnsembleKind::power, EnsembleKind::cascade,
                    EnsembleKind::log_symbol, EnsembleKind::haar_sparse_symbol})
    if (to_string(kind) == name) return kind;
  throw std::invalid_argument("unknown ensemble kind '" + std::string(name) + "'");
}

inline bool is_symbol_kind(EnsembleKind kind) {
  return kind == EnsembleKind::log_symbol || kind == EnsembleKind::haar_sparse_symbol;
}

struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::constant;
  int depth = 8;
  std::uint64_t seed = 0;
  double alpha = 0.0;        ///< power exponent, in (-1, 1)
  double center = 0.5;       ///< power singularity x0
  double delta = 0.4;        ///< cascade amplitude, in (0, 1)
  double sparsity = 0.25;    ///< haar-sparse: inclusion probability per interval
  double amplitude = 1.0;    ///< symbol scale
  std::vector<double> values{};  ///< constant / two-value literals
  /// Symbols are generated with Haar spectrum on levels <= depth-2 unless cleared.
  bool admissible = true;
  std::optional<std::pair<double, double>> a2_target{};
  int max_retries = 64;
};

/// Raised when rejection sampling cannot reach the requested A2 range.
class UnreachableA2Target : public std::runtime_error {
 public:
  UnreachableA2Target(double lo, double hi, int retries)
      : std::runtime_error("A2 target [" + std::to_string(lo) + ", " + std::to_string(hi) +
                           "] not reached after " + std::to_string(retries) + " retries") {}
};

/// SplitMix64 finalizer; used for every seed derivation in the project.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` derived from `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream + 0x5851F42D4C957F2DULL));
}

namespace detail {

/// Uniform double in [0,1) from the top 53 bits; platform independent.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline void validate(const EnsembleSpec& spec) {
  if (spec.depth < 1 || spec.depth > 24) throw std::invalid_argument("ensemble depth must lie in [1, 24]");
  if (spec.kind == EnsembleKind::power && !(spec.alpha > -1.0 && spec.alpha < 1.0))
    throw std::invalid_argument("power exponent must lie in (-1, 1)");
  if ((spec.kind == EnsembleKind::cascade || spec.kind == EnsembleKind::log_symbol) &&
      !(spec.delta > 0.0 && spec.delta < 1.0))
    throw std::invalid_argument("cascade amplitude must lie in (0, 1)");
  if (spec.kind == EnsembleKind::haar_sparse_symbol && !(spec.sparsity > 0.0 && spec.sparsity <= 1.0))
    throw std::invalid_argument("sparsity must lie in (0, 1]");
  if (spec.kind == EnsembleKind::two_value && spec.values.size() != 2)
    throw std::invalid_argument("two-value spec needs exactly two values");
  if (spec.max_retries < 1) throw std::invalid_argument("max_retries must be positive");
}

inline StepFunction power_leaves(const DyadicGrid& grid, double alpha, double center) {
  // Exact leaf averages of |x - x0|^alpha via the antiderivative.
  auto antiderivative = [&](double x) {
    const double d = x - center;
    const double mag = std::pow(std::abs(d), alpha + 1.0) / (alpha + 1.0);
    return d < 0.0 ? -mag : mag;
  };
  StepFunction w(grid);
  const double width = grid.leaf_width();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double a = static_cast<double>(i) * width;
    w[i] = alpha == 0.0 ? 1.0 : (antiderivative(a + width) - antiderivative(a)) / width;
  }
  return w;
}

inline StepFunction cascade_leaves(const DyadicGrid& grid, double delta, std::mt19937_64& rng) {
  std::vector<double> node(grid.interval_count());
  node[0] = 1.0;
  for (std::size_t i = 0; i < grid.haar_count(); ++i) {
    const double u = uniform01(rng);
    const bool left_up = (rng() >> 63) != 0;
    const double up = node[i] * (1.0 + u * delta);
    const double down = node[i] * (1.0 - u * delta);
    node[2 * i + 1] = left_up ? up : down;
    node[2 * i + 2] = left_up ? down : up;
  }
  const auto offset = static_cast<std::ptrdiff_t>(grid.leaf_count() - 1);
  return StepFunction(grid, std::vector<double>(node.begin() + offset, node.end()));
}

inline StepFunction weight_leaves(const EnsembleSpec& spec, std::uint64_t seed) {
  const DyadicGrid grid(spec.depth);
  std::mt19937_64 rng(seed);
  switch (spec.kind) {
    case EnsembleKind::constant:
      return StepFunction::constant(grid, spec.values.empty() ? 1.0 : spec.values.front());
    case EnsembleKind::two_value: {
      StepFunction w(grid);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = spec.values[i < w.size() / 2 ? 0 : 1];
      return w;
    }
    case EnsembleKind::power: return power_leaves(grid, spec.alpha, spec.center);
    case EnsembleKind::cascade: return cascade_leaves(grid, spec.delta, rng);
    default: break;
  }
  throw std::invalid_argument("ensemble kind '" + std::string(to_string(spec.kind)) + "' is not a weight");
}

inline StepFunction symbol_leaves(const EnsembleSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Admissible symbols are constant on level-(D-1) cells.
  const int coarse_depth = spec.admissible && spec.depth > 1 ? spec.depth - 1 : spec.depth;
  const DyadicGrid coarse(coarse_depth);
  switch (spec.kind) {
    case EnsembleKind::log_symbol: {
      auto w = cascade_leaves(coarse, spec.delta, rng);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = spec.amplitude * std::log(w[i]);
      return refine(w, spec.depth);
    }
    case EnsembleKind::haar_sparse_symbol: {
      HaarSpectrum spectrum(coarse);
      bool any = false;
      for (std::size_t i = 0; i < coarse.haar_count(); ++i) {
        const bool keep = uniform01(rng) < spec.sparsity;
        const double c = 2.0 * uniform01(rng) - 1.0;
        if (keep) {
          spectrum.coeffs()[i] = spec.amplitude * c * std::sqrt(DyadicInterval::from_index(i).length());
          any = true;
        }
      }
      if (!any) {
        const auto i = static_cast<std::size_t>(rng() % coarse.haar_count());
        spectrum.coeffs()[i] = spec.amplitude * std::sqrt(DyadicInterval::from_index(i).length());
      }
      return refine(haar_synthesize(spectrum), spec.depth);
    }
    default: break;
  }
  throw std::invalid_argument("ensemble kind '" + std::string(to_string(spec.kind)) + "' is not a symbol");
}

}  // namespace detail

/// Deterministic weight from a spec; rejection-samples when an A2 target is set.
inline Weight generate_weight(const EnsembleSpec& spec) {
  detail::validate(spec);
  if (!spec.a2_target) return Weight(detail::weight_leaves(spec, spec.seed));
  const auto [lo, hi] = *spec.a2_target;
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    const auto seed = attempt == 0 ? spec.seed : derive_seed(spec.seed, static_cast<std::uint64_t>(attempt));
    Weight w(detail::weight_leaves(spec, seed));
    const double a2 = a2_characteristic(w);
    if (a2 >= lo && a2 <= hi) return w;
  }
  throw UnreachableA2Target(lo, hi, spec.max_retries);
}

inline StepFunction generate_symbol(const EnsembleSpec& spec) {
  detail::validate(spec);
  return detail::symbol_leaves(spec, spec.seed);
}

}  // namespace bloom
