#pragma once

// Finite dyadic grid on [0,1), step functions on its leaves, and exact Haar
// analysis/synthesis.
//
// Intervals are stored in heap order: the root [0,1) has index 0 and the
// interval (level k, position j) has index 2^k - 1 + j. Leaves sit at level D.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bloom {

/// Raised when two objects live on grids of different depth.
class GridMismatch : public std::invalid_argument {
 public:
  GridMismatch(int lhs, int rhs)
      : std::invalid_argument("incompatible resolutions: depth " + std::to_string(lhs) +
                              " vs depth " + std::to_string(rhs)) {}
};

/// A node [position 2^-level, (position+1) 2^-level) of the dyadic tree.
struct DyadicInterval {
  int level = 0;
  std::int64_t position = 0;

  static constexpr DyadicInterval root() { return {0, 0}; }
  static constexpr DyadicInterval from_index(std::size_t index) {
    const int level = static_cast<int>(std::bit_width(index + 1)) - 1;
    return {level, static_cast<std::int64_t>(index - ((std::size_t{1} << level) - 1))};
  }

  constexpr std::size_t index() const {
    return (std::size_t{1} << level) - 1 + static_cast<std::size_t>(position);
  }
  constexpr DyadicInterval left() const { return {level + 1, 2 * position}; }
  constexpr DyadicInterval right() const { return {level + 1, 2 * position + 1}; }
  constexpr DyadicInterval parent() const { return {level - 1, position / 2}; }

  double length() const { return std::ldexp(1.0, -level); }
  double start() const { return static_cast<double>(position) * length(); }
  double end() const { return static_cast<double>(position + 1) * length(); }

  /// True when *this is a (not necessarily strict) subinterval of other.
  constexpr bool within(const DyadicInterval& other) const {
    return level >= other.level && (position >> (level - other.level)) == other.position;
  }

  friend constexpr bool operator==(const DyadicInterval&, const DyadicInterval&) = default;
  friend constexpr auto operator<=>(const DyadicInterval&, const DyadicInterval&) = default;
};

/// The dyadic tree on [0,1) truncated at leaf level `depth`.
class DyadicGrid {
 public:
  explicit DyadicGrid(int depth) : depth_(depth) {
    if (depth < 1 || depth > 24) throw std::invalid_argument("grid depth must lie in [1, 24]");
  }

  int depth() const { return depth_; }
  std::size_t leaf_count() const { return std::size_t{1} << depth_; }
  double leaf_width() const { return std::ldexp(1.0, -depth_); }
  /// All intervals, levels 0..depth.
  std::size_t interval_count() const { return (std::size_t{2} << depth_) - 1; }
  /// Intervals carrying a Haar coefficient, levels 0..depth-1.
  std::size_t haar_count() const { return leaf_count() - 1; }

  bool contains(const DyadicInterval& interval) const {
    return interval.level >= 0 && interval.level <= depth_ && interval.position >= 0 &&
           interval.position < (std::int64_t{1} << interval.level);
  }
  bool has_children(const DyadicInterval& interval) const { return interval.level < depth_; }

  /// Leaves covered by `interval`, as a half-open index range.
  std::pair<std::size_t, std::size_t> leaf_range(const DyadicInterval& interval) const {
    const int shift = depth_ - interval.level;
    const auto first = static_cast<std::size_t>(interval.position) << shift;
    return {first, first + (std::size_t{1} << shift)};
  }

  friend bool operator==(const DyadicGrid&, const DyadicGrid&) = default;

 private:
  int depth_;
};

/// A real function constant on each of the 2^D leaves of a grid.
class StepFunction {
 public:
  explicit StepFunction(DyadicGrid grid) : grid_(grid), values_(grid.leaf_count(), 0.0) {}

  StepFunction(DyadicGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.leaf_count())
      throw std::invalid_argument("step function needs " + std::to_string(grid_.leaf_count()) +
                                  " leaf values, got " + std::to_string(values_.size()));
    for (double v : values_)
      if (!std::isfinite(v)) throw std::invalid_argument("step function values must be finite");
  }

  static StepFunction constant(DyadicGrid grid, double c) {
    return StepFunction(grid, std::vector<double>(grid.leaf_count(), c));
  }
  static StepFunction indicator(DyadicGrid grid, const DyadicInterval& interval) {
    StepFunction f(grid);
    auto [lo, hi] = grid.leaf_range(interval);
    for (auto i = lo; i < hi; ++i) f.values_[i] = 1.0;
    return f;
  }
  /// The Haar function h_I = |I|^{-1/2}(-1 on the left child, +1 on the right child).
  static StepFunction haar(DyadicGrid grid, const DyadicInterval& interval) {
    if (!grid.has_children(interval)) throw std::invalid_argument("Haar function needs level < depth");
    StepFunction f(grid);
    const double amplitude = 1.0 / std::sqrt(interval.length());
    auto [lo, hi] = grid.leaf_range(interval);
    const auto mid = lo + (hi - lo) / 2;
    for (auto i = lo; i < mid; ++i) f.values_[i] = -amplitude;
    for (auto i = mid; i < hi; ++i) f.values_[i] = amplitude;
    return f;
  }

  const DyadicGrid& grid() const { return grid_; }
  int depth() const { return grid_.depth(); }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t leaf) const { return values_[leaf]; }
  double& operator[](std::size_t leaf) { return values_[leaf]; }

  double integral() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s * grid_.leaf_width();
  }
  double integral_over(const DyadicInterval& interval) const {
    auto [lo, hi] = grid_.leaf_range(interval);
    double s = 0.0;
    for (auto i = lo; i < hi; ++i) s += values_[i];
    return s * grid_.leaf_width();
  }
  double average_over(const DyadicInterval& interval) const {
    return integral_over(interval) / interval.length();
  }

  StepFunction& operator+=(const StepFunction& other) {
    require_same_grid(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }
  StepFunction& operator-=(const StepFunction& other) {
    require_same_grid(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }
  StepFunction& operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
  }
  friend StepFunction operator+(StepFunction lhs, const StepFunction& rhs) { return lhs += rhs; }
  friend StepFunction operator-(StepFunction lhs, const StepFunction& rhs) { return lhs -= rhs; }
  friend StepFunction operator*(double c, StepFunction f) { return f *= c; }
  friend StepFunction operator*(StepFunction f, double c) { return f *= c; }

  void require_same_grid(const StepFunction& other) const {
    if (grid_ != other.grid_) throw GridMismatch(depth(), other.depth());
  }

 private:
  DyadicGrid grid_;
  std::vector<double> values_;
};

/// Global mean plus one Haar coefficient per interval of level < D, heap-indexed.
class HaarSpectrum {
 public:
  explicit HaarSpectrum(DyadicGrid grid) : grid_(grid), coeffs_(grid.haar_count(), 0.0) {}

  const DyadicGrid& grid() const { return grid_; }
  double mean() const { return mean_; }
  void set_mean(double m) { mean_ = m; }

  double coeff(const DyadicInterval& interval) const { return coeffs_.at(interval.index()); }
  double& coeff(const DyadicInterval& interval) { return coeffs_.at(interval.index()); }
  std::span<const double> coeffs() const { return coeffs_; }
  std::span<double> coeffs() { return coeffs_; }

  /// Largest level carrying a nonzero (beyond `tol`) coefficient, or -1.
  int top_level(double tol = 0.0) const {
    for (int level = grid_.depth() - 1; level >= 0; --level) {
      const auto first = (std::size_t{1} << level) - 1;
      for (std::size_t i = first; i < 2 * first + 1; ++i)
        if (std::abs(coeffs_[i]) > tol) return level;
    }
    return -1;
  }

 private:
  DyadicGrid grid_;
  double mean_ = 0.0;
  std::vector<double> coeffs_;
};

/// Masses ∫_I f for every interval, heap-indexed over levels 0..D, built by pairwise sums.
inline std::vector<double> interval_integrals(const StepFunction& f) {
  const auto& grid = f.grid();
  std::vector<double> mass(grid.interval_count());
  const auto leaf_offset = grid.leaf_count() - 1;
  const double width = grid.leaf_width();
  for (std::size_t i = 0; i < grid.leaf_count(); ++i) mass[leaf_offset + i] = f[i] * width;
  for (std::size_t i = leaf_offset; i-- > 0;) mass[i] = mass[2 * i + 1] + mass[2 * i + 2];
  return mass;
}

inline HaarSpectrum haar_analyze(const StepFunction& f) {
  const auto& grid = f.grid();
  HaarSpectrum spectrum(grid);
  const auto mass = interval_integrals(f);
  spectrum.set_mean(mass[0]);
  auto coeffs = spectrum.coeffs();
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    const auto interval = DyadicInterval::from_index(i);
    coeffs[i] = (mass[2 * i + 2] - mass[2 * i + 1]) / std::sqrt(interval.length());
  }
  return spectrum;
}

inline StepFunction haar_synthesize(const HaarSpectrum& spectrum) {
  const auto& grid = spectrum.grid();
  // Top-down pass over interval averages.
  std::vector<double> average(grid.interval_count());
  average[0] = spectrum.mean();
  const auto coeffs = spectrum.coeffs();
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    const double jump = coeffs[i] / std::sqrt(DyadicInterval::from_index(i).length());
    average[2 * i + 1] = average[i] - jump;
    average[2 * i + 2] = average[i] + jump;
  }
  const auto leaf_offset = grid.leaf_count() - 1;
  return StepFunction(grid, std::vector<double>(average.begin() + static_cast<std::ptrdiff_t>(leaf_offset),
                                                average.end()));
}

inline StepFunction pointwise_multiply(const StepFunction& f, const StepFunction& g) {
  f.require_same_grid(g);
  StepFunction out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] * g[i];
  return out;
}

/// Unweighted pairing ∫ f g.
inline double inner_product(const StepFunction& f, const StepFunction& g) {
  f.require_same_grid(g);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
  return s * f.grid().leaf_width();
}

inline double l2_norm(const StepFunction& f) { return std::sqrt(inner_product(f, f)); }

inline double max_abs_difference(const StepFunction& f, const StepFunction& g) {
  f.require_same_grid(g);
  double m = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) m = std::max(m, std::abs(f[i] - g[i]));
  return m;
}

inline double max_abs(const StepFunction& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

/// Accumulates Σ_{I ∋ leaf} term(I) 1_I top-down, for I of level < D.
template <typename Term>
std::vector<double> accumulate_down(const DyadicGrid& grid, Term&& term) {
  std::vector<double> acc(grid.interval_count(), 0.0);
  for (std::size_t i = 0; i < grid.haar_count(); ++i) {
    const double here = acc[i] + term(DyadicInterval::from_index(i));
    acc[2 * i + 1] = here;
    acc[2 * i + 2] = here;
  }
  const auto leaf_offset = grid.leaf_count() - 1;
  return {acc.begin() + static_cast<std::ptrdiff_t>(leaf_offset), acc.end()};
}

/// Dyadic square function (Σ_I f̂(I)² 1_I/|I|)^{1/2}; the mean is excluded.
inline StepFunction square_function(const StepFunction& f) {
  const auto spectrum = haar_analyze(f);
  auto energy = accumulate_down(f.grid(), [&](const DyadicInterval& I) {
    const double c = spectrum.coeff(I);
    return c * c / I.length();
  });
  for (double& e : energy) e = std::sqrt(e);
  return StepFunction(f.grid(), std::move(energy));
}

/// Repeats each leaf value 2^(fine_depth - depth) times.
inline StepFunction refine(const StepFunction& f, int fine_depth) {
  if (fine_depth < f.depth()) throw std::invalid_argument("refine: target depth is coarser than the input");
  DyadicGrid fine(fine_depth);
  std::vector<double> values(fine.leaf_count());
  const std::size_t repeat = std::size_t{1} << (fine_depth - f.depth());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = f[i / repeat];
  return StepFunction(fine, std::move(values));
}

}  // namespace bloom
