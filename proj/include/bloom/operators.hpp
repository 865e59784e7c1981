#pragma once

// Paraproducts, the Haar shift Ш h_I = (h_{I₋} − h_{I₊})/√2, its commutator
// with multiplication by b, and the six-term paraproduct expansion of that
// commutator.
//
// A function is admissible when its Haar spectrum lives on levels <= D-2, so
// that its shift is still representable on the same grid.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "bloom/dyadic.hpp"

namespace bloom {

class InadmissibleInput : public std::invalid_argument {
 public:
  InadmissibleInput(int level, int depth)
      : std::invalid_argument("input has Haar coefficients at level " + std::to_string(level) +
                              "; the shift on a depth-" + std::to_string(depth) +
                              " grid needs spectrum on levels <= " + std::to_string(depth - 2)),
        level_(level) {}
  int level() const { return level_; }

 private:
  int level_;
};

enum class ShiftMode {
  strict,    ///< reject inputs with level-(D-1) coefficients
  truncate,  ///< drop level-(D-1) coefficients and report it
};

/// Coefficients below this (relative to sup|f|) count as zero for admissibility.
inline constexpr double admissibility_tolerance = 1e-12;

inline bool is_admissible(const StepFunction& f) {
  const auto tol = admissibility_tolerance * std::max(1.0, max_abs(f));
  return haar_analyze(f).top_level(tol) <= f.depth() - 2;
}

/// Π_b f = Σ_I b̂(I)⟨f⟩_I h_I.
inline StepFunction paraproduct(const StepFunction& b, const StepFunction& f) {
  b.require_same_grid(f);
  const auto sb = haar_analyze(b);
  const auto mass = interval_integrals(f);
  HaarSpectrum out(b.grid());
  for (std::size_t i = 0; i < out.coeffs().size(); ++i) {
    const auto I = DyadicInterval::from_index(i);
    out.coeffs()[i] = sb.coeffs()[i] * mass[i] / I.length();
  }
  return haar_synthesize(out);
}

/// Π_b* f = Σ_I b̂(I) f̂(I) 1_I/|I|, the unweighted adjoint of Π_b.
inline StepFunction paraproduct_adjoint(const StepFunction& b, const StepFunction& f) {
  b.require_same_grid(f);
  const auto sb = haar_analyze(b);
  const auto sf = haar_analyze(f);
  return StepFunction(b.grid(), accumulate_down(b.grid(), [&](const DyadicInterval& I) {
                        return sb.coeff(I) * sf.coeff(I) / I.length();
                      }));
}

struct ShiftOutcome {
  StepFunction value;
  bool truncated = false;  ///< a nonzero level-(D-1) coefficient was dropped
};

/// Ш on the Haar basis, constants to 0.
inline ShiftOutcome haar_shift_checked(const StepFunction& f, ShiftMode mode) {
  const auto& grid = f.grid();
  const auto spectrum = haar_analyze(f);
  const auto tol = admissibility_tolerance * std::max(1.0, max_abs(f));
  const int top = spectrum.top_level(tol);
  const bool inadmissible = top > grid.depth() - 2;
  if (inadmissible && mode == ShiftMode::strict) throw InadmissibleInput(top, grid.depth());

  HaarSpectrum out(grid);
  const double s = std::numbers::sqrt2 / 2.0;
  const auto interior = (std::size_t{1} << (grid.depth() - 1)) - 1;  // intervals of level <= D-2
  for (std::size_t i = 0; i < interior; ++i) {
    const double c = spectrum.coeffs()[i];
    out.coeffs()[2 * i + 1] += s * c;
    out.coeffs()[2 * i + 2] -= s * c;
  }
  return {haar_synthesize(out), inadmissible};
}

inline StepFunction haar_shift(const StepFunction& f, ShiftMode mode = ShiftMode::strict) {
  return haar_shift_checked(f, mode).value;
}

/// Unweighted adjoint of the (truncated) shift: h_{I₋} ↦ h_I/√2, h_{I₊} ↦ −h_I/√2.
inline StepFunction haar_shift_adjoint(const StepFunction& f) {
  const auto& grid = f.grid();
  const auto spectrum = haar_analyze(f);
  HaarSpectrum out(grid);
  const double s = std::numbers::sqrt2 / 2.0;
  const auto interior = (std::size_t{1} << (grid.depth() - 1)) - 1;
  for (std::size_t i = 0; i < interior; ++i)
    out.coeffs()[i] = s * (spectrum.coeffs()[2 * i + 1] - spectrum.coeffs()[2 * i + 2]);
  return haar_synthesize(out);
}

/// [b,Ш]f = b·Шf − Ш(b·f).
inline StepFunction commutator_shift(const StepFunction& b, const StepFunction& f,
                                     ShiftMode mode = ShiftMode::strict) {
  b.require_same_grid(f);
  if (mode == ShiftMode::strict) {
    if (!is_admissible(b)) throw InadmissibleInput(haar_analyze(b).top_level(), b.depth());
    if (!is_admissible(f)) throw InadmissibleInput(haar_analyze(f).top_level(), f.depth());
  }
  return pointwise_multiply(b, haar_shift(f, mode)) - haar_shift(pointwise_multiply(b, f), mode);
}

/// The six terms of [b,Ш]f written through paraproducts.
struct ExpansionTerms {
  StepFunction sh_pi_b_f;       ///< Ш(Π_b f)
  StepFunction pi_b_sh_f;       ///< Π_b(Шf)
  StepFunction sh_pi_b_star_f;  ///< Ш(Π_b* f)
  StepFunction pi_b_star_sh_f;  ///< Π_b*(Шf)
  StepFunction pi_shf_b;        ///< Π_{Шf} b
  StepFunction sh_pi_f_b;       ///< Ш(Π_f b)
  /// Π_b(Шf) − Ш(Π_b f) + Π_b*(Шf) − Ш(Π_b* f) + Π_{Шf}b − Ш(Π_f b)
  StepFunction signed_sum;
  /// Same six terms with the first four signs flipped, kept for comparison.
  StepFunction flipped_sum;
  StepFunction commutator;

  double residual() const { return max_abs_difference(signed_sum, commutator); }
  double flipped_residual() const { return max_abs_difference(flipped_sum, commutator); }
};

inline ExpansionTerms expansion_terms(const StepFunction& b, const StepFunction& f) {
  auto commutator = commutator_shift(b, f, ShiftMode::strict);
  const auto shf = haar_shift(f);
  ExpansionTerms t{haar_shift(paraproduct(b, f)),
                   paraproduct(b, shf),
                   haar_shift(paraproduct_adjoint(b, f)),
                   paraproduct_adjoint(b, shf),
                   paraproduct(shf, b),
                   haar_shift(paraproduct(f, b)),
                   StepFunction(b.grid()),
                   StepFunction(b.grid()),
                   std::move(commutator)};
  const auto tail = t.pi_shf_b - t.sh_pi_f_b;
  t.signed_sum = t.pi_b_sh_f - t.sh_pi_b_f + t.pi_b_star_sh_f - t.sh_pi_b_star_f + tail;
  t.flipped_sum = t.sh_pi_b_f - t.pi_b_sh_f + t.sh_pi_b_star_f - t.pi_b_star_sh_f + tail;
  return t;
}

/// Closed form of Π_{Шf}b − Ш(Π_f b): −(1/√2) Σ_I b̂(I) f̂(I) |I|^{-1/2} (h_{I₋} + h_{I₊}).
inline StepFunction remainder_closed_form(const StepFunction& b, const StepFunction& f) {
  b.require_same_grid(f);
  if (!is_admissible(f)) throw InadmissibleInput(haar_analyze(f).top_level(), f.depth());
  if (!is_admissible(b)) throw InadmissibleInput(haar_analyze(b).top_level(), b.depth());
  const auto& grid = b.grid();
  const auto sb = haar_analyze(b);
  const auto sf = haar_analyze(f);
  HaarSpectrum out(grid);
  const double s = std::numbers::sqrt2 / 2.0;
  const auto interior = (std::size_t{1} << (grid.depth() - 1)) - 1;
  for (std::size_t i = 0; i < interior; ++i) {
    const auto I = DyadicInterval::from_index(i);
    const double c = -s * sb.coeffs()[i] * sf.coeffs()[i] / std::sqrt(I.length());
    out.coeffs()[2 * i + 1] += c;
    out.coeffs()[2 * i + 2] += c;
  }
  return haar_synthesize(out);
}

}  // namespace bloom
