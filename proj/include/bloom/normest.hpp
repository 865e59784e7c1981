#pragma once

// Weighted operator norms ‖T : L²(μ) → L²(λ)‖ on the leaf space, best
// constants of quadratic-form inequalities, and Carleson embedding checks.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bloom/bmo.hpp"
#include "bloom/dyadic.hpp"
#include "bloom/operators.hpp"
#include "bloom/weights.hpp"

namespace bloom {

/// Dense leaf-space matrix of a linear operator; column j is the image of the j-th leaf indicator.
struct LinearOperatorMatrix {
  Eigen::MatrixXd matrix;
  std::string tag;
  bool truncated = false;  ///< the shift's level-(D-1) output was dropped somewhere

  DyadicGrid grid() const { return DyadicGrid(static_cast<int>(std::bit_width(static_cast<std::size_t>(matrix.cols())) - 1)); }

  StepFunction apply(const StepFunction& f) const {
    Eigen::Map<const Eigen::VectorXd> x(f.values().data(), static_cast<Eigen::Index>(f.size()));
    Eigen::VectorXd y = matrix * x;
    return StepFunction(f.grid(), std::vector<double>(y.data(), y.data() + y.size()));
  }
};

class NormCapExceeded : public std::invalid_argument {
 public:
  NormCapExceeded(int depth, int cap)
      : std::invalid_argument("depth " + std::to_string(depth) + " exceeds the dense norm cap " +
                              std::to_string(cap) + "; use weighted_operator_norm_iterative instead") {}
};

class NotPositiveSemidefinite : public std::invalid_argument {
 public:
  explicit NotPositiveSemidefinite(double min_eigenvalue)
      : std::invalid_argument("quadratic form is not positive semidefinite (min eigenvalue " +
                              std::to_string(min_eigenvalue) + ")") {}
};

inline constexpr int default_dense_depth_cap = 10;

template <typename Op>
LinearOperatorMatrix assemble(const DyadicGrid& grid, std::string tag, Op&& op) {
  const auto n = static_cast<Eigen::Index>(grid.leaf_count());
  LinearOperatorMatrix out{Eigen::MatrixXd(n, n), std::move(tag), false};
  for (Eigen::Index j = 0; j < n; ++j) {
    StepFunction e(grid);
    e[static_cast<std::size_t>(j)] = 1.0;
    const StepFunction col = op(e);
    for (Eigen::Index i = 0; i < n; ++i) out.matrix(i, j) = col[static_cast<std::size_t>(i)];
  }
  return out;
}

inline LinearOperatorMatrix identity_matrix(const DyadicGrid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.leaf_count());
  return {Eigen::MatrixXd::Identity(n, n), "identity", false};
}

inline LinearOperatorMatrix paraproduct_matrix(const StepFunction& b) {
  return assemble(b.grid(), "paraproduct", [&](const StepFunction& f) { return paraproduct(b, f); });
}

inline LinearOperatorMatrix paraproduct_adjoint_matrix(const StepFunction& b) {
  return assemble(b.grid(), "paraproduct_adjoint", [&](const StepFunction& f) { return paraproduct_adjoint(b, f); });
}

/// Ш on the full leaf space with its level-(D-1) output truncated.
inline LinearOperatorMatrix shift_matrix(const DyadicGrid& grid) {
  auto m = assemble(grid, "shift", [](const StepFunction& f) { return haar_shift(f, ShiftMode::truncate); });
  m.truncated = true;
  return m;
}

/// [b,Ш] on the full leaf space, shift truncated as in shift_matrix.
inline LinearOperatorMatrix commutator_matrix(const StepFunction& b) {
  auto m = assemble(b.grid(), "commutator",
                    [&](const StepFunction& f) { return commutator_shift(b, f, ShiftMode::truncate); });
  m.truncated = true;
  return m;
}

namespace detail {

inline void require_finite(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) throw std::invalid_argument("operator matrix has non-finite entries");
}

/// Λ^{1/2} T M^{-1/2} with leaf Gram diagonals (the 2^{-D} factors cancel).
inline Eigen::MatrixXd weighted_form(const Eigen::MatrixXd& t, const Weight& mu, const Weight& lambda) {
  const auto n = t.rows();
  Eigen::VectorXd left(n), right(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    left(i) = std::sqrt(lambda[static_cast<std::size_t>(i)]);
    right(i) = 1.0 / std::sqrt(mu[static_cast<std::size_t>(i)]);
  }
  return left.asDiagonal() * t * right.asDiagonal();
}

}  // namespace detail

/// ‖T : L²(μ) → L²(λ)‖ as the top singular value of the weighted dense matrix A,
/// read off the largest eigenvalue of the symmetric AᵀA.
inline double weighted_operator_norm(const LinearOperatorMatrix& t, const Weight& mu, const Weight& lambda,
                                     int depth_cap = default_dense_depth_cap) {
  if (mu.depth() > depth_cap) throw NormCapExceeded(mu.depth(), depth_cap);
  if (t.matrix.rows() != static_cast<Eigen::Index>(mu.grid().leaf_count()) ||
      t.matrix.cols() != static_cast<Eigen::Index>(mu.grid().leaf_count()))
    throw GridMismatch(static_cast<int>(std::bit_width(static_cast<std::size_t>(t.matrix.cols())) - 1), mu.depth());
  mu.function().require_same_grid(lambda.function());
  detail::require_finite(t.matrix);
  const Eigen::MatrixXd a = detail::weighted_form(t.matrix, mu, lambda);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(a.cols(), a.cols());
  gram.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues()(a.cols() - 1)));
}

struct NormBounds {
  double lower = 0.0;
  double upper = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Matrix-free power iteration on AᵀA for A = Λ^{1/2} T M^{-1/2}.
/// Each step brackets σ_max² by the Rayleigh quotient θ and θ + ‖AᵀAx − θx‖; the upper
/// end is valid once x has aligned with the dominant singular direction.
inline NormBounds weighted_operator_norm_iterative(const std::function<StepFunction(const StepFunction&)>& apply,
                                                   const std::function<StepFunction(const StepFunction&)>& apply_transpose,
                                                   const Weight& mu, const Weight& lambda, double tolerance = 1e-6,
                                                   int max_iterations = 5000, std::uint64_t seed = 0x2545F4914F6CDD1DULL) {
  mu.function().require_same_grid(lambda.function());
  const auto& grid = mu.grid();
  const std::size_t n = grid.leaf_count();
  std::mt19937_64 rng(seed);
  std::vector<double> x(n);
  double norm = 0.0;
  for (auto& v : x) {
    v = detail::uniform01(rng) - 0.5;
    norm += v * v;
  }
  for (auto& v : x) v /= std::sqrt(norm);

  auto gram = [&](const std::vector<double>& v) {
    StepFunction f(grid);
    for (std::size_t i = 0; i < n; ++i) f[i] = v[i] / std::sqrt(mu[i]);
    auto y = apply(f);
    for (std::size_t i = 0; i < n; ++i) y[i] *= lambda[i];
    auto z = apply_transpose(y);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = z[i] / std::sqrt(mu[i]);
    return out;
  };

  NormBounds bounds;
  for (int it = 1; it <= max_iterations; ++it) {
    const auto y = gram(x);
    double theta = 0.0, ynorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      theta += x[i] * y[i];
      ynorm += y[i] * y[i];
    }
    ynorm = std::sqrt(ynorm);
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) residual += (y[i] - theta * x[i]) * (y[i] - theta * x[i]);
    residual = std::sqrt(residual);
    bounds = {std::sqrt(std::max(theta, 0.0)), std::sqrt(std::max(theta, 0.0) + residual), it, false};
    if (ynorm == 0.0) {
      bounds.converged = true;
      break;
    }
    if (bounds.upper - bounds.lower <= tolerance * std::max(bounds.upper, 1e-300)) {
      bounds.converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ynorm;
  }
  return bounds;
}

// ---------------------------------------------------------------------------
// Quadratic forms

/// Largest θ with xᵀAx = θ xᵀGx, i.e. the best C in xᵀAx <= C xᵀGx.
inline double best_quadratic_constant(const Eigen::MatrixXd& a, const Eigen::MatrixXd& g) {
  if (a.rows() != a.cols() || g.rows() != g.cols() || a.rows() != g.rows())
    throw std::invalid_argument("quadratic forms must be square and of equal size");
  detail::require_finite(a);
  detail::require_finite(g);
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> spectrum(sym, Eigen::EigenvaluesOnly);
  const double top = spectrum.eigenvalues().maxCoeff();
  const double bottom = spectrum.eigenvalues().minCoeff();
  if (bottom < -1e-12 * std::max(1.0, std::abs(top))) throw NotPositiveSemidefinite(bottom);
  if (top <= 0.0) return 0.0;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> pencil(sym, 0.5 * (g + g.transpose()),
                                                                   Eigen::EigenvaluesOnly);
  if (pencil.info() != Eigen::Success) throw std::invalid_argument("Gram form is not positive definite");
  return pencil.eigenvalues().maxCoeff();
}

/// Rows are the Haar coefficient functionals f ↦ f̂(I), I of level < D.
inline Eigen::MatrixXd haar_coefficient_matrix(const DyadicGrid& grid) {
  const auto rows = static_cast<Eigen::Index>(grid.haar_count());
  const auto cols = static_cast<Eigen::Index>(grid.leaf_count());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto I = DyadicInterval::from_index(static_cast<std::size_t>(r));
    const auto haar = StepFunction::haar(grid, I);
    for (Eigen::Index c = 0; c < cols; ++c) h(r, c) = haar[static_cast<std::size_t>(c)] * grid.leaf_width();
  }
  return h;
}

/// Diagonal Gram matrix of L²(w) on leaf vectors.
inline Eigen::MatrixXd gram_matrix(const Weight& w) {
  const auto n = static_cast<Eigen::Index>(w.grid().leaf_count());
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = w[static_cast<std::size_t>(i)] * w.grid().leaf_width();
  return d.asDiagonal();
}

/// Best C in Σ_I f̂(I)²/⟨w⟩_I <= C ‖f‖²_{L²(w⁻¹)}.
inline double square_function_weight_constant(const Weight& w) {
  const auto h = haar_coefficient_matrix(w.grid());
  Eigen::VectorXd scale(h.rows());
  for (Eigen::Index r = 0; r < h.rows(); ++r)
    scale(r) = 1.0 / w.average(DyadicInterval::from_index(static_cast<std::size_t>(r)));
  const Eigen::MatrixXd a = h.transpose() * scale.asDiagonal() * h;
  return best_quadratic_constant(a, gram_matrix(w.inverse()));
}

// ---------------------------------------------------------------------------
// Carleson sequences

/// Nonnegative a_I over all intervals (heap order, leaves included) with a reference weight.
class CarlesonSequence {
 public:
  CarlesonSequence(std::vector<double> a, Weight reference) : a_(std::move(a)), reference_(std::move(reference)) {
    if (a_.size() != reference_.grid().interval_count())
      throw std::invalid_argument("Carleson sequence needs one entry per interval");
    for (double v : a_)
      if (!(v >= 0.0)) throw std::invalid_argument("Carleson sequence entries must be nonnegative");
  }

  const std::vector<double>& values() const { return a_; }
  const Weight& reference() const { return reference_; }
  double operator[](const DyadicInterval& I) const { return a_[I.index()]; }

 private:
  std::vector<double> a_;
  Weight reference_;
};

/// a_I = b̂(I)²⟨μ⁻¹⟩_I²⟨λ⟩_I against μ⁻¹.
inline CarlesonSequence primal_carleson_sequence(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  const auto s = haar_analyze(b);
  const auto mu_inv = mu.inverse();
  std::vector<double> a(b.grid().interval_count(), 0.0);
  for (std::size_t i = 0; i < b.grid().haar_count(); ++i) {
    const auto I = DyadicInterval::from_index(i);
    const double m = mu_inv.average(I);
    a[i] = s.coeffs()[i] * s.coeffs()[i] * m * m * lambda.average(I);
  }
  return {std::move(a), mu_inv};
}

/// a_I = b̂(I)²⟨μ⁻¹⟩_I⟨λ⟩_I² against λ.
inline CarlesonSequence dual_carleson_sequence(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  const auto s = haar_analyze(b);
  const auto mu_inv = mu.inverse();
  std::vector<double> a(b.grid().interval_count(), 0.0);
  for (std::size_t i = 0; i < b.grid().haar_count(); ++i) {
    const auto I = DyadicInterval::from_index(i);
    const double l = lambda.average(I);
    a[i] = s.coeffs()[i] * s.coeffs()[i] * mu_inv.average(I) * l * l;
  }
  return {std::move(a), lambda};
}

/// sup_J w(J)⁻¹ Σ_{I⊆J} a_I.
inline Supremum carleson_constant_at(const CarlesonSequence& seq) {
  const auto& w = seq.reference();
  const auto& a = seq.values();
  std::vector<double> subtree(a);
  Supremum best;
  const auto count = w.grid().interval_count();
  const auto internal = w.grid().haar_count();
  for (std::size_t i = count; i-- > 0;) {
    if (i < internal) subtree[i] += subtree[2 * i + 1] + subtree[2 * i + 2];
    const auto J = DyadicInterval::from_index(i);
    best.offer(subtree[i] / w.mass(J), J);
  }
  return best;
}

inline double carleson_constant(const CarlesonSequence& seq) { return carleson_constant_at(seq).value; }

/// Best C in Σ_I a_I E_I^w(φ)² <= C ‖φ‖²_{L²(w)}.
inline double embedding_best_constant(const CarlesonSequence& seq) {
  const auto& w = seq.reference();
  const auto& grid = w.grid();
  const auto n = static_cast<Eigen::Index>(grid.leaf_count());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd v(n);
  for (std::size_t i = 0; i < grid.interval_count(); ++i) {
    const double coeff = seq.values()[i];
    if (coeff == 0.0) continue;
    const auto I = DyadicInterval::from_index(i);
    auto [lo, hi] = grid.leaf_range(I);
    const double mass = w.mass(I);
    v.setZero();
    for (auto j = lo; j < hi; ++j) v(static_cast<Eigen::Index>(j)) = w[j] * grid.leaf_width() / mass;
    const auto first = static_cast<Eigen::Index>(lo);
    const auto len = static_cast<Eigen::Index>(hi - lo);
    a.block(first, first, len, len).noalias() += coeff * v.segment(first, len) * v.segment(first, len).transpose();
  }
  return best_quadratic_constant(a, gram_matrix(w));
}

/// Constant of the dyadic Carleson embedding theorem.
inline constexpr double carleson_embedding_factor = 4.0;

struct EmbeddingCheck {
  double carleson_constant = 0.0;
  double best_constant = 0.0;
  bool within_bound = true;  ///< best_constant <= 4 · carleson_constant
};

inline EmbeddingCheck carleson_embedding_check(const CarlesonSequence& seq) {
  EmbeddingCheck out;
  out.carleson_constant = carleson_constant(seq);
  out.best_constant = embedding_best_constant(seq);
  out.within_bound =
      out.best_constant <= carleson_embedding_factor * out.carleson_constant * (1.0 + 1e-9) + 1e-300;
  return out;
}

struct NecessityAudit {
  double max_ratio = 0.0;  ///< max over K of (restricted-sum norm)/(test-function bound)
  DyadicInterval argmax = DyadicInterval::root();
  std::vector<double> ratios;  ///< per K, heap order over levels < D
};

/// Compares ‖Σ_{I⊆K} b̂(I)⟨μ⁻¹⟩_I h_I‖_{L²(λ)}/μ⁻¹(K)^{1/2} with
/// ‖Π_b(μ⁻¹1_K)‖_{L²(λ)}/‖μ⁻¹1_K‖_{L²(μ)} for every K.
inline NecessityAudit necessity_test_function_bound(const StepFunction& b, const Weight& mu, const Weight& lambda) {
  b.require_same_grid(mu.function());
  b.require_same_grid(lambda.function());
  const auto& grid = b.grid();
  const auto spectrum = haar_analyze(b);
  const auto mu_inv = mu.inverse();
  NecessityAudit audit;
  audit.ratios.assign(grid.haar_count(), 0.0);
  for (std::size_t k = 0; k < grid.haar_count(); ++k) {
    const auto K = DyadicInterval::from_index(k);
    HaarSpectrum local(grid);
    for (std::size_t i = 0; i < grid.haar_count(); ++i)
      if (DyadicInterval::from_index(i).within(K))
        local.coeffs()[i] = spectrum.coeffs()[i] * mu_inv.average(DyadicInterval::from_index(i));
    const double restricted = lambda.norm(haar_synthesize(local)) / std::sqrt(mu_inv.mass(K));

    auto test = pointwise_multiply(mu_inv.function(), StepFunction::indicator(grid, K));
    const double bound = lambda.norm(paraproduct(b, test)) / mu.norm(test);
    const double ratio = bound > 0.0 ? restricted / bound : 0.0;
    audit.ratios[k] = ratio;
    if (ratio > audit.max_ratio) {
      audit.max_ratio = ratio;
      audit.argmax = K;
    }
  }
  return audit;
}

}  // namespace bloom
