#pragma once

// Stopping-time constructions on the dyadic tree: maximal stopping intervals,
// packing ratios, the search for a packing constant, and corona generations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bloom/dyadic.hpp"
#include "bloom/weights.hpp"

namespace bloom {

/// A stopping rule evaluated during a depth-first walk below a root.
///
/// `path_term` feeds a running sum Σ_{I ⊆ I' ⊆ root} path_term(I') along the walk, so that
/// path-sum conditions cost O(1) per interval. `stops` sees the candidate interval, the
/// root it is anchored at, and that running sum.
struct StoppingPredicate {
  std::function<bool(const DyadicInterval& interval, const DyadicInterval& root, double path_sum)> stops;
  std::function<double(const DyadicInterval&)> path_term;

  static StoppingPredicate never() {
    return {[](const DyadicInterval&, const DyadicInterval&, double) { return false; }, {}};
  }
};

struct StoppingFamily {
  DyadicInterval root;
  std::vector<DyadicInterval> members;  ///< pairwise disjoint, strictly inside root
  std::vector<DyadicInterval> unstopped;  ///< root and every I ⊆ root not inside a member
  int generation = 0;
};

inline StoppingFamily maximal_stopping_intervals(const DyadicGrid& grid, const DyadicInterval& root,
                                                 const StoppingPredicate& predicate) {
  if (!grid.contains(root)) throw std::invalid_argument("stopping root is outside the grid");
  StoppingFamily family{root, {}, {root}, 0};
  auto term = [&](const DyadicInterval& I) { return predicate.path_term ? predicate.path_term(I) : 0.0; };

  struct Frame {
    DyadicInterval interval;
    double path_sum;
  };
  std::vector<Frame> stack;
  const double base = term(root);
  if (grid.has_children(root)) {
    stack.push_back({root.right(), base});
    stack.push_back({root.left(), base});
  }
  while (!stack.empty()) {
    const auto [I, above] = stack.back();
    stack.pop_back();
    const double path_sum = above + term(I);
    if (predicate.stops(I, root, path_sum)) {
      family.members.push_back(I);
      continue;
    }
    family.unstopped.push_back(I);
    if (grid.has_children(I)) {
      stack.push_back({I.right(), path_sum});
      stack.push_back({I.left(), path_sum});
    }
  }
  return family;
}

/// Σ_{S ∈ members} w(S) / w(root).
inline double packing_ratio(const StoppingFamily& family, const Weight& w) {
  double s = 0.0;
  for (const auto& S : family.members) s += w.mass(S);
  return s / w.mass(family.root);
}

// ---------------------------------------------------------------------------
// Predicate builders

/// ⟨w⟩_I > C⟨w⟩_root or ⟨w⟩_I < C⁻¹⟨w⟩_root, OR-ed over the given weights.
inline StoppingPredicate deviation_predicate(std::vector<Weight> weights, double c) {
  return {[weights = std::move(weights), c](const DyadicInterval& I, const DyadicInterval& root, double) {
            for (const auto& w : weights) {
              const double anchor = w.average(root);
              const double here = w.average(I);
              if (here > c * anchor || here < anchor / c) return true;
            }
            return false;
          },
          {}};
}

/// ⟨μ⁻¹⟩_S ≥ factor·⟨μ⁻¹⟩_root.
inline StoppingPredicate inverse_weight_jump_predicate(const Weight& mu, double factor = 4.0) {
  return {[mu_inv = mu.inverse(), factor](const DyadicInterval& I, const DyadicInterval& root, double) {
            return mu_inv.average(I) >= factor * mu_inv.average(root);
          },
          {}};
}

namespace detail {
inline std::function<double(const DyadicInterval&)> normalized_energy_term(const StepFunction& b) {
  return [spectrum = haar_analyze(b), depth = b.depth()](const DyadicInterval& I) {
    if (I.level >= depth) return 0.0;
    const double c = spectrum.coeff(I);
    return c * c / I.length();
  };
}
}  // namespace detail

/// Stops when ⟨μ⁻¹⟩_I > C⟨μ⁻¹⟩_root, ⟨ρ⟩_I > C⟨ρ⟩_root, or
/// Σ_{I⊆I'⊆root} b̂(I')²/|I'| > (C_b⟨ρ⟩_root)².
inline StoppingPredicate three_condition_predicate(const Weight& mu, const Weight& rho, const StepFunction& b,
                                                   double c, double c_b) {
  return {[mu_inv = mu.inverse(), rho, c, c_b](const DyadicInterval& I, const DyadicInterval& root, double path_sum) {
            if (mu_inv.average(I) > c * mu_inv.average(root)) return true;
            if (rho.average(I) > c * rho.average(root)) return true;
            const double cap = c_b * rho.average(root);
            return path_sum > cap * cap;
          },
          detail::normalized_energy_term(b)};
}

/// Stops when Σ_{S⊆I⊆root} b̂(I)²/|I| ≥ C·level·⟨ρ⟩_root, where level plays the role of 𝐁₂².
inline StoppingPredicate square_sum_predicate(const StepFunction& b, const Weight& rho, double c, double level) {
  return {[rho, c, level](const DyadicInterval&, const DyadicInterval& root, double path_sum) {
            return path_sum >= c * level * rho.average(root);
          },
          detail::normalized_energy_term(b)};
}

// ---------------------------------------------------------------------------
// Packing constant search and corona iteration

using PredicateFamily = std::function<StoppingPredicate(double c)>;

class PackingTargetUnreachable : public std::runtime_error {
 public:
  explicit PackingTargetUnreachable(double best_ratio)
      : std::runtime_error("no stopping constant in [1.1, 2^20] reaches the packing target; best ratio " +
                           std::to_string(best_ratio)),
        best_ratio_(best_ratio) {}
  double best_ratio() const { return best_ratio_; }

 private:
  double best_ratio_;
};

struct PackingSearch {
  double constant = 0.0;
  double ratio = 0.0;
};

/// Grid of candidate constants 1.1^k, k = 1, 2, ..., up to 2^20.
inline std::vector<double> packing_constant_grid() {
  std::vector<double> grid;
  for (int k = 1;; ++k) {
    const double c = std::pow(1.1, k);
    if (c > 1048576.0) break;
    grid.push_back(c);
  }
  return grid;
}

/// Smallest grid constant whose family at `root` packs to at most `target` in w-mass.
inline PackingSearch minimal_packing_constant(const DyadicGrid& grid, const DyadicInterval& root,
                                              const PredicateFamily& family, const Weight& w, double target = 0.5) {
  double best = std::numeric_limits<double>::infinity();
  for (double c : packing_constant_grid()) {
    const double ratio = packing_ratio(maximal_stopping_intervals(grid, root, family(c)), w);
    if (ratio <= target) return {c, ratio};
    best = std::min(best, ratio);
  }
  throw PackingTargetUnreachable(best);
}

/// Generation g+1 re-runs the construction inside every member of generation g; the
/// first stopping family is generation 1.
/// Each returned family holds all members of one generation, anchored at the original root.
inline std::vector<StoppingFamily> corona_generations(const DyadicGrid& grid, const DyadicInterval& root,
                                                      const StoppingPredicate& predicate, int max_generations) {
  std::vector<StoppingFamily> generations;
  std::vector<DyadicInterval> roots{root};
  for (int g = 0; g < max_generations; ++g) {
    StoppingFamily layer{root, {}, {}, g + 1};
    for (const auto& r : roots) {
      auto fam = maximal_stopping_intervals(grid, r, predicate);
      layer.members.insert(layer.members.end(), fam.members.begin(), fam.members.end());
      layer.unstopped.insert(layer.unstopped.end(), fam.unstopped.begin(), fam.unstopped.end());
    }
    const bool empty = layer.members.empty();
    roots = layer.members;
    generations.push_back(std::move(layer));
    if (empty) break;
  }
  return generations;
}

/// Smallest grid constant for which every stopping family met during the corona
/// iteration (root and all later generations) packs to at most `target`.
inline PackingSearch uniform_packing_constant(const DyadicGrid& grid, const DyadicInterval& root,
                                              const PredicateFamily& family, const Weight& w, double target,
                                              int max_generations) {
  double best = std::numeric_limits<double>::infinity();
  for (double c : packing_constant_grid()) {
    const auto predicate = family(c);
    std::vector<DyadicInterval> roots{root};
    double worst = 0.0;
    for (int g = 0; g < max_generations && !roots.empty() && worst <= target; ++g) {
      std::vector<DyadicInterval> next;
      for (const auto& r : roots) {
        auto fam = maximal_stopping_intervals(grid, r, predicate);
        worst = std::max(worst, packing_ratio(fam, w));
        next.insert(next.end(), fam.members.begin(), fam.members.end());
      }
      roots = std::move(next);
    }
    if (worst <= target) return {c, worst};
    best = std::min(best, worst);
  }
  throw PackingTargetUnreachable(best);
}

/// Σ_{S ∈ generation} w(S) for each generation, in order.
inline std::vector<double> generation_masses(const std::vector<StoppingFamily>& generations, const Weight& w) {
  std::vector<double> masses;
  for (const auto& g : generations) {
    double s = 0.0;
    for (const auto& S : g.members) s += w.mass(S);
    masses.push_back(s);
  }
  return masses;
}

/// Checks pairwise disjointness, containment in the root, and the partition count
/// |unstopped| + Σ_S #(subtree of S) = #(subtree of root).
inline bool family_is_consistent(const DyadicGrid& grid, const StoppingFamily& family) {
  for (std::size_t i = 0; i < family.members.size(); ++i) {
    const auto& S = family.members[i];
    if (!S.within(family.root) || S == family.root) return false;
    for (std::size_t j = i + 1; j < family.members.size(); ++j)
      if (S.within(family.members[j]) || family.members[j].within(S)) return false;
  }
  auto subtree = [&](const DyadicInterval& I) { return (std::size_t{2} << (grid.depth() - I.level)) - 1; };
  std::size_t covered = family.unstopped.size();
  for (const auto& S : family.members) covered += subtree(S);
  return covered == subtree(family.root);
}

/// Corona structure check: members of one generation are pairwise disjoint, every member of
/// generation g+1 lies strictly inside a member of generation g, and each generation's
/// unstopped intervals plus member subtrees partition the subtrees of the previous members.
inline bool corona_is_consistent(const DyadicGrid& grid, const std::vector<StoppingFamily>& generations) {
  auto subtree = [&](const DyadicInterval& I) { return (std::size_t{2} << (grid.depth() - I.level)) - 1; };
  std::vector<DyadicInterval> roots;
  if (!generations.empty()) roots.push_back(generations.front().root);
  for (const auto& g : generations) {
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      const auto& S = g.members[i];
      const bool inside = std::any_of(roots.begin(), roots.end(), [&](const auto& r) { return S.within(r) && !(S == r); });
      if (!inside) return false;
      for (std::size_t j = i + 1; j < g.members.size(); ++j)
        if (S.within(g.members[j]) || g.members[j].within(S)) return false;
    }
    std::size_t covered = g.unstopped.size(), expected = 0;
    for (const auto& S : g.members) covered += subtree(S);
    for (const auto& r : roots) expected += subtree(r);
    if (covered != expected) return false;
    roots = g.members;
  }
  return true;
}

}  // namespace bloom
