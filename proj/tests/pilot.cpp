// Pilot run for the measured acceptance constants. Evaluates every functional with
// the brute-force oracles at depth 4 and prints the frozen fixture as JSON.
//
//   acceptance_pilot [output.json]

#include <cmath>
#include <cstdio>
#include <iostream>

#include "ensembles.hpp"
#include "oracles.hpp"

using namespace bloom;

namespace {

constexpr int pilot_depth = 4;
constexpr int pilot_trials = 200;
constexpr std::uint64_t pilot_seed = 0x5EED0004;

StepFunction leafwise_rho(const StepFunction& mu, const StepFunction& lambda) {
  StepFunction rho(mu.grid());
  for (std::size_t i = 0; i < mu.size(); ++i) rho[i] = std::sqrt(mu[i] / lambda[i]);
  return rho;
}

double weighted_sigma(const Eigen::MatrixXd& t, const StepFunction& mu, const StepFunction& lambda) {
  const auto n = mu.size();
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a[i * n + j] = std::sqrt(lambda[i]) * t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) /
                     std::sqrt(mu[j]);
  return oracle::top_singular_value(a, n);
}

}  // namespace

int main(int argc, char** argv) {
  Json chain = Json::object(), commutator = Json::object();
  for (const auto& [name, config] : ensembles::standard(pilot_depth, pilot_seed, pilot_trials)) {
    double k_chain = 1.0, k_comm = 1.0;
    for (int t = 0; t < config.trials; ++t) {
      const auto in = make_trial(config, t);
      const auto& mu = in.mu.function();
      const auto& lambda = in.lambda.function();
      const auto rho = leafwise_rho(mu, lambda);
      const double values[] = {oracle::bloom_b2(in.b, mu, lambda),
                               oracle::bloom_b2(in.b, oracle::reciprocal(lambda), oracle::reciprocal(mu)),
                               oracle::bmo_rho(in.b, rho), oracle::bmo_rho_l1(in.b, rho),
                               oracle::neccon(in.b, mu, lambda)};
      k_chain = std::max(k_chain, spread({std::begin(values), std::end(values)}));
      const double br = values[2];
      if (br > 0.0) {
        const double r = weighted_sigma(commutator_matrix(in.b).matrix, mu, lambda) / br;
        k_comm = std::max({k_comm, r, 1.0 / r});
      }
    }
    chain[name] = k_chain;
    commutator[name] = k_comm;
  }

  double shift_bound = 0.0;
  const DyadicGrid grid(pilot_depth);
  const auto shift = shift_matrix(grid).matrix;
  for (double alpha : ensembles::alpha_sweep()) {
    EnsembleSpec spec{.kind = EnsembleKind::power, .depth = pilot_depth};
    spec.alpha = alpha;
    const auto w = generate_weight(spec).function();
    shift_bound = std::max(shift_bound, weighted_sigma(shift, w, w) / oracle::a2(w));
  }

  const Json fixture{{"depth", pilot_depth},
                     {"trials", pilot_trials},
                     {"seed", pilot_seed},
                     {"chain_ratio", chain},
                     {"commutator_band", commutator},
                     {"shift_over_a2", shift_bound}};
  const auto text = fixture.dump(2) + "\n";
  if (argc > 1)
    write_text(argv[1], text);
  else
    std::cout << text;
  return 0;
}
