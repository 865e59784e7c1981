// bloomctl: generate ensembles, compute norm reports, run verification suites
// and parameter sweeps.
//
// Exit codes: 0 pass, 1 hard-assertion failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bloom/experiment.hpp"

using namespace bloom;

namespace {

constexpr int exit_pass = 0;
constexpr int exit_failure = 1;
constexpr int exit_usage = 2;

Json read_json(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + what + " '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(what + " '" + path + "' is not valid JSON: " + e.what());
  }
}

StepFunction read_step_function(const std::string& path, const std::string& what) {
  try {
    return step_function_from_json(read_json(path, what));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(what + " '" + path + "': " + e.what());
  }
}

Weight read_weight(const std::string& path, const std::string& what) {
  try {
    return Weight(read_step_function(path, what));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(what + " '" + path + "': " + e.what());
  }
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_text(path, text);
}

struct CommonFlags {
  std::string config;
  std::optional<int> depth;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::vector<std::string> suites;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f, bool with_suites) {
  app->add_option("--config", f.config, "JSON experiment config");
  app->add_option("--depth", f.depth, "grid depth");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--trials", f.trials, "number of trials");
  if (with_suites) app->add_option("--suite", f.suites, "suite name (repeatable or comma separated)")->delimiter(',');
  app->add_option("--out", f.out, "output path (default stdout)");
}

ExperimentConfig load_config(const CommonFlags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : config_from_json(read_json(f.config, "config"));
  if (f.depth) c.depth = *f.depth;
  if (f.seed) c.seed = *f.seed;
  if (f.trials) c.trials = *f.trials;
  if (!f.suites.empty()) {
    c.suites.clear();
    for (const auto& s : f.suites) c.suites.push_back(parse_suite(s));
  }
  if (!f.out.empty()) c.json_out = f.out;
  validate(c);
  return c;
}

void print_summary(const std::vector<SuiteResult>& results, std::ostream& os) {
  for (const auto& r : results) {
    os << (r.passed() ? "PASS " : "FAIL ") << to_string(r.suite) << "\n";
    for (const auto& c : r.criteria) {
      os << "  " << (c.passed ? "ok   " : "FAIL ") << c.name << " worst=" << format_number(c.worst)
         << " bound=" << format_number(c.bound);
      if (c.failures > 0) os << " failures=" << c.failures << " first_seed=" << c.failing_seeds.front();
      os << "\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-weight dyadic harmonic analysis testbed"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a weight or symbol as StepFunction JSON");
  std::string kind = "cascade";
  EnsembleSpec spec;
  std::optional<double> a2_min, a2_max;
  std::string gen_out;
  gen->add_option("--kind", kind, "constant | two-value | power | cascade | log-symbol | haar-sparse-symbol");
  gen->add_option("--depth", spec.depth, "grid depth");
  gen->add_option("--seed", spec.seed, "seed");
  gen->add_option("--alpha", spec.alpha, "power exponent");
  gen->add_option("--center", spec.center, "power singularity");
  gen->add_option("--delta", spec.delta, "cascade amplitude");
  gen->add_option("--sparsity", spec.sparsity, "haar-sparse inclusion probability");
  gen->add_option("--amplitude", spec.amplitude, "symbol scale");
  gen->add_option("--values", spec.values, "constant / two-value literals")->delimiter(',');
  gen->add_flag("!--inadmissible", spec.admissible, "allow a finest-level Haar spectrum in symbols");
  gen->add_option("--a2-min", a2_min, "rejection-sampling lower A2 target");
  gen->add_option("--a2-max", a2_max, "rejection-sampling upper A2 target");
  gen->add_option("--out", gen_out, "output path (default stdout)");

  // norms
  auto* norms = app.add_subcommand("norms", "full norm report for one (mu, lambda, b) triple");
  std::string mu_file, lambda_file, symbol_file, norms_out;
  norms->add_option("--mu", mu_file, "weight mu (StepFunction JSON)")->required();
  norms->add_option("--lambda", lambda_file, "weight lambda (StepFunction JSON)")->required();
  norms->add_option("--symbol", symbol_file, "symbol b (StepFunction JSON)")->required();
  norms->add_option("--out", norms_out, "also save the report here");

  // verify
  auto* verify = app.add_subcommand("verify", "run verification suites");
  CommonFlags vf;
  add_common(verify, vf, true);

  // sweep
  auto* sw = app.add_subcommand("sweep", "one-parameter sweep as CSV");
  CommonFlags sf;
  std::string parameter, range;
  add_common(sw, sf, false);
  sw->add_option("--param", parameter, "alpha | delta | depth | sparsity")->required();
  sw->add_option("--range", range, "start:stop:step")->required();

  // report
  auto* report = app.add_subcommand("report", "summarize a saved verify output");
  std::string report_in;
  report->add_option("--in", report_in, "JSON written by verify")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_pass : exit_usage;
  }

  try {
    if (*gen) {
      spec.kind = parse_ensemble_kind(kind);
      if (a2_min || a2_max) spec.a2_target = std::pair{a2_min.value_or(1.0), a2_max.value_or(1e300)};
      const auto f = is_symbol_kind(spec.kind) ? generate_symbol(spec) : generate_weight(spec).function();
      emit(to_json(f).dump() + "\n", gen_out);
      return exit_pass;
    }
    if (*norms) {
      const auto mu = read_weight(mu_file, "mu file");
      const auto lambda = read_weight(lambda_file, "lambda file");
      const auto b = read_step_function(symbol_file, "symbol file");
      if (mu.depth() != lambda.depth() || mu.depth() != b.depth())
        throw ConfigError("grid mismatch: mu depth " + std::to_string(mu.depth()) + ", lambda depth " +
                          std::to_string(lambda.depth()) + ", symbol depth " + std::to_string(b.depth()));
      const auto text = to_json(norm_report(b, mu, lambda)).dump(2) + "\n";
      std::cout << text;
      if (!norms_out.empty()) write_text(norms_out, text);
      return exit_pass;
    }
    if (*verify) {
      const auto config = load_config(vf);
      const auto results = run(config);
      const auto text = results_to_json(config, results).dump(2) + "\n";
      if (config.json_out.empty()) {
        std::cout << text;
        print_summary(results, std::cerr);
      } else {
        write_text(config.json_out, text);
        print_summary(results, std::cout);
      }
      return all_passed(results) ? exit_pass : exit_failure;
    }
    if (*sw) {
      auto config = load_config(sf);
      const auto table = sweep(parse_sweep_parameter(parameter), parse_range(range), config);
      const auto csv = to_csv(table);
      emit(csv, sf.out.empty() ? config.csv_out : sf.out);
      return exit_pass;
    }
    if (*report) {
      const auto j = read_json(report_in, "results file");
      if (!j.contains("suites")) throw ConfigError("'" + report_in + "' has no suites");
      bool ok = true;
      for (const auto& s : j.at("suites")) {
        const bool passed = s.at("passed").get<bool>();
        ok = ok && passed;
        std::cout << (passed ? "PASS " : "FAIL ") << s.at("suite").get<std::string>() << "\n";
        for (const auto& c : s.at("criteria"))
          std::cout << "  " << (c.at("passed").get<bool>() ? "ok   " : "FAIL ") << c.at("name").get<std::string>()
                    << " worst=" << c.at("worst").dump() << " bound=" << c.at("bound").dump() << "\n";
        for (const auto& [name, q] : s.at("quantiles").items())
          std::cout << "  " << name << " min=" << q.at("min").dump() << " median=" << q.at("median").dump()
                    << " q90=" << q.at("q90").dump() << " max=" << q.at("max").dump() << "\n";
      }
      return ok ? exit_pass : exit_failure;
    }
  } catch (const OutputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_usage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_usage;
  }
  return exit_usage;
}
