// corrlink command-line front end: run sweeps, print theory, run the selftest.
//
// Exit codes: 0 ok, 1 config error, 2 failure rate exceeded (or selftest
// failure), 3 I/O error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "corrlink/analysis.hpp"
#include "corrlink/errors.hpp"
#include "corrlink/harness.hpp"

namespace {

using namespace corrlink;

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, std::optional<std::size_t> threads,
            const std::string& out) {
  harness::ExperimentConfig cfg = harness::make_config(harness::load_config_file(path));
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  if (!out.empty()) cfg.output = out;
  const auto rows = harness::run_sweep(cfg, harness::resolve_threads(cfg.threads));
  if (cfg.output.empty() || cfg.output == "-") {
    harness::emit_csv(rows, std::cout);
  } else {
    harness::emit_csv(rows, cfg.output);
    std::fprintf(stderr, "wrote %zu rows to %s\n", rows.size(), cfg.output.c_str());
  }
  return 0;
}

struct TheoryArgs {
  std::string scheme;
  std::string k;
  std::string rho;
  std::string alpha;
  std::string m;
  std::string b0;
  std::string model;
  std::string x_law;
  std::string sigma;
  std::string transform;
  std::string split;
};

int cmd_theory(const TheoryArgs& a) {
  harness::ConfigMap map;
  auto put = [&](const std::string& key, const std::string& value) {
    if (!value.empty()) map.values[key] = value;
  };
  put("scheme", a.scheme);
  put("grid.k", a.k);
  put("grid.rho", a.rho);
  put("grid.alpha", a.alpha);
  put("grid.m", a.m);
  put("grid.b0", a.b0);
  put("model.kind", a.model);
  put("model.x_law", a.x_law);
  put("model.sigma", a.sigma);
  put("transform", a.transform);
  put("split", a.split);
  map.values["trials"] = "100";
  for (const auto& [key, value] : map.values) map.lines[key] = 0;
  const harness::ExperimentConfig cfg = harness::make_config(map);
  bool first = true;
  for (const harness::GridPoint& p : harness::expand_grid(cfg)) {
    if (!first) std::cout << "\n";
    first = false;
    std::cout << "rho: " << harness::rho_spec(p.rho) << "\n";
    if (cfg.scheme == "clt") std::cout << "m: " << p.m << "\n";
    std::cout << analysis::to_text(harness::build_theory(cfg, p));
  }
  return 0;
}

int cmd_selftest(std::optional<std::size_t> threads) {
  const auto results = harness::run_selftest(harness::resolve_threads(threads));
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation estimation under one-way communication constraints"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  auto* run = app.add_subcommand("run", "Run a Monte Carlo sweep and emit CSV");
  run->add_option("config", config_path, "Config file (key = value)")->required();
  run->add_option("--seed", seed, "Master seed (overrides the config)");
  run->add_option("--threads", threads, "Worker threads (default: CORRLINK_THREADS or all cores)");
  run->add_option("--out", out_path, "Output CSV path ('-' for stdout)");

  TheoryArgs ta;
  auto* theory = app.add_subcommand("theory", "Print closed-form theory for a scheme");
  theory->add_option("scheme", ta.scheme, "max, threshold, yvec, xvec, xvec_unquantized, clt, pareto_quantized, "
                                          "naive_scalar, linear_baseline")
      ->required();
  theory->add_option("--k", ta.k, "Bits, comma-separated list")->required();
  theory->add_option("--rho", ta.rho, "Correlations: ',' between points, ';' inside a vector")->required();
  theory->add_option("--alpha", ta.alpha, "Pareto tail index list");
  theory->add_option("--m", ta.m, "Block sizes (clt)");
  theory->add_option("--b0", ta.b0, "Off-diagonal stopping-set width");
  theory->add_option("--model", ta.model, "Model kind");
  theory->add_option("--x-law", ta.x_law, "Marginal of X for additive_noise");
  theory->add_option("--sigma", ta.sigma, "default, identity or equicorrelated:<r>");
  theory->add_option("--transform", ta.transform, "linear_baseline transform");
  theory->add_option("--split", ta.split, "linear_baseline share of bits for U");

  std::optional<std::size_t> st_threads;
  auto* selftest = app.add_subcommand("selftest", "Run the invariant checks");
  selftest->add_option("--threads", st_threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_path, seed, threads, out_path);
    if (*theory) return cmd_theory(ta);
    if (*selftest) return cmd_selftest(st_threads);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const FailureRateExceeded& e) {
    std::fprintf(stderr, "failure rate exceeded: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
