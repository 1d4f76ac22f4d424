#pragma once

// Config-driven Monte Carlo sweeps: parse a flat key = value file, expand the
// grid, run seeded trials over a worker pool, aggregate with standard errors
// and pair every row with its closed-form theory.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corrlink/analysis.hpp"
#include "corrlink/estimators.hpp"
#include "corrlink/sources.hpp"

namespace corrlink::harness {

// ------------------------------------------------------------------ config

/// Ordered key -> value map with the line each key came from.
struct ConfigMap {
  std::map<std::string, std::string> values;
  std::map<std::string, int> lines;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
};

/// Parses `key = value` lines; '#' starts a comment. Duplicate keys and
/// malformed lines throw ConfigError with the line number.
ConfigMap parse_config_text(const std::string& text);
/// Reads and parses a file; IoError when unreadable.
ConfigMap load_config_file(const std::string& path);

struct ModelSpec {
  std::string kind;                 // gaussian_scalar, gaussian_yvec, gaussian_xvec, additive_noise, binary
  std::string x_law = "normal";     // additive_noise
  std::string z_law = "normal";
  double alpha = 4.0;               // pareto tail index when the grid gives none
  std::string sigma = "default";    // "default", "identity", "equicorrelated:<r>"
};

struct Grid {
  std::vector<double> k;
  std::vector<std::vector<double>> rho;  // one vector per grid point (length 1 for scalars)
  std::vector<double> alpha;             // NaN entry = not applicable
  std::vector<std::size_t> m{1};
  std::vector<double> b0{0.3};
};

struct ExperimentConfig {
  std::string scheme;
  ModelSpec model;
  Grid grid;
  std::size_t trials = 0;
  std::uint64_t seed = 1;
  protocol::LedgerMode ledger = protocol::LedgerMode::ExpectedOnly;
  estimators::Engine engine = estimators::Engine::Auto;
  std::optional<double> wait_cap;
  bool charge_sigma_x = false;
  std::string transform = "whiten";  // linear_baseline: whiten | identity | rotate:<deg> | "m00 m01 m10 m11"
  double split = 0.5;                // linear_baseline: k1 = split * k
  std::string output;                // empty = stdout
  std::optional<std::size_t> threads;
};

/// Model kind used when the config does not name one.
std::string default_model_kind(const std::string& scheme);

/// Builds and validates a config; every grid point is checked against the
/// scheme's preconditions. Errors name the offending key.
ExperimentConfig make_config(const ConfigMap& map);

/// One expanded grid point.
struct GridPoint {
  std::vector<double> rho;
  double k = 0.0;
  double alpha = 0.0;  // NaN when not applicable
  std::size_t m = 1;
  double b0 = 0.3;
};

std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg);
sources::JointModel build_model(const ExperimentConfig& cfg, const GridPoint& point);
linalg::Matrix build_transform(const std::string& spec, const sources::JointModel& model);
std::unique_ptr<estimators::Estimator> build_estimator(const ExperimentConfig& cfg, const GridPoint& point);
analysis::TheoryReport build_theory(const ExperimentConfig& cfg, const GridPoint& point);

/// "0.9;0.5" style rendering of a correlation vector.
std::string rho_spec(const std::vector<double>& rho);
/// Parses "0.9;0.5" (also accepts ':' as separator).
std::vector<double> parse_rho_spec(const std::string& text);

// ------------------------------------------------------------- aggregation

/// One-pass central moments up to order four with the pairwise merge of
/// Pebay (2008), so chunks can be combined in any fixed order.
class RunningMoments {
 public:
  void add(double x);
  void merge(const RunningMoments& other);

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  /// Unbiased sample variance (n - 1 denominator).
  double variance() const;
  /// Standard error of the mean.
  double mean_se() const;
  /// Large-sample standard error of variance(): sqrt((m4 - m2^2) / n).
  double variance_se() const;
  double central_moment(int order) const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double m3_ = 0.0;
  double m4_ = 0.0;
};

struct SweepRow {
  std::string scheme;
  std::size_t d = 1;
  double k = 0.0;
  std::string rho_spec;
  double alpha = 0.0;  // NaN when not applicable
  std::size_t m = 1;
  double b0 = 0.3;     // NaN for schemes without stopping sets
  std::size_t trials = 0;
  std::size_t failures = 0;
  // Scalars: mean error and its SE. Vectors: norm of the mean error vector and
  // the root sum of the per-coordinate squared SEs.
  double bias = 0.0;
  double bias_se = 0.0;
  // Scalars: sample variance. Vectors: sum of per-coordinate variances.
  double variance = 0.0;
  double variance_se = 0.0;
  // Mean of ||estimate - truth||^2.
  double mse = 0.0;
  double theory_exact = 0.0;       // NaN when unavailable
  double theory_asymptotic = 0.0;
  double theory_bound = 0.0;
  double bits_expected_mean = 0.0;

  // Not part of the CSV.
  double mse_se = 0.0;
  std::optional<double> bits_realized_mean;
  std::vector<double> mean_estimate;
  std::vector<double> coordinate_variance;
  double samples_consumed_mean = 0.0;
  std::vector<std::string> failure_examples;
};

/// Thread count: explicit value, else CORRLINK_THREADS, else hardware concurrency.
std::size_t resolve_threads(std::optional<std::size_t> requested);

/// Runs every grid point; trial i of each point uses substream(seed, i).
/// Output is identical for any thread count. Throws FailureRateExceeded when
/// more than 10% of a point's trials fail.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::size_t threads = 0);

/// Same aggregation for an already built estimator.
SweepRow run_point(const estimators::Estimator& est, const std::vector<double>& truth, std::size_t trials,
                   std::uint64_t seed, std::size_t threads);

inline constexpr std::size_t kCsvColumns = 18;
const std::vector<std::string>& csv_header();

void emit_csv(const std::vector<SweepRow>& rows, std::ostream& out);
/// Writes to path; IoError naming the path when it cannot be written.
void emit_csv(const std::vector<SweepRow>& rows, const std::string& path);
/// Reads back CSV rows (CSV columns only).
std::vector<SweepRow> parse_csv(std::istream& in);

// ---------------------------------------------------------------- selftest

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant checks across all modules.
std::vector<SelftestResult> run_selftest(std::size_t threads = 1);

}  // namespace corrlink::harness
