#include "corrlink/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "corrlink/errors.hpp"
#include "corrlink/protocol.hpp"
#include "corrlink/rng.hpp"
#include "corrlink/statmath.hpp"

namespace corrlink::harness {

using estimators::Engine;
using estimators::EstimateReport;
using estimators::Estimator;
using linalg::Matrix;
using sources::JointModel;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kChunk = 1024;
constexpr double kMaxFailureRate = 0.10;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& text, const std::string& key) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(key + ": '" + s + "' is not a number");
  }
  return v;
}

std::uint64_t to_u64(const std::string& text, const std::string& key) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(key + ": '" + s + "' is not a non-negative integer");
  }
  return v;
}

std::vector<double> to_doubles(const std::string& text, const std::string& key) {
  std::vector<double> out;
  for (const std::string& part : split(text, ',')) out.push_back(to_double(part, key));
  return out;
}

std::string fmt10(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

bool to_bool(const std::string& text, const std::string& key) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

bool is_vector_kind(const std::string& kind) { return kind == "gaussian_yvec" || kind == "gaussian_xvec"; }

}  // namespace

// ------------------------------------------------------------------ config

std::optional<std::string> ConfigMap::get(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) return std::nullopt;
  return it->second;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(no) + ": empty key");
    for (char c : key) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_')) {
        throw ConfigError("line " + std::to_string(no) + ": invalid character in key '" + key + "'");
      }
    }
    if (out.values.count(key)) {
      throw ConfigError("line " + std::to_string(no) + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(out.lines[key]) + ")");
    }
    out.values[key] = value;
    out.lines[key] = no;
  }
  return out;
}

ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string default_model_kind(const std::string& scheme) {
  if (scheme == "max" || scheme == "threshold") return "gaussian_scalar";
  if (scheme == "yvec" || scheme == "naive_scalar") return "gaussian_yvec";
  if (scheme == "xvec" || scheme == "xvec_unquantized" || scheme == "linear_baseline") return "gaussian_xvec";
  if (scheme == "clt") return "binary";
  if (scheme == "pareto_quantized") return "additive_noise";
  throw ConfigError("scheme: unknown scheme '" + scheme + "'");
}

std::string rho_spec(const std::vector<double>& rho) {
  std::string out;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (i) out.push_back(';');
    out += fmt10(rho[i]);
  }
  return out;
}

std::vector<double> parse_rho_spec(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ':', ';');
  std::vector<double> out;
  for (const std::string& part : split(s, ';')) out.push_back(to_double(part, "rho"));
  return out;
}

ExperimentConfig make_config(const ConfigMap& map) {
  static const std::set<std::string> known = {
      "scheme",      "model.kind",  "model.x_law", "model.z_law", "model.alpha", "model.sigma", "grid.k",
      "grid.rho",    "grid.alpha",  "grid.m",      "grid.b0",     "trials",      "seed",        "ledger",
      "engine",      "wait_cap",    "charge_sigma_x", "transform", "split",      "output",      "threads"};
  for (const auto& [key, value] : map.values) {
    if (!known.count(key)) {
      throw ConfigError(key + ": unknown key (line " + std::to_string(map.lines.at(key)) + ")");
    }
  }
  auto require = [&](const std::string& key) {
    auto v = map.get(key);
    if (!v || v->empty()) throw ConfigError(key + ": required");
    return *v;
  };

  ExperimentConfig cfg;
  cfg.scheme = require("scheme");
  cfg.model.kind = map.get("model.kind").value_or(default_model_kind(cfg.scheme));
  if (auto v = map.get("model.x_law")) cfg.model.x_law = *v;
  if (auto v = map.get("model.z_law")) cfg.model.z_law = *v;
  if (auto v = map.get("model.alpha")) cfg.model.alpha = to_double(*v, "model.alpha");
  if (auto v = map.get("model.sigma")) cfg.model.sigma = *v;
  if (cfg.scheme == "pareto_quantized" && !map.has("model.x_law")) cfg.model.x_law = "pareto";

  cfg.grid.k = to_doubles(require("grid.k"), "grid.k");
  for (const std::string& point : split(require("grid.rho"), ',')) cfg.grid.rho.push_back(parse_rho_spec(point));
  if (auto v = map.get("grid.alpha")) cfg.grid.alpha = to_doubles(*v, "grid.alpha");
  if (auto v = map.get("grid.m")) {
    cfg.grid.m.clear();
    for (double m : to_doubles(*v, "grid.m")) {
      if (!(m >= 1.0) || m != std::floor(m)) throw ConfigError("grid.m: block sizes must be positive integers");
      cfg.grid.m.push_back(static_cast<std::size_t>(m));
    }
  }
  if (auto v = map.get("grid.b0")) cfg.grid.b0 = to_doubles(*v, "grid.b0");

  const std::uint64_t trials = to_u64(require("trials"), "trials");
  if (trials < 100) throw ConfigError("trials: must be >= 100, got " + std::to_string(trials));
  cfg.trials = static_cast<std::size_t>(trials);
  if (auto v = map.get("seed")) cfg.seed = to_u64(*v, "seed");
  if (auto v = map.get("ledger")) {
    if (*v == "expected") cfg.ledger = protocol::LedgerMode::ExpectedOnly;
    else if (*v == "realized") cfg.ledger = protocol::LedgerMode::Realized;
    else throw ConfigError("ledger: expected 'expected' or 'realized', got '" + *v + "'");
  }
  if (auto v = map.get("engine")) {
    try {
      cfg.engine = estimators::parse_engine(*v);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("engine: ") + e.what());
    }
  }
  if (auto v = map.get("wait_cap")) {
    cfg.wait_cap = to_double(*v, "wait_cap");
    if (!(*cfg.wait_cap >= 1.0)) throw ConfigError("wait_cap: must be >= 1");
  }
  if (auto v = map.get("charge_sigma_x")) cfg.charge_sigma_x = to_bool(*v, "charge_sigma_x");
  if (auto v = map.get("transform")) cfg.transform = *v;
  if (auto v = map.get("split")) {
    cfg.split = to_double(*v, "split");
    if (!(cfg.split > 0.0 && cfg.split < 1.0)) throw ConfigError("split: must lie in (0, 1)");
  }
  if (auto v = map.get("output")) cfg.output = *v;
  if (auto v = map.get("threads")) {
    const std::uint64_t t = to_u64(*v, "threads");
    if (t == 0) throw ConfigError("threads: must be >= 1");
    cfg.threads = static_cast<std::size_t>(t);
  }

  if (cfg.grid.k.empty() || cfg.grid.rho.empty()) throw ConfigError("grid: empty");
  if (cfg.scheme != "clt" && (cfg.grid.m.size() != 1 || cfg.grid.m[0] != 1)) {
    throw ConfigError("grid.m: block sizes only apply to the clt scheme");
  }

  // Every grid point must pass the scheme's preconditions now, not mid-sweep.
  for (const GridPoint& p : expand_grid(cfg)) {
    try {
      build_estimator(cfg, p);
    } catch (const ConfigError& e) {
      throw ConfigError("grid point (k=" + fmt10(p.k) + ", rho=" + rho_spec(p.rho) +
                        (std::isnan(p.alpha) ? "" : ", alpha=" + fmt10(p.alpha)) +
                        (cfg.scheme == "clt" ? ", m=" + std::to_string(p.m) : "") + "): " + e.what());
    } catch (const DomainError& e) {
      throw ConfigError("grid point (k=" + fmt10(p.k) + ", rho=" + rho_spec(p.rho) + "): " + e.what());
    }
  }
  return cfg;
}

std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg) {
  std::vector<double> alphas = cfg.grid.alpha;
  const bool pareto = cfg.model.x_law == "pareto" && cfg.model.kind == "additive_noise";
  if (alphas.empty()) alphas.push_back(pareto ? cfg.model.alpha : kNaN);
  std::vector<GridPoint> out;
  for (const auto& rho : cfg.grid.rho)
    for (double alpha : alphas)
      for (std::size_t m : cfg.grid.m)
        for (double b0 : cfg.grid.b0)
          for (double k : cfg.grid.k) out.push_back({rho, k, pareto ? alpha : kNaN, m, b0});
  return out;
}

namespace {

linalg::CorrelationMatrix build_sigma(const std::string& spec, const std::vector<double>& rho, bool yvec) {
  const std::size_t d = rho.size();
  if (spec == "identity") return linalg::CorrelationMatrix::identity(d);
  if (spec.rfind("equicorrelated:", 0) == 0) {
    return linalg::CorrelationMatrix::equicorrelated(d, to_double(spec.substr(15), "model.sigma"));
  }
  if (spec != "default") throw ConfigError("model.sigma: expected default, identity or equicorrelated:<r>");
  if (!yvec) return linalg::CorrelationMatrix::identity(d);
  // Y coordinates conditionally independent given X: Sigma_Y = Rho Rho^T + diag(1 - rho^2).
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = i == j ? 1.0 : rho[i] * rho[j];
  return linalg::CorrelationMatrix(m);
}

JointModel scalar_model(const ExperimentConfig& cfg, const std::string& kind, const GridPoint& p) {
  if (p.rho.size() != 1) throw ConfigError("grid.rho: " + kind + " needs scalar correlations");
  const double rho = p.rho[0];
  if (kind == "gaussian_scalar") return JointModel(sources::GaussianScalar{rho});
  if (kind == "binary") {
    if (!(rho >= 0.0)) throw ConfigError("grid.rho: binary model needs rho = 1 - 2p >= 0");
    return JointModel(sources::DoublySymmetricBinary{(1.0 - rho) / 2.0});
  }
  if (kind == "additive_noise") {
    const double alpha = std::isnan(p.alpha) ? cfg.model.alpha : p.alpha;
    return JointModel(sources::AdditiveNoise{rho, sources::MarginalLaw::from_name(cfg.model.x_law, alpha),
                                             sources::MarginalLaw::from_name(cfg.model.z_law, alpha)});
  }
  throw ConfigError("model.kind: unknown kind '" + kind + "'");
}

}  // namespace

JointModel build_model(const ExperimentConfig& cfg, const GridPoint& p) {
  const std::string& kind = cfg.model.kind;
  if (is_vector_kind(kind)) {
    if (kind == "gaussian_yvec") return JointModel(sources::GaussianYVec{p.rho, build_sigma(cfg.model.sigma, p.rho, true)});
    return JointModel(sources::GaussianXVec{p.rho, build_sigma(cfg.model.sigma, p.rho, false)});
  }
  JointModel inner = scalar_model(cfg, kind, p);
  if (cfg.scheme == "clt") return JointModel::block_averaged(inner, p.m);
  return inner;
}

Matrix build_transform(const std::string& spec, const JointModel& model) {
  const auto* xv = model.get_if<sources::GaussianXVec>();
  if (!xv || xv->rho.size() != 2) throw ConfigError("transform: needs a two-dimensional gaussian_xvec model");
  if (spec == "whiten") return linalg::sym_inv_sqrt(xv->sigma_x);
  if (spec == "identity") return Matrix::identity(2);
  if (spec.rfind("rotate:", 0) == 0) {
    const double th = to_double(spec.substr(7), "transform") * statmath::kPi / 180.0;
    return Matrix{{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}};
  }
  std::istringstream in(spec);
  std::vector<double> v;
  std::string tok;
  while (in >> tok) v.push_back(to_double(tok, "transform"));
  if (v.size() != 4) throw ConfigError("transform: expected whiten, identity, rotate:<deg> or four entries");
  return Matrix{{v[0], v[1]}, {v[2], v[3]}};
}

std::unique_ptr<Estimator> build_estimator(const ExperimentConfig& cfg, const GridPoint& p) {
  const JointModel model = build_model(cfg, p);
  estimators::RunOptions opts;
  opts.ledger = cfg.ledger;
  opts.engine = cfg.engine;
  opts.wait_cap = cfg.wait_cap;
  opts.charge_sigma_x = cfg.charge_sigma_x;
  const std::string& s = cfg.scheme;
  if (s == "max") {
    const double kk = std::round(p.k);
    // Scanning 2^k samples is only practical for small k; direct draws go further.
    const double cap = cfg.engine == estimators::Engine::Scan ? 40.0 : 1000.0;
    if (kk != p.k || kk < 1.0 || kk > cap) {
      throw ConfigError("grid.k: max needs integer k in [1, " + fmt10(cap) + "]");
    }
    return std::make_unique<estimators::MaxEstimator>(model, static_cast<int>(kk), opts);
  }
  if (s == "threshold") return std::make_unique<estimators::ThresholdEstimator>(model, p.k, opts);
  if (s == "yvec") return std::make_unique<estimators::YVecEstimator>(model, p.k, opts);
  if (s == "xvec") {
    return std::make_unique<estimators::XVecEstimator>(estimators::XVecEstimator::from_budget(model, p.k, p.b0, true, opts));
  }
  if (s == "xvec_unquantized") {
    const double k_l = p.k / static_cast<double>(model.x_dim());
    return std::make_unique<estimators::XVecEstimator>(
        model, estimators::stopping_params_for_index_bits(k_l, model.x_dim(), p.b0), false, opts, p.k);
  }
  if (s == "clt") return std::make_unique<estimators::CltEstimator>(model, p.k, opts);
  if (s == "pareto_quantized") return std::make_unique<estimators::ParetoQuantizedEstimator>(model, p.k, opts);
  if (s == "naive_scalar") return std::make_unique<estimators::NaiveScalarEstimator>(model, p.k, opts);
  if (s == "linear_baseline") {
    const double k1 = cfg.split * p.k;
    return std::make_unique<estimators::LinearBaselineEstimator>(model, k1, p.k - k1,
                                                                 build_transform(cfg.transform, model), opts);
  }
  throw ConfigError("scheme: unknown scheme '" + s + "'");
}

analysis::TheoryReport build_theory(const ExperimentConfig& cfg, const GridPoint& p) {
  const JointModel model = build_model(cfg, p);
  analysis::TheoryQuery q{cfg.scheme, model, p.k, p.b0, std::nullopt, 0.0, 0.0};
  if (cfg.scheme == "linear_baseline") {
    q.transform = build_transform(cfg.transform, model);
    q.k1 = cfg.split * p.k;
    q.k2 = p.k - q.k1;
  }
  return analysis::theory(q);
}

// ------------------------------------------------------------- aggregation

void RunningMoments::add(double x) {
  const double n1 = static_cast<double>(n_);
  ++n_;
  const double n = static_cast<double>(n_);
  const double delta = x - mean_;
  const double dn = delta / n;
  const double dn2 = dn * dn;
  const double term1 = delta * dn * n1;
  mean_ += dn;
  m4_ += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2_ - 4.0 * dn * m3_;
  m3_ += term1 * dn * (n - 2.0) - 3.0 * dn * m2_;
  m2_ += term1;
}

void RunningMoments::merge(const RunningMoments& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(o.n_);
  const double n = na + nb;
  const double d = o.mean_ - mean_;
  const double d2 = d * d;
  const double m2 = m2_ + o.m2_ + d2 * na * nb / n;
  const double m3 = m3_ + o.m3_ + d2 * d * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2_ - nb * m2_) / n;
  const double m4 = m4_ + o.m4_ + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                    6.0 * d2 * (na * na * o.m2_ + nb * nb * m2_) / (n * n) + 4.0 * d * (na * o.m3_ - nb * m3_) / n;
  mean_ += d * nb / n;
  m2_ = m2;
  m3_ = m3;
  m4_ = m4;
  n_ += o.n_;
}

double RunningMoments::variance() const { return n_ < 2 ? 0.0 : m2_ / static_cast<double>(n_ - 1); }

double RunningMoments::mean_se() const { return n_ < 2 ? 0.0 : std::sqrt(variance() / static_cast<double>(n_)); }

double RunningMoments::variance_se() const {
  if (n_ < 2) return 0.0;
  const double n = static_cast<double>(n_);
  const double mu2 = m2_ / n;
  return std::sqrt(std::max(0.0, m4_ / n - mu2 * mu2) / n);
}

double RunningMoments::central_moment(int order) const {
  if (n_ == 0) return 0.0;
  const double n = static_cast<double>(n_);
  switch (order) {
    case 1: return 0.0;
    case 2: return m2_ / n;
    case 3: return m3_ / n;
    case 4: return m4_ / n;
    default: throw ContractError("central_moment: order must be 1..4");
  }
}

std::size_t resolve_threads(std::optional<std::size_t> requested) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("CORRLINK_THREADS")) {
    const std::uint64_t v = to_u64(env, "CORRLINK_THREADS");
    if (v == 0) throw ConfigError("CORRLINK_THREADS: must be >= 1");
    return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace {

struct ChunkStats {
  std::vector<RunningMoments> coord;
  RunningMoments sq_error;
  RunningMoments bits;
  RunningMoments realized;
  RunningMoments samples;
  std::size_t failures = 0;
  std::vector<std::string> failure_examples;

  void merge(const ChunkStats& o) {
    if (coord.size() < o.coord.size()) coord.resize(o.coord.size());
    for (std::size_t i = 0; i < o.coord.size(); ++i) coord[i].merge(o.coord[i]);
    sq_error.merge(o.sq_error);
    bits.merge(o.bits);
    realized.merge(o.realized);
    samples.merge(o.samples);
    failures += o.failures;
    for (const auto& f : o.failure_examples)
      if (failure_examples.size() < 3) failure_examples.push_back(f);
  }
};

void note_failure(ChunkStats& s, std::uint64_t trial, const std::string& why) {
  ++s.failures;
  if (s.failure_examples.size() < 3) s.failure_examples.push_back("trial " + std::to_string(trial) + ": " + why);
}

ChunkStats run_chunk(const Estimator& est, const std::vector<double>& truth, std::uint64_t seed, std::size_t begin,
                     std::size_t end) {
  ChunkStats s;
  s.coord.resize(truth.size());
  for (std::size_t i = begin; i < end; ++i) {
    EstimateReport r;
    try {
      r = est.run(substream_seed(seed, i));
    } catch (const WaitCapExceeded& e) {
      note_failure(s, i, e.what());
      continue;
    } catch (const SingularMatrixError& e) {
      note_failure(s, i, e.what());
      continue;
    }
    if (r.failed || r.estimate.size() != truth.size()) {
      note_failure(s, i, r.failure.empty() ? "estimator reported failure" : r.failure);
      continue;
    }
    double sq = 0.0;
    bool finite = true;
    for (std::size_t c = 0; c < truth.size(); ++c) finite = finite && std::isfinite(r.estimate[c]);
    if (!finite) {
      note_failure(s, i, "non-finite estimate");
      continue;
    }
    for (std::size_t c = 0; c < truth.size(); ++c) {
      const double e = r.estimate[c] - truth[c];
      s.coord[c].add(e);
      sq += e * e;
    }
    s.sq_error.add(sq);
    s.bits.add(r.bits_expected);
    if (r.bits_realized) s.realized.add(static_cast<double>(*r.bits_realized));
    s.samples.add(r.samples_consumed);
  }
  return s;
}

}  // namespace

SweepRow run_point(const Estimator& est, const std::vector<double>& truth, std::size_t trials, std::uint64_t seed,
                   std::size_t threads) {
  const std::size_t chunks = (trials + kChunk - 1) / kChunk;
  std::vector<ChunkStats> results(chunks);
  std::vector<std::exception_ptr> errors(chunks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      try {
        results[c] = run_chunk(est, truth, seed, c * kChunk, std::min(trials, (c + 1) * kChunk));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Merge in chunk order so the result does not depend on scheduling.
  ChunkStats total;
  total.coord.resize(truth.size());
  for (const ChunkStats& c : results) total.merge(c);

  SweepRow row;
  row.scheme = est.scheme();
  row.d = truth.size();
  row.k = est.configured_bits();
  row.rho_spec = rho_spec(truth);
  row.trials = trials;
  row.failures = total.failures;
  row.failure_examples = total.failure_examples;
  if (truth.size() == 1) {
    row.bias = total.coord[0].mean();
    row.bias_se = total.coord[0].mean_se();
    row.variance = total.coord[0].variance();
    row.variance_se = total.coord[0].variance_se();
  } else {
    double b2 = 0.0, se2 = 0.0, v = 0.0;
    for (const RunningMoments& c : total.coord) {
      b2 += c.mean() * c.mean();
      se2 += c.mean_se() * c.mean_se();
      v += c.variance();
    }
    row.bias = std::sqrt(b2);
    row.bias_se = std::sqrt(se2);
    row.variance = v;
    // Dominated by the spread of ||e||^2.
    row.variance_se = total.sq_error.mean_se();
  }
  row.mse = total.sq_error.mean();
  row.mse_se = total.sq_error.mean_se();
  row.bits_expected_mean = total.bits.mean();
  if (total.realized.count() > 0) row.bits_realized_mean = total.realized.mean();
  for (std::size_t c = 0; c < truth.size(); ++c) {
    row.mean_estimate.push_back(truth[c] + total.coord[c].mean());
    row.coordinate_variance.push_back(total.coord[c].variance());
  }
  row.samples_consumed_mean = total.samples.mean();
  return row;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::size_t threads) {
  const std::size_t n_threads = threads > 0 ? threads : resolve_threads(cfg.threads);
  std::vector<SweepRow> rows;
  for (const GridPoint& p : expand_grid(cfg)) {
    const std::unique_ptr<Estimator> est = build_estimator(cfg, p);
    const JointModel model = build_model(cfg, p);
    const std::vector<double> truth = sources::true_correlations(model);
    SweepRow row = run_point(*est, truth, cfg.trials, cfg.seed, n_threads);
    row.k = p.k;
    row.rho_spec = rho_spec(p.rho);
    row.alpha = p.alpha;
    row.m = p.m;
    // b0 only parameterizes the stopping sets.
    row.b0 = cfg.scheme.rfind("xvec", 0) == 0 ? p.b0 : kNaN;
    row.theory_exact = row.theory_asymptotic = row.theory_bound = kNaN;
    try {
      const analysis::TheoryReport th = build_theory(cfg, p);
      row.theory_exact = th.exact_variance.value_or(kNaN);
      row.theory_asymptotic = th.asymptotic_variance;
      row.theory_bound = th.headline_bound.value_or(kNaN);
    } catch (const Error&) {
      // No closed form for this point; the columns stay NA.
    }
    if (static_cast<double>(row.failures) > kMaxFailureRate * static_cast<double>(row.trials)) {
      std::string msg = "grid point (k=" + fmt10(p.k) + ", rho=" + row.rho_spec + "): " +
                        std::to_string(row.failures) + " of " + std::to_string(row.trials) + " trials failed";
      if (!row.failure_examples.empty()) msg += "; first: " + row.failure_examples.front();
      throw FailureRateExceeded(msg);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

const std::vector<std::string>& csv_header() {
  static const std::vector<std::string> h = {
      "scheme", "d",          "k",        "rho_spec", "alpha", "m",
      "b0",     "trials",     "failures", "bias",     "bias_se", "variance",
      "variance_se", "mse",   "theory_exact", "theory_asymptotic", "theory_bound", "bits_expected_mean"};
  return h;
}

void emit_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  const auto& h = csv_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << "\n";
  for (const SweepRow& r : rows) {
    out << r.scheme << ',' << r.d << ',' << fmt10(r.k) << ',' << r.rho_spec << ',' << fmt10(r.alpha) << ',' << r.m
        << ',' << fmt10(r.b0) << ',' << r.trials << ',' << r.failures << ',' << fmt10(r.bias) << ','
        << fmt10(r.bias_se) << ',' << fmt10(r.variance) << ',' << fmt10(r.variance_se) << ',' << fmt10(r.mse) << ','
        << fmt10(r.theory_exact) << ',' << fmt10(r.theory_asymptotic) << ',' << fmt10(r.theory_bound) << ','
        << fmt10(r.bits_expected_mean) << "\n";
  }
}

void emit_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  emit_csv(rows, out);
  out.flush();
  if (!out) throw IoError("error writing '" + path + "'");
}

std::vector<SweepRow> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv: missing header");
  const auto& h = csv_header();
  const std::vector<std::string> header = split(line, ',');
  if (header != h) throw ConfigError("csv: unexpected header");
  auto num = [](const std::string& s, const char* col) {
    return s == "NA" ? kNaN : to_double(s, std::string("csv column ") + col);
  };
  std::vector<SweepRow> rows;
  int no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != kCsvColumns) {
      throw ConfigError("csv line " + std::to_string(no) + ": expected " + std::to_string(kCsvColumns) + " columns");
    }
    SweepRow r;
    r.scheme = f[0];
    r.d = static_cast<std::size_t>(to_u64(f[1], "d"));
    r.k = num(f[2], "k");
    r.rho_spec = f[3];
    r.alpha = num(f[4], "alpha");
    r.m = static_cast<std::size_t>(to_u64(f[5], "m"));
    r.b0 = num(f[6], "b0");
    r.trials = static_cast<std::size_t>(to_u64(f[7], "trials"));
    r.failures = static_cast<std::size_t>(to_u64(f[8], "failures"));
    r.bias = num(f[9], "bias");
    r.bias_se = num(f[10], "bias_se");
    r.variance = num(f[11], "variance");
    r.variance_se = num(f[12], "variance_se");
    r.mse = num(f[13], "mse");
    r.theory_exact = num(f[14], "theory_exact");
    r.theory_asymptotic = num(f[15], "theory_asymptotic");
    r.theory_bound = num(f[16], "theory_bound");
    r.bits_expected_mean = num(f[17], "bits_expected_mean");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------- selftest

namespace {

template <class F>
void check(std::vector<SelftestResult>& out, const std::string& name, F&& f) {
  SelftestResult r;
  r.name = name;
  try {
    r.detail = f();
    r.passed = r.detail.rfind("FAIL", 0) != 0;
    if (!r.passed) r.detail = r.detail.substr(4);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  out.push_back(std::move(r));
}

std::string verdict(bool ok, const std::string& detail) { return ok ? detail : "FAIL" + detail; }

}  // namespace

std::vector<SelftestResult> run_selftest(std::size_t threads) {
  using namespace statmath;
  std::vector<SelftestResult> out;

  check(out, "Q symmetry and inverse", [] {
    double worst = 0.0;
    for (double x = -8.0; x <= 8.0; x += 0.25) worst = std::max(worst, std::abs(Q(x) + Q(-x) - 1.0));
    for (double e = -300.0; e < -0.5; e += 7.5) {
      const double p = std::pow(10.0, e / 10.0);
      worst = std::max(worst, std::abs(Q(Q_inv(p)) - p) / p);
    }
    return verdict(worst < 1e-12, "max deviation " + fmt10(worst));
  });

  check(out, "geometric entropy inverse", [] {
    double worst = 0.0;
    for (double k : {1.5, 5.0, 20.0, 80.0, 300.0}) worst = std::max(worst, std::abs(geometric_entropy(geometric_entropy_inv(k)) - k) / k);
    return verdict(worst < 1e-10, "max relative error " + fmt10(worst));
  });

  check(out, "Golomb Kraft sum", [] {
    const protocol::GolombCode code(0.1);
    double kraft = 0.0;
    for (std::uint64_t n = 0; n < 2000; ++n) kraft += std::ldexp(1.0, -static_cast<int>(code.length(static_cast<double>(n))));
    return verdict(kraft <= 1.0 + 1e-12 && kraft > 0.999, "sum " + fmt10(kraft));
  });

  check(out, "Sherman-Morrison vs LU", [] {
    const std::vector<double> rho{0.5, -0.2, 0.3};
    const auto sx = linalg::CorrelationMatrix::equicorrelated(3, 0.2);
    sources::GaussianXVec m{rho, sx};
    const auto fp = analysis::fisher_xvec(rho, sx, 7.0, sources::xvec_sigma2(m));
    const double err = (fp.inverse - linalg::invert(fp.fisher)).frobenius_norm();
    return verdict(err < 1e-9, "frobenius error " + fmt10(err));
  });

  check(out, "threshold exact variance (2e4 trials)", [threads] {
    const estimators::ThresholdEstimator est(JointModel(sources::GaussianScalar{0.6}), 12.0);
    const SweepRow row = run_point(est, {0.6}, 20000, 7, threads);
    const double exact = analysis::exact_threshold_variance(0.6, est.threshold());
    const double z = std::abs(row.variance - exact) / row.variance_se;
    const double zb = std::abs(row.bias) / row.bias_se;
    return verdict(z < 5.0 && zb < 5.0, "variance z=" + fmt10(z) + ", bias z=" + fmt10(zb));
  });

  check(out, "thread-count determinism", [] {
    const estimators::ThresholdEstimator est(JointModel(sources::GaussianScalar{0.3}), 10.0);
    const SweepRow a = run_point(est, {0.3}, 5000, 11, 1);
    const SweepRow b = run_point(est, {0.3}, 5000, 11, 3);
    std::ostringstream sa, sb;
    emit_csv({a}, sa);
    emit_csv({b}, sb);
    return verdict(sa.str() == sb.str(), "identical CSV for 1 and 3 threads");
  });

  check(out, "Stopping-set bracket holds for closed-form alpha", [] {
    const analysis::Bracket br = analysis::stopping_set_bracket(5.0, 0.5, 2);
    const double inv_alpha = 1.0 / analysis::stopping_set_alpha(5.0, 0.5, 2);
    return verdict(br.lower <= inv_alpha && inv_alpha <= br.upper, "1/alpha=" + fmt10(inv_alpha));
  });

  return out;
}

}  // namespace corrlink::harness
