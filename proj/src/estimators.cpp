#include "corrlink/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "corrlink/errors.hpp"
#include "corrlink/rng.hpp"
#include "corrlink/statmath.hpp"

namespace corrlink::estimators {

using protocol::LedgerMode;
using sources::JointModel;

namespace {

double index_probability_for_bits(double k, const char* who) {
  try {
    return statmath::geometric_entropy_inv(k);
  } catch (const DomainError& e) {
    throw ConfigError(std::string(who) + ": infeasible budget: " + e.what());
  }
}

double wait_cap(const RunOptions& opts, double p) {
  return opts.wait_cap ? *opts.wait_cap : protocol::default_wait_cap(p);
}

void check_cap(double gap, double cap) {
  if (gap > cap) {
    throw WaitCapExceeded("index " + std::to_string(gap) + " exceeds the wait cap of " + std::to_string(cap), cap);
  }
}

void fill_bits(EstimateReport& r, const protocol::Transcript& t) {
  r.bits_expected = t.ledger.total();
  r.bits_realized = t.ledger.total_realized();
  r.samples_consumed = t.samples_consumed;
}

// Scalar (x[xi], y[yi]) view of a sampled model.
class ProjectedStream final : public sources::PairStream {
 public:
  ProjectedStream(const JointModel& model, std::uint64_t seed, std::size_t xi, std::size_t yi)
      : inner_(model, seed), xi_(xi), yi_(yi), x_(model.x_dim()), y_(model.y_dim()) {}
  std::size_t x_dim() const override { return 1; }
  std::size_t y_dim() const override { return 1; }
  void next(std::span<double> x, std::span<double> y) override {
    inner_.next(x_, y_);
    x[0] = x_[xi_];
    y[0] = y_[yi_];
  }

 private:
  sources::SampleStream inner_;
  std::size_t xi_;
  std::size_t yi_;
  std::vector<double> x_;
  std::vector<double> y_;
};

sources::AdditiveNoise as_additive(const JointModel& model, const char* who) {
  if (const auto* g = model.get_if<sources::GaussianScalar>()) {
    return {g->rho, sources::MarginalLaw::normal(), sources::MarginalLaw::normal()};
  }
  if (const auto* a = model.get_if<sources::AdditiveNoise>()) return *a;
  throw ConfigError(std::string(who) + ": needs a gaussian_scalar or additive_noise model, got " + model.kind_name());
}

}  // namespace

Engine parse_engine(const std::string& name) {
  if (name == "auto") return Engine::Auto;
  if (name == "scan") return Engine::Scan;
  if (name == "direct") return Engine::Direct;
  throw ConfigError("unknown engine '" + name + "' (expected auto, scan or direct)");
}

// ------------------------------------------------------------------------ max

MaxEstimator::MaxEstimator(const JointModel& model, int k, RunOptions opts) : k_(k), opts_(opts), model_(model) {
  const auto* g = model.get_if<sources::GaussianScalar>();
  if (!g) throw ConfigError("max: needs a gaussian_scalar model, got " + model.kind_name());
  if (k < 1) throw ConfigError("max: k=" + std::to_string(k) + " is degenerate (E X_J = 0); need k >= 1");
  if (k > 1000) throw ConfigError("max: k must be <= 1000");
  rho_ = g->rho;
  n_ = std::ldexp(1.0, k);
  mean_ = statmath::max_normal_moments(n_).mean;
}

EstimateReport MaxEstimator::run(std::uint64_t seed) const {
  EstimateReport r;
  r.seed = seed;
  double y = 0.0;
  protocol::Transcript tr;
  if (opts_.engine == Engine::Scan) {
    sources::SampleStream stream(model_, seed);
    protocol::ScalarSelection sel = protocol::select_max_index(stream, n_, opts_.ledger);
    y = sel.y[0];
    tr = std::move(sel.transcript);
  } else {
    Rng rng(seed);
    tr.ledger = protocol::BitLedger(opts_.ledger);
    tr.indices = {std::min(n_, std::floor(rng.uniform() * n_) + 1.0)};
    tr.samples_consumed = n_;
    // Phi(X_J) = U^(1/n)
    const double x = statmath::Q_inv(-std::expm1(std::log(rng.uniform()) / n_));
    y = rho_ * x + std::sqrt(1.0 - rho_ * rho_) * rng.normal();
    tr.ledger.charge("index", k_, opts_.ledger == LedgerMode::Realized ? std::optional<long long>(k_) : std::nullopt);
  }
  r.estimate = {y / mean_};
  fill_bits(r, tr);
  return r;
}

// ------------------------------------------------------------------ threshold

ThresholdEstimator::ThresholdEstimator(const JointModel& model, double k, RunOptions opts)
    : law_(as_additive(model, "threshold")), k_(k), opts_(opts), model_(model) {
  if (!(k > 0.0)) throw ConfigError("threshold: k must be positive");
  p_ = index_probability_for_bits(k, "threshold");
  try {
    t_ = law_.x_law.tail_inv(p_);
    norm_ = law_.x_law.conditional_mean(t_);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("threshold: ") + e.what());
  }
  direct_ = opts.engine != Engine::Scan;
}

EstimateReport ThresholdEstimator::run(std::uint64_t seed) const {
  EstimateReport r;
  r.seed = seed;
  const double cap = wait_cap(opts_, p_);
  double y = 0.0;
  protocol::Transcript tr;
  if (direct_) {
    Rng rng(seed);
    const protocol::GolombCode code(p_);
    const protocol::GeometricDraw g = protocol::sample_geometric_index(code, rng);
    check_cap(g.index, cap);
    const double x = law_.x_law.sample_above(t_, rng);
    y = law_.rho * x + std::sqrt(1.0 - law_.rho * law_.rho) * law_.z_law.sample(rng);
    tr.ledger = protocol::BitLedger(opts_.ledger);
    tr.indices = {g.index};
    tr.samples_consumed = g.index;
    protocol::charge_index(tr.ledger, "index", code, g.index);
  } else {
    sources::SampleStream stream(model_, seed);
    protocol::ScalarSelection sel = protocol::select_threshold_index(stream, t_, p_, cap, opts_.ledger);
    y = sel.y[0];
    tr = std::move(sel.transcript);
  }
  r.estimate = {y / norm_};
  fill_bits(r, tr);
  return r;
}

// ----------------------------------------------------------------------- yvec

YVecEstimator::YVecEstimator(const JointModel& model, double k, RunOptions opts) : k_(k), opts_(opts), model_(model) {
  const auto* g = model.get_if<sources::GaussianYVec>();
  if (!g) throw ConfigError("yvec: needs a gaussian_yvec model, got " + model.kind_name());
  if (!(k > 0.0)) throw ConfigError("yvec: k must be positive");
  rho_ = g->rho;
  linalg::Matrix noise = g->sigma_y.matrix();
  for (std::size_t i = 0; i < rho_.size(); ++i)
    for (std::size_t j = 0; j < rho_.size(); ++j) noise(i, j) -= rho_[i] * rho_[j];
  noise_root_ = linalg::sym_sqrt(noise);
  p_ = index_probability_for_bits(k, "yvec");
  t_ = statmath::Q_inv(p_);
  s_ = statmath::inverse_mills(t_);
}

EstimateReport YVecEstimator::run(std::uint64_t seed) const {
  EstimateReport r;
  r.seed = seed;
  const double cap = wait_cap(opts_, p_);
  const std::size_t d = rho_.size();
  std::vector<double> y(d);
  protocol::Transcript tr;
  if (opts_.engine != Engine::Scan) {
    Rng rng(seed);
    const protocol::GolombCode code(p_);
    const protocol::GeometricDraw g = protocol::sample_geometric_index(code, rng);
    check_cap(g.index, cap);
    const double x = statmath::Q_inv(rng.uniform() * statmath::Q(t_));
    std::vector<double> z(d);
    for (double& v : z) v = rng.normal();
    const std::vector<double> noise = linalg::multiply(noise_root_, z);
    for (std::size_t i = 0; i < d; ++i) y[i] = rho_[i] * x + noise[i];
    tr.ledger = protocol::BitLedger(opts_.ledger);
    tr.indices = {g.index};
    tr.samples_consumed = g.index;
    protocol::charge_index(tr.ledger, "index", code, g.index);
  } else {
    sources::SampleStream stream(model_, seed);
    protocol::ScalarSelection sel = protocol::select_threshold_index(stream, t_, p_, cap, opts_.ledger);
    y = sel.y;
    tr = std::move(sel.transcript);
  }
  r.estimate.resize(d);
  for (std::size_t i = 0; i < d; ++i) r.estimate[i] = y[i] / s_;
  fill_bits(r, tr);
  return r;
}

// ----------------------------------------------------------------------- xvec

XVecEstimator::XVecEstimator(const JointModel& model, const protocol::StoppingSetParams& params, bool quantize,
                             RunOptions opts, std::optional<double> nominal_k)
    : params_(params), quantize_(quantize), opts_(opts), nominal_k_(nominal_k), model_(model) {
  const auto* g = model.get_if<sources::GaussianXVec>();
  if (!g) throw ConfigError("xvec: needs a gaussian_xvec model, got " + model.kind_name());
  params_.validate();
  if (params_.d != g->rho.size()) throw ConfigError("xvec: stopping-set dimension differs from the model");
  rho_ = g->rho;
  sigma_root_ = linalg::sym_sqrt(g->sigma_x);
  sigma_inv_root_ = linalg::sym_inv_sqrt(g->sigma_x);
  y_coef_ = linalg::multiply(rho_, sigma_inv_root_);
  sigma_ = std::sqrt(std::max(0.0, sources::xvec_sigma2(*g)));
  bob_root_ = sigma_root_;
  if (opts.charge_sigma_x) {
    if (!nominal_k) throw ConfigError("xvec: charging Sigma_X needs the total budget k");
    sigma_bits_ = static_cast<int>(std::ceil(std::sqrt(*nominal_k)));
    const double cells = std::ldexp(1.0, sigma_bits_);
    const double width = 2.0 / cells;
    linalg::Matrix q = g->sigma_x.matrix();
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < q.cols(); ++j) {
        if (i == j) continue;
        const double cell = std::min(std::floor((q(i, j) + 1.0) / width), cells - 1.0);
        q(i, j) = -1.0 + (cell + 0.5) * width;
      }
    bob_root_ = linalg::sym_sqrt(linalg::CorrelationMatrix(q));
  }
}

XVecEstimator XVecEstimator::from_budget(const JointModel& model, double k, double b0, bool quantize,
                                         RunOptions opts) {
  const std::size_t d = model.x_dim();
  return XVecEstimator(model, protocol::allocate_bits_xvec(k, d, b0), quantize, opts, k);
}

double XVecEstimator::configured_bits() const {
  const double d = static_cast<double>(params_.d);
  double bits = d * params_.k_l;
  if (quantize_) bits += d * d * params_.k_q;
  if (opts_.charge_sigma_x) bits += d * d * sigma_bits_;
  return bits;
}

XVecTrial XVecEstimator::run_detailed(std::uint64_t seed) const {
  const std::size_t d = params_.d;
  const double cap = wait_cap(opts_, params_.crossing_probability());
  XVecTrial out;
  protocol::StoppingSelection sel;
  if (opts_.engine != Engine::Scan) {
    Rng rng(seed);
    sel = protocol::draw_stopping_set(params_, rng, opts_.ledger);
    double prev = 0.0;
    for (double j : sel.transcript.indices) {
      check_cap(j - prev, cap);
      prev = j;
    }
    sel.y.resize(d);
    for (std::size_t l = 0; l < d; ++l) {
      double v = 0.0;
      for (std::size_t i = 0; i < d; ++i) v += y_coef_[i] * sel.w(i, l);
      sel.y[l] = v + sigma_ * rng.normal();
    }
  } else {
    sources::SampleStream stream(model_, seed);
    sources::TransformedStream whitened(stream, sigma_inv_root_);
    sel = protocol::select_stopping_set_indices(whitened, params_, cap, opts_.ledger);
  }
  out.transcript = std::move(sel.transcript);
  out.w = std::move(sel.w);
  out.y = std::move(sel.y);
  const bool realized = opts_.ledger == LedgerMode::Realized;
  if (quantize_) {
    const protocol::QuantizedMatrix q = protocol::quantize_W_matrix(out.w, params_);
    out.w_hat = q.w_hat;
    out.transcript.quantized_values.assign(q.w_hat.data().begin(), q.w_hat.data().end());
    out.transcript.ledger.charge("w_hat", q.bits,
                                 realized ? std::optional<long long>(static_cast<long long>(q.bits)) : std::nullopt);
  }
  if (opts_.charge_sigma_x) {
    const auto bits = static_cast<long long>(d * d) * sigma_bits_;
    out.transcript.ledger.charge("sigma_x", static_cast<double>(bits),
                                 realized ? std::optional<long long>(bits) : std::nullopt);
  }
  auto solve = [&](const linalg::Matrix& w) {
    return linalg::multiply(linalg::multiply(out.y, linalg::invert(w)), bob_root_);
  };
  try {
    out.estimate_exact = solve(out.w);
    if (quantize_) out.estimate = solve(out.w_hat);
  } catch (const SingularMatrixError& e) {
    out.failed = true;
    out.failure = e.what();
  }
  return out;
}

EstimateReport XVecEstimator::run(std::uint64_t seed) const {
  XVecTrial t = run_detailed(seed);
  EstimateReport r;
  r.seed = seed;
  fill_bits(r, t.transcript);
  r.failed = t.failed;
  r.failure = t.failure;
  if (!t.failed) r.estimate = quantize_ ? t.estimate : t.estimate_exact;
  return r;
}

protocol::StoppingSetParams stopping_params_for_index_bits(double k_l, std::size_t d, double b0, int k_q) {
  const double p = index_probability_for_bits(k_l, "stopping sets");
  const double qa = p / (2.0 * std::pow(1.0 - 2.0 * statmath::Q(b0), static_cast<double>(d) - 1.0));
  if (!(qa < 0.5)) throw ConfigError("stopping sets: k_l too small for a positive threshold");
  protocol::StoppingSetParams params = protocol::make_stopping_set_params(statmath::Q_inv(qa), b0, d, k_q);
  params.k_l = k_l;
  return params;
}

// ------------------------------------------------------------------------ clt

CltEstimator::CltEstimator(const JointModel& model, double k, RunOptions opts) : k_(k), opts_(opts), model_(model) {
  const auto* blk = model.get_if<sources::BlockAveraged>();
  if (!blk) throw ConfigError("clt: needs a block_averaged model, got " + model.kind_name());
  if (!(k > 0.0)) throw ConfigError("clt: k must be positive");
  m_ = blk->m;
  p_nominal_ = index_probability_for_bits(k, "clt");
  t_ = statmath::Q_inv(p_nominal_);
  s_ = statmath::inverse_mills(t_);
  if (const auto bound = sources::x_support_bound(*blk->inner)) {
    const double need = t_ * t_ / (*bound * *bound);
    if (!(static_cast<double>(m_) > need)) {
      throw ConfigError("clt: block size m=" + std::to_string(m_) + " must exceed t^2/x^2 = " + std::to_string(need) +
                        " (t=" + std::to_string(t_) + ", |X| <= " + std::to_string(*bound) +
                        "); otherwise X_bar never crosses the threshold");
    }
  }
  // The crossing law is computed for either engine: the index is coded against it.
  const bool direct = opts.engine != Engine::Scan;
  if (const auto* b = blk->inner->get_if<sources::DoublySymmetricBinary>()) {
    binary_direct_ = direct;
    flip_ = b->p;
    const double m = static_cast<double>(m_);
    const double sm = std::sqrt(m);
    auto xbar = [&](long long bb) { return (2.0 * static_cast<double>(bb) - m) / sm; };
    long long b_min = static_cast<long long>(std::floor(0.5 * (t_ * sm + m))) + 1;
    while (b_min > 0 && xbar(b_min - 1) > t_) --b_min;
    while (b_min <= static_cast<long long>(m_) && !(xbar(b_min) > t_)) ++b_min;
    if (b_min > static_cast<long long>(m_)) throw ConfigError("clt: X_bar cannot exceed the threshold");
    b_min_ = b_min;
    double total = 0.0;
    const double lg = std::lgamma(m + 1.0) - m * statmath::kLn2;
    for (long long bb = b_min; bb <= static_cast<long long>(m_); ++bb) {
      const double b = static_cast<double>(bb);
      total += std::exp(lg - std::lgamma(b + 1.0) - std::lgamma(m - b + 1.0));
      tail_cdf_.push_back(total);
    }
    for (double& c : tail_cdf_) c /= total;
    true_p_ = total;
  } else if (const auto* g = blk->inner->get_if<sources::GaussianScalar>()) {
    gaussian_direct_ = direct;
    rho_ = g->rho;
    true_p_ = p_nominal_;
  } else if (opts.engine == Engine::Direct) {
    throw ConfigError("clt: the direct engine needs a binary or gaussian inner model");
  }
}

EstimateReport CltEstimator::run(std::uint64_t seed) const {
  EstimateReport r;
  r.seed = seed;
  // Lattice-valued block averages cross less often than Q(t); the index is
  // coded for its actual law whenever that is known.
  const double p_code = true_p_.value_or(p_nominal_);
  const double cap = wait_cap(opts_, p_code);
  const protocol::GolombCode code(p_code);
  double y = 0.0;
  protocol::Transcript tr;
  if (binary_direct_ || gaussian_direct_) {
    Rng rng(seed);
    const protocol::GeometricDraw g = protocol::sample_geometric_index(code, rng);
    check_cap(g.index, cap);
    if (binary_direct_) {
      const double u = rng.uniform();
      const auto it = std::upper_bound(tail_cdf_.begin(), tail_cdf_.end(), u);
      const long long b =
          b_min_ + std::min<long long>(it - tail_cdf_.begin(), static_cast<long long>(tail_cdf_.size()) - 1);
      long long ones = 0;
      for (long long i = 0; i < b; ++i) ones += rng.uniform() < flip_ ? 0 : 1;
      for (long long i = b; i < static_cast<long long>(m_); ++i) ones += rng.uniform() < flip_ ? 1 : 0;
      const double m = static_cast<double>(m_);
      y = (2.0 * static_cast<double>(ones) - m) / std::sqrt(m);
    } else {
      const double x = statmath::Q_inv(rng.uniform() * statmath::Q(t_));
      y = rho_ * x + std::sqrt(1.0 - rho_ * rho_) * rng.normal();
    }
    tr.ledger = protocol::BitLedger(opts_.ledger);
    tr.indices = {g.index};
    tr.samples_consumed = g.index;
    protocol::charge_index(tr.ledger, "index", code, g.index);
  } else {
    sources::SampleStream stream(model_, seed);
    protocol::ScalarSelection sel = protocol::select_threshold_index(stream, t_, p_code, cap, opts_.ledger);
    y = sel.y[0];
    tr = std::move(sel.transcript);
  }
  r.estimate = {y / s_};
  fill_bits(r, tr);
  return r;
}

// ------------------------------------------------------------------- pareto

ParetoQuantizedEstimator::ParetoQuantizedEstimator(const JointModel& model, double k, RunOptions opts)
    : law_(as_additive(model, "pareto_quantized")), k_(k), opts_(opts), model_(model) {
  if (law_.x_law.kind() != sources::MarginalLaw::Kind::ParetoTwoSided) {
    throw ConfigError("pareto_quantized: x_law must be pareto, got " + law_.x_law.name());
  }
  if (!(law_.x_law.alpha() > 3.0)) {
    throw ConfigError("pareto_quantized: needs alpha > 3, got " + std::to_string(law_.x_law.alpha()));
  }
  alloc_ = protocol::allocate_bits_pareto(k, law_.x_law.alpha());
}

EstimateReport ParetoQuantizedEstimator::run(std::uint64_t seed) const {
  EstimateReport r;
  r.seed = seed;
  const double p = alloc_.crossing_probability;
  const double cap = wait_cap(opts_, p);
  double x = 0.0;
  double y = 0.0;
  protocol::Transcript tr;
  if (opts_.engine != Engine::Scan) {
    Rng rng(seed);
    const protocol::GolombCode code(p);
    const protocol::GeometricDraw g = protocol::sample_geometric_index(code, rng);
    check_cap(g.index, cap);
    x = law_.x_law.sample_above(alloc_.t, rng);
    y = law_.rho * x + std::sqrt(1.0 - law_.rho * law_.rho) * law_.z_law.sample(rng);
    tr.ledger = protocol::BitLedger(opts_.ledger);
    tr.indices = {g.index};
    tr.samples_consumed = g.index;
    protocol::charge_index(tr.ledger, "index", code, g.index);
  } else {
    sources::SampleStream stream(model_, seed);
    protocol::ScalarSelection sel = protocol::select_threshold_index(stream, alloc_.t, p, cap, opts_.ledger);
    x = sel.x;
    y = sel.y[0];
    tr = std::move(sel.transcript);
  }
  const protocol::QuantizedValue q = protocol::quantize_pareto_value(x, alloc_.t, alloc_.u, alloc_.k_q);
  tr.quantized_values = {q.x_hat};
  if (alloc_.k_q > 0) {
    tr.ledger.charge("x_hat", q.bits,
                     opts_.ledger == LedgerMode::Realized ? std::optional<long long>(alloc_.k_q) : std::nullopt);
  }
  r.estimate = {y / q.x_hat};
  fill_bits(r, tr);
  return r;
}

// ------------------------------------------------------------ linear baseline

LinearBaselineEstimator::LinearBaselineEstimator(const JointModel& model, double k1, double k2,
                                                 const linalg::Matrix& m, RunOptions opts)
    : k1_(k1), k2_(k2), opts_(opts), model_(model) {
  const auto* g = model.get_if<sources::GaussianXVec>();
  if (!g || g->rho.size() != 2) throw ConfigError("linear_baseline: needs a gaussian_xvec model with d = 2");
  if (m.rows() != 2 || m.cols() != 2) throw ConfigError("linear_baseline: M must be 2 x 2");
  n_ = linalg::Matrix(2, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const std::vector<double> row{m(i, 0), m(i, 1)};
    const double v = linalg::dot(row, linalg::multiply(g->sigma_x.matrix(), row));
    if (!(v > 0.0)) throw ConfigError("linear_baseline: row of M has zero variance");
    for (std::size_t j = 0; j < 2; ++j) n_(i, j) = row[j] / std::sqrt(v);
  }
  try {
    n_inv_ = linalg::invert(n_);
  } catch (const SingularMatrixError& e) {
    throw ConfigError(std::string("linear_baseline: M is singular: ") + e.what());
  }
  alpha_ = linalg::multiply(n_, g->rho);
  for (double& a : alpha_) a = std::clamp(a, -1.0, 1.0);
  RunOptions inner = opts;
  if (inner.engine == Engine::Scan) inner.engine = Engine::Direct;  // scan handled here
  first_ = std::make_unique<ThresholdEstimator>(JointModel(sources::GaussianScalar{alpha_[0]}), k1, inner);
  second_ = std::make_unique<ThresholdEstimator>(JointModel(sources::GaussianScalar{alpha_[1]}), k2, inner);
}

EstimateReport LinearBaselineEstimator::run(std::uint64_t seed) const {
  EstimateReport r;
  r.seed = seed;
  std::vector<double> alpha_hat(2);
  const ThresholdEstimator* runs[2] = {first_.get(), second_.get()};
  double bits = 0.0;
  std::optional<long long> realized = opts_.ledger == LedgerMode::Realized ? std::optional<long long>(0) : std::nullopt;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::uint64_t sub = substream_seed(seed, i + 1);
    if (opts_.engine == Engine::Scan) {
      sources::SampleStream stream(model_, sub);
      const std::vector<double> row{n_(i, 0), n_(i, 1)};
      sources::TransformedStream projected(stream, linalg::Matrix::row(row));
      const double p = runs[i]->crossing_probability();
      protocol::ScalarSelection sel =
          protocol::select_threshold_index(projected, runs[i]->threshold(), p, wait_cap(opts_, p), opts_.ledger);
      alpha_hat[i] = sel.y[0] / runs[i]->normalizer();
      bits += sel.transcript.ledger.total();
      if (realized) *realized += *sel.transcript.ledger.total_realized();
      r.samples_consumed += sel.transcript.samples_consumed;
    } else {
      const EstimateReport sub_r = runs[i]->run(sub);
      alpha_hat[i] = sub_r.estimate[0];
      bits += sub_r.bits_expected;
      if (realized) *realized += *sub_r.bits_realized;
      r.samples_consumed += sub_r.samples_consumed;
    }
  }
  r.estimate = linalg::multiply(n_inv_, alpha_hat);
  r.bits_expected = bits;
  r.bits_realized = realized;
  return r;
}

// --------------------------------------------------------------- naive scalar

NaiveScalarEstimator::NaiveScalarEstimator(const JointModel& model, double k, RunOptions opts)
    : k_(k), opts_(opts), model_(model) {
  const std::vector<double> rho = sources::true_correlations(model);
  if (!model.get_if<sources::GaussianYVec>() && !model.get_if<sources::GaussianXVec>()) {
    throw ConfigError("naive_scalar: needs a gaussian_yvec or gaussian_xvec model, got " + model.kind_name());
  }
  const double per = k / static_cast<double>(rho.size());
  RunOptions inner = opts;
  if (inner.engine == Engine::Scan) inner.engine = Engine::Direct;
  for (std::size_t l = 0; l < rho.size(); ++l) {
    runs_.push_back(std::make_unique<ThresholdEstimator>(JointModel(sources::GaussianScalar{rho[l]}), per, inner));
    coords_.push_back(l);
  }
}

EstimateReport NaiveScalarEstimator::run(std::uint64_t seed) const {
  EstimateReport r;
  r.seed = seed;
  const bool yvec = model_.get_if<sources::GaussianYVec>() != nullptr;
  std::optional<long long> realized = opts_.ledger == LedgerMode::Realized ? std::optional<long long>(0) : std::nullopt;
  r.estimate.resize(runs_.size());
  for (std::size_t l = 0; l < runs_.size(); ++l) {
    const std::uint64_t sub = substream_seed(seed, l + 1);
    const ThresholdEstimator& run = *runs_[l];
    if (opts_.engine == Engine::Scan) {
      ProjectedStream stream(model_, sub, yvec ? 0 : l, yvec ? l : 0);
      const double p = run.crossing_probability();
      protocol::ScalarSelection sel =
          protocol::select_threshold_index(stream, run.threshold(), p, wait_cap(opts_, p), opts_.ledger);
      r.estimate[l] = sel.y[0] / run.normalizer();
      r.bits_expected += sel.transcript.ledger.total();
      if (realized) *realized += *sel.transcript.ledger.total_realized();
      r.samples_consumed += sel.transcript.samples_consumed;
    } else {
      const EstimateReport s = run.run(sub);
      r.estimate[l] = s.estimate[0];
      r.bits_expected += s.bits_expected;
      if (realized) *realized += *s.bits_realized;
      r.samples_consumed += s.samples_consumed;
    }
  }
  r.bits_realized = realized;
  return r;
}

// ------------------------------------------------------------ free functions

EstimateReport estimate_max(const JointModel& model, int k, std::uint64_t seed, RunOptions opts) {
  return MaxEstimator(model, k, opts).run(seed);
}

EstimateReport estimate_threshold(const JointModel& model, double k, std::uint64_t seed, RunOptions opts) {
  return ThresholdEstimator(model, k, opts).run(seed);
}

EstimateReport estimate_additive_threshold(const JointModel& model, double k, std::uint64_t seed, RunOptions opts) {
  return ThresholdEstimator(model, k, opts).run(seed);
}

EstimateReport estimate_yvec(const JointModel& model, double k, std::uint64_t seed, RunOptions opts) {
  return YVecEstimator(model, k, opts).run(seed);
}

EstimateReport estimate_xvec(const JointModel& model, double k, double b0, std::uint64_t seed, RunOptions opts) {
  return XVecEstimator::from_budget(model, k, b0, true, opts).run(seed);
}

EstimateReport estimate_xvec_unquantized(const JointModel& model, double k_l, double b0, std::uint64_t seed,
                                         RunOptions opts) {
  return XVecEstimator(model, stopping_params_for_index_bits(k_l, model.x_dim(), b0), false, opts).run(seed);
}

EstimateReport estimate_clt(const JointModel& model, double k, std::uint64_t seed, RunOptions opts) {
  return CltEstimator(model, k, opts).run(seed);
}

EstimateReport estimate_pareto_quantized(const JointModel& model, double k, std::uint64_t seed, RunOptions opts) {
  return ParetoQuantizedEstimator(model, k, opts).run(seed);
}

EstimateReport estimate_linear_transform_baseline(const JointModel& model, double k1, double k2,
                                                  const linalg::Matrix& m, std::uint64_t seed, RunOptions opts) {
  return LinearBaselineEstimator(model, k1, k2, m, opts).run(seed);
}

// --------------------------------------------------------------- approx ML

std::vector<double> real_cubic_roots(double c3, double c2, double c1, double c0) {
  std::vector<double> roots;
  const double scale = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
  if (scale == 0.0) throw ConfigError("real_cubic_roots: zero polynomial");
  if (std::abs(c3) <= 1e-14 * scale) {
    if (std::abs(c2) <= 1e-14 * scale) {
      if (c1 != 0.0) roots.push_back(-c0 / c1);
    } else {
      const double disc = c1 * c1 - 4.0 * c2 * c0;
      if (disc >= 0.0) {
        const double q = -0.5 * (c1 + std::copysign(std::sqrt(disc), c1));
        if (q != 0.0) roots.push_back(c0 / q);
        roots.push_back(q / c2);
      }
    }
  } else {
    const double a = c2 / c3;
    const double b = c1 / c3;
    const double c = c0 / c3;
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double disc = q * q / 4.0 + p * p * p / 27.0;
    const double shift = -a / 3.0;
    if (disc > 0.0) {
      const double big = -std::copysign(std::cbrt(std::abs(q) / 2.0 + std::sqrt(disc)), q);
      const double small = big != 0.0 ? -p / (3.0 * big) : 0.0;
      roots.push_back(big + small + shift);
    } else if (p == 0.0) {
      roots.push_back(shift);
    } else {
      const double r = 2.0 * std::sqrt(-p / 3.0);
      const double arg = std::clamp(3.0 * q / (p * r), -1.0, 1.0);
      const double phi = std::acos(arg) / 3.0;
      for (int j = 0; j < 3; ++j) roots.push_back(r * std::cos(phi - 2.0 * statmath::kPi * j / 3.0) + shift);
    }
  }
  for (double& x : roots) {
    for (int it = 0; it < 4; ++it) {
      const double f = ((c3 * x + c2) * x + c1) * x + c0;
      const double df = (3.0 * c3 * x + 2.0 * c2) * x + c1;
      if (df == 0.0) break;
      const double next = x - f / df;
      if (!std::isfinite(next)) break;
      x = next;
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

ApproxMl approx_ml_estimate(double x_j, const std::vector<double>& y_j, const linalg::CorrelationMatrix& sigma_y) {
  if (y_j.size() != sigma_y.dim()) throw ConfigError("approx_ml_estimate: Y_J and Sigma_Y dimensions differ");
  if (x_j == 0.0) throw ConfigError("approx_ml_estimate: X_J = 0 leaves no reference root 1/X_J");
  const double q = linalg::dot(y_j, linalg::multiply(linalg::invert(sigma_y.matrix()), y_j));
  ApproxMl out;
  out.real_roots = real_cubic_roots(-q, q * x_j, -(x_j * x_j - 1.0 + q), x_j);
  if (out.real_roots.empty()) throw ConfigError("approx_ml_estimate: the cubic has no admissible real root");
  const double target = 1.0 / x_j;
  std::vector<double> dist;
  for (double r : out.real_roots) dist.push_back(std::abs(r - target));
  const auto best = std::min_element(dist.begin(), dist.end()) - dist.begin();
  out.c = out.real_roots[best];
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (static_cast<long>(i) != best && dist[i] <= 2.0 * dist[best]) out.ambiguous = true;
  out.estimate.resize(y_j.size());
  for (std::size_t i = 0; i < y_j.size(); ++i) out.estimate[i] = out.c * y_j[i];
  return out;
}

// ------------------------------------------------------ stopping-set moments

StoppingSetMoments stopping_set_moments(const protocol::StoppingSetParams& params, std::size_t draws,
                                        std::uint64_t seed) {
  const std::size_t d = params.d;
  StoppingSetMoments out;
  out.mean_wwt = linalg::Matrix(d, d);
  out.mean_inv_wwt = linalg::Matrix(d, d);
  linalg::Matrix m2(d, d);
  double a_mean = 0.0;
  double a_m2 = 0.0;
  double b_mean = 0.0;
  double b_m2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    Rng rng(substream_seed(seed, i));
    const protocol::StoppingSelection sel = protocol::draw_stopping_set(params, rng);
    const linalg::Matrix wwt = sel.w * sel.w.transpose();
    linalg::Matrix inv;
    try {
      inv = linalg::invert(wwt);
    } catch (const SingularMatrixError&) {
      continue;
    }
    ++n;
    const double dn = static_cast<double>(n);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        out.mean_wwt(r, c) += (wwt(r, c) - out.mean_wwt(r, c)) / dn;
        const double delta = inv(r, c) - out.mean_inv_wwt(r, c);
        out.mean_inv_wwt(r, c) += delta / dn;
        m2(r, c) += delta * (inv(r, c) - out.mean_inv_wwt(r, c));
      }
    const double a = wwt.trace() / static_cast<double>(d);
    const double b = inv.trace() / static_cast<double>(d);
    const double da = a - a_mean;
    a_mean += da / dn;
    a_m2 += da * (a - a_mean);
    const double db = b - b_mean;
    b_mean += db / dn;
    b_m2 += db * (b - b_mean);
  }
  out.draws = n;
  out.se_inv_wwt = linalg::Matrix(d, d);
  if (n > 1) {
    const double dn = static_cast<double>(n);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) out.se_inv_wwt(r, c) = std::sqrt(m2(r, c) / (dn - 1.0) / dn);
    out.alpha_se = std::sqrt(a_m2 / (dn - 1.0) / dn);
    out.beta_se = std::sqrt(b_m2 / (dn - 1.0) / dn);
  }
  out.alpha_hat = a_mean;
  out.beta_hat = b_mean;
  return out;
}

}  // namespace corrlink::estimators
