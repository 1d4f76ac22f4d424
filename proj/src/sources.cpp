#include "corrlink/sources.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corrlink/errors.hpp"
#include "corrlink/statmath.hpp"

namespace corrlink::sources {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kSqrt3 = 1.73205080756887729353;

void check_rho(double rho, const char* who) {
  if (!(std::abs(rho) <= 1.0)) {
    throw ConfigError(std::string(who) + ": |rho| must be <= 1, got " + std::to_string(rho));
  }
}

void check_rho_vector(const std::vector<double>& rho, std::size_t d, const char* who) {
  if (rho.size() != d) {
    throw ConfigError(std::string(who) + ": Rho has " + std::to_string(rho.size()) +
                      " entries but the correlation matrix is " + std::to_string(d) + "x" +
                      std::to_string(d));
  }
  for (double r : rho) check_rho(r, who);
}

linalg::Matrix yvec_noise_cov(const GaussianYVec& m) {
  linalg::Matrix s = m.sigma_y.matrix();
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) -= m.rho[i] * m.rho[j];
  return s;
}

}  // namespace

// ---------------------------------------------------------------- MarginalLaw

MarginalLaw::MarginalLaw(Kind kind, double alpha) : kind_(kind), alpha_(alpha) {
  if (kind == Kind::ParetoTwoSided) {
    if (!(alpha > 2.0) || !std::isfinite(alpha)) {
      throw ConfigError("pareto law: alpha must exceed 2 for unit variance, got " + std::to_string(alpha));
    }
    x0_ = std::sqrt((alpha - 2.0) / alpha);
  }
}

MarginalLaw MarginalLaw::pareto(double alpha) { return MarginalLaw(Kind::ParetoTwoSided, alpha); }

MarginalLaw MarginalLaw::from_name(const std::string& name, double alpha) {
  if (name == "normal" || name == "gaussian") return normal();
  if (name == "laplace") return laplace();
  if (name == "pareto") return pareto(alpha);
  if (name == "uniform") return uniform();
  if (name == "rademacher") return rademacher();
  throw ConfigError("unknown marginal law '" + name + "'");
}

std::string MarginalLaw::name() const {
  switch (kind_) {
    case Kind::StdNormal: return "normal";
    case Kind::Laplace: return "laplace";
    case Kind::ParetoTwoSided: return "pareto";
    case Kind::Uniform: return "uniform";
    case Kind::Rademacher: return "rademacher";
  }
  return "?";
}

double MarginalLaw::sample(Rng& rng) const {
  switch (kind_) {
    case Kind::StdNormal: return rng.normal();
    case Kind::Laplace: {
      const double e = rng.exponential() / kSqrt2;
      return rng.coin() ? e : -e;
    }
    case Kind::ParetoTwoSided: {
      const double v = x0_ * std::pow(rng.uniform(), -1.0 / alpha_);
      return rng.coin() ? v : -v;
    }
    case Kind::Uniform: return kSqrt3 * (2.0 * rng.uniform() - 1.0);
    case Kind::Rademacher: return rng.coin() ? 1.0 : -1.0;
  }
  return 0.0;
}

double MarginalLaw::tail(double x) const {
  switch (kind_) {
    case Kind::StdNormal: return statmath::Q(x);
    case Kind::Laplace:
      return x >= 0.0 ? 0.5 * std::exp(-kSqrt2 * x) : 1.0 - 0.5 * std::exp(kSqrt2 * x);
    case Kind::ParetoTwoSided:
      if (x >= x0_) return 0.5 * std::pow(x0_ / x, alpha_);
      if (x > -x0_) return 0.5;
      return 1.0 - 0.5 * std::pow(-x0_ / x, alpha_);
    case Kind::Uniform:
      return std::clamp((kSqrt3 - x) / (2.0 * kSqrt3), 0.0, 1.0);
    case Kind::Rademacher:
      if (x < -1.0) return 1.0;
      return x < 1.0 ? 0.5 : 0.0;
  }
  return 0.0;
}

double MarginalLaw::tail_inv(double p) const {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError(name() + " tail_inv: p must lie in (0, 1), got " + std::to_string(p));
  }
  switch (kind_) {
    case Kind::StdNormal: return statmath::Q_inv(p);
    case Kind::Laplace:
      return p <= 0.5 ? -std::log(2.0 * p) / kSqrt2 : std::log(2.0 * (1.0 - p)) / kSqrt2;
    case Kind::ParetoTwoSided:
      // Any x in (-x0, x0) has tail 1/2; x0 is returned for p = 1/2.
      return p <= 0.5 ? x0_ * std::pow(2.0 * p, -1.0 / alpha_)
                      : -x0_ * std::pow(2.0 * (1.0 - p), -1.0 / alpha_);
    case Kind::Uniform: return kSqrt3 * (1.0 - 2.0 * p);
    case Kind::Rademacher:
      throw DomainError("rademacher tail_inv: discrete law has no threshold with tail " + std::to_string(p));
  }
  return 0.0;
}

double MarginalLaw::conditional_mean(double t) const {
  switch (kind_) {
    case Kind::StdNormal: return statmath::inverse_mills(t);
    case Kind::Laplace:
      if (t < 0.0) throw DomainError("laplace conditional moments need t >= 0");
      return t + 1.0 / kSqrt2;
    case Kind::ParetoTwoSided:
      if (t < x0_) throw DomainError("pareto conditional moments need t >= x0");
      return t * alpha_ / (alpha_ - 1.0);
    case Kind::Uniform:
      if (t >= kSqrt3) throw DomainError("uniform conditional moments need t < sqrt(3)");
      return 0.5 * (std::max(t, -kSqrt3) + kSqrt3);
    case Kind::Rademacher:
      if (t >= 1.0) throw DomainError("rademacher conditional moments need t < 1");
      return t < -1.0 ? 0.0 : 1.0;
  }
  return 0.0;
}

double MarginalLaw::conditional_variance(double t) const {
  switch (kind_) {
    case Kind::StdNormal: return statmath::truncated_normal_moments(t).variance;
    case Kind::Laplace:
      if (t < 0.0) throw DomainError("laplace conditional moments need t >= 0");
      return 0.5;
    case Kind::ParetoTwoSided:
      if (t < x0_) throw DomainError("pareto conditional moments need t >= x0");
      return t * t * alpha_ / ((alpha_ - 2.0) * (alpha_ - 1.0) * (alpha_ - 1.0));
    case Kind::Uniform: {
      if (t >= kSqrt3) throw DomainError("uniform conditional moments need t < sqrt(3)");
      const double w = kSqrt3 - std::max(t, -kSqrt3);
      return w * w / 12.0;
    }
    case Kind::Rademacher:
      if (t >= 1.0) throw DomainError("rademacher conditional moments need t < 1");
      return t < -1.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

double MarginalLaw::sample_above(double t, Rng& rng) const {
  switch (kind_) {
    case Kind::StdNormal: return statmath::Q_inv(rng.uniform() * statmath::Q(t));
    case Kind::Laplace:
      if (t < 0.0) throw DomainError("laplace sample_above needs t >= 0");
      return t + rng.exponential() / kSqrt2;
    case Kind::ParetoTwoSided:
      if (t < x0_) throw DomainError("pareto sample_above needs t >= x0");
      return t * std::pow(rng.uniform(), -1.0 / alpha_);
    case Kind::Uniform: {
      if (t >= kSqrt3) throw DomainError("uniform sample_above needs t < sqrt(3)");
      const double lo = std::max(t, -kSqrt3);
      return lo + rng.uniform() * (kSqrt3 - lo);
    }
    case Kind::Rademacher:
      if (t >= 1.0) throw DomainError("rademacher sample_above needs t < 1");
      if (t < -1.0) return rng.coin() ? 1.0 : -1.0;
      return 1.0;
  }
  return 0.0;
}

std::optional<double> MarginalLaw::support_bound() const {
  if (kind_ == Kind::Uniform) return kSqrt3;
  if (kind_ == Kind::Rademacher) return 1.0;
  return std::nullopt;
}

// ----------------------------------------------------------------- JointModel

JointModel::JointModel(Variant v) : v_(std::move(v)) {
  struct Validate {
    void operator()(const GaussianScalar& m) const { check_rho(m.rho, "gaussian_scalar"); }
    void operator()(const GaussianYVec& m) const {
      check_rho_vector(m.rho, m.sigma_y.dim(), "gaussian_yvec");
      const linalg::EigenDecomposition eig = linalg::symmetric_eigen(yvec_noise_cov(m));
      if (eig.values.front() <= 1e-12) {
        throw ConfigError("gaussian_yvec: Sigma_Y - Rho Rho^T must be positive definite (smallest eigenvalue " +
                          std::to_string(eig.values.front()) + ")");
      }
    }
    void operator()(const GaussianXVec& m) const {
      check_rho_vector(m.rho, m.sigma_x.dim(), "gaussian_xvec");
      const double s2 = xvec_sigma2(m);
      if (s2 < 0.0) {
        throw ConfigError("gaussian_xvec: sigma^2 = 1 - Rho Sigma_X^-1 Rho^T is negative (" +
                          std::to_string(s2) + ")");
      }
    }
    void operator()(const AdditiveNoise& m) const { check_rho(m.rho, "additive_noise"); }
    void operator()(const DoublySymmetricBinary& m) const {
      if (!(m.p >= 0.0 && m.p <= 1.0)) {
        throw ConfigError("binary: flip probability must lie in [0, 1], got " + std::to_string(m.p));
      }
    }
    void operator()(const BlockAveraged& m) const {
      if (!m.inner) throw ConfigError("block_averaged: missing inner model");
      if (m.m < 1) throw ConfigError("block_averaged: block size must be >= 1");
      if (m.inner->x_dim() != 1 || m.inner->y_dim() != 1) {
        throw ConfigError("block_averaged: inner model must be scalar");
      }
    }
  };
  std::visit(Validate{}, v_);
}

JointModel JointModel::block_averaged(const JointModel& inner, std::size_t m) {
  return JointModel(BlockAveraged{std::make_shared<const JointModel>(inner), m});
}

std::size_t JointModel::x_dim() const {
  if (const auto* m = get_if<GaussianXVec>()) return m->rho.size();
  return 1;
}

std::size_t JointModel::y_dim() const {
  if (const auto* m = get_if<GaussianYVec>()) return m->rho.size();
  return 1;
}

std::string JointModel::kind_name() const {
  static const char* names[] = {"gaussian_scalar", "gaussian_yvec", "gaussian_xvec",
                                "additive_noise",  "binary",        "block_averaged"};
  return names[v_.index()];
}

std::vector<double> true_correlations(const JointModel& model) {
  struct Visit {
    std::vector<double> operator()(const GaussianScalar& m) const { return {m.rho}; }
    std::vector<double> operator()(const GaussianYVec& m) const { return m.rho; }
    std::vector<double> operator()(const GaussianXVec& m) const { return m.rho; }
    std::vector<double> operator()(const AdditiveNoise& m) const { return {m.rho}; }
    std::vector<double> operator()(const DoublySymmetricBinary& m) const { return {1.0 - 2.0 * m.p}; }
    std::vector<double> operator()(const BlockAveraged& m) const { return true_correlations(*m.inner); }
  };
  return std::visit(Visit{}, model.variant());
}

double xvec_sigma2(const GaussianXVec& model) {
  const linalg::Matrix inv = linalg::invert(model.sigma_x.matrix());
  return 1.0 - linalg::dot(model.rho, linalg::multiply(inv, model.rho));
}

std::optional<double> x_support_bound(const JointModel& model) {
  if (model.get_if<DoublySymmetricBinary>()) return 1.0;
  if (const auto* m = model.get_if<AdditiveNoise>()) return m->x_law.support_bound();
  if (const auto* m = model.get_if<BlockAveraged>()) {
    const auto inner = x_support_bound(*m->inner);
    if (inner) return *inner * std::sqrt(static_cast<double>(m->m));
  }
  return std::nullopt;
}

// --------------------------------------------------------------- SampleStream

struct SampleStream::Impl {
  JointModel model;
  Rng rng;
  // vector-model precomputations
  linalg::Matrix root;          // (Sigma_Y - Rho Rho^T)^{1/2} or Sigma_X^{1/2}
  std::vector<double> coef;     // Rho Sigma_X^{-1}
  double sigma = 0.0;
  std::vector<double> z;
  std::vector<double> tmp;
  std::unique_ptr<SampleStream> inner;
  std::size_t m = 1;
  double inv_sqrt_m = 1.0;

  Impl(const JointModel& mdl, std::uint64_t seed) : model(mdl), rng(seed) {
    if (const auto* y = model.get_if<GaussianYVec>()) {
      root = linalg::sym_sqrt(yvec_noise_cov(*y));
      z.resize(y->rho.size());
    } else if (const auto* x = model.get_if<GaussianXVec>()) {
      root = linalg::sym_sqrt(x->sigma_x);
      coef = linalg::multiply(x->rho, linalg::invert(x->sigma_x.matrix()));
      sigma = std::sqrt(std::max(0.0, xvec_sigma2(*x)));
      z.resize(x->rho.size());
      tmp.resize(x->rho.size());
    } else if (const auto* b = model.get_if<BlockAveraged>()) {
      inner = std::make_unique<SampleStream>(*b->inner, seed);
      m = b->m;
      inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
    }
  }

  void next(std::span<double> x, std::span<double> y) {
    struct Visit {
      Impl& s;
      std::span<double> x;
      std::span<double> y;
      void operator()(const GaussianScalar& g) const {
        x[0] = s.rng.normal();
        y[0] = g.rho * x[0] + std::sqrt(1.0 - g.rho * g.rho) * s.rng.normal();
      }
      void operator()(const GaussianYVec& g) const {
        x[0] = s.rng.normal();
        for (double& v : s.z) v = s.rng.normal();
        const std::vector<double> noise = linalg::multiply(s.root, s.z);
        for (std::size_t i = 0; i < g.rho.size(); ++i) y[i] = g.rho[i] * x[0] + noise[i];
      }
      void operator()(const GaussianXVec&) const {
        for (double& v : s.z) v = s.rng.normal();
        const std::vector<double> xv = linalg::multiply(s.root, s.z);
        std::copy(xv.begin(), xv.end(), x.begin());
        y[0] = linalg::dot(s.coef, xv) + s.sigma * s.rng.normal();
      }
      void operator()(const AdditiveNoise& a) const {
        x[0] = a.x_law.sample(s.rng);
        y[0] = a.rho * x[0] + std::sqrt(1.0 - a.rho * a.rho) * a.z_law.sample(s.rng);
      }
      void operator()(const DoublySymmetricBinary& b) const {
        const bool xb = s.rng.coin();
        const bool yb = (s.rng.uniform() < b.p) ? !xb : xb;
        x[0] = xb ? 1.0 : -1.0;
        y[0] = yb ? 1.0 : -1.0;
      }
      void operator()(const BlockAveraged&) const {
        double sx = 0.0;
        double sy = 0.0;
        double xi = 0.0;
        double yi = 0.0;
        for (std::size_t i = 0; i < s.m; ++i) {
          s.inner->next(std::span<double>(&xi, 1), std::span<double>(&yi, 1));
          sx += xi;
          sy += yi;
        }
        x[0] = sx * s.inv_sqrt_m;
        y[0] = sy * s.inv_sqrt_m;
      }
    };
    std::visit(Visit{*this, x, y}, model.variant());
  }
};

SampleStream::SampleStream(const JointModel& model, std::uint64_t seed)
    : impl_(std::make_unique<Impl>(model, seed)), x_dim_(model.x_dim()), y_dim_(model.y_dim()) {}

SampleStream::~SampleStream() = default;
SampleStream::SampleStream(SampleStream&&) noexcept = default;

void SampleStream::next(std::span<double> x, std::span<double> y) {
  if (x.size() < x_dim_ || y.size() < y_dim_) throw ContractError("SampleStream::next: buffer too small");
  impl_->next(x, y);
}

SampleStream sample_stream(const JointModel& model, std::uint64_t seed) { return SampleStream(model, seed); }

// --------------------------------------------------------------- ReplayStream

ReplayStream::ReplayStream(std::vector<std::vector<double>> xs, std::vector<std::vector<double>> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  if (xs_.size() != ys_.size()) throw ContractError("ReplayStream: x and y lengths differ");
  x_dim_ = xs_.empty() ? 1 : xs_.front().size();
  y_dim_ = ys_.empty() ? 1 : ys_.front().size();
}

ReplayStream::ReplayStream(const std::vector<double>& xs) : x_dim_(1), y_dim_(1) {
  for (double v : xs) {
    xs_.push_back({v});
    ys_.push_back({0.0});
  }
}

void ReplayStream::next(std::span<double> x, std::span<double> y) {
  if (pos_ >= xs_.size()) throw ContractError("ReplayStream exhausted after " + std::to_string(pos_) + " pairs");
  std::copy(xs_[pos_].begin(), xs_[pos_].end(), x.begin());
  std::copy(ys_[pos_].begin(), ys_[pos_].end(), y.begin());
  ++pos_;
}

// ----------------------------------------------------------- TransformedStream

TransformedStream::TransformedStream(PairStream& inner, linalg::Matrix transform)
    : inner_(inner), transform_(std::move(transform)), buf_(inner.x_dim()) {
  if (transform_.cols() != inner.x_dim()) throw ConfigError("TransformedStream: transform shape mismatch");
}

void TransformedStream::next(std::span<double> x, std::span<double> y) {
  inner_.next(buf_, y);
  const std::vector<double> out = linalg::multiply(transform_, buf_);
  std::copy(out.begin(), out.end(), x.begin());
}

}  // namespace corrlink::sources
