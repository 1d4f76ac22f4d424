#include "corrlink/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "corrlink/errors.hpp"
#include "corrlink/statmath.hpp"

namespace corrlink::protocol {

namespace {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("transcript record: bad ") + what + " '" + s + "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::optional<StoppingSetParams> try_allocate_xvec(double k, std::size_t d, double b0) {
  const double dd = static_cast<double>(d);
  const double root = std::sqrt(k + 1.0) - 1.0;
  const double k_l0 = root * root / dd;
  const int k_q = std::max(1, static_cast<int>(std::floor(std::sqrt(4.0 * k_l0 / (dd * dd * dd)))));
  const double k_l = (k - dd * dd * k_q) / dd;
  if (!(k_l > 0.0) || k_l > 1000.0) return std::nullopt;
  const double p_index = statmath::geometric_entropy_inv(k_l);
  const double qa = p_index / (2.0 * std::pow(1.0 - 2.0 * statmath::Q(b0), dd - 1.0));
  if (!(qa < 0.5)) return std::nullopt;
  StoppingSetParams p;
  p.a = statmath::Q_inv(qa);
  p.b = b0;
  p.d = d;
  p.k_l = k_l;
  p.k_q = k_q;
  if (!(p.a > dd * (p.b + 1.0)) || !(p.a > (dd - 1.0) * p.b)) return std::nullopt;
  return p;
}

}  // namespace

// ------------------------------------------------------------------ BitLedger

void BitLedger::charge(std::string label, double expected_bits, std::optional<long long> realized_bits) {
  if (!(expected_bits >= 0.0)) {
    throw ContractError("ledger: expected bits must be non-negative for '" + label + "'");
  }
  if (mode_ == LedgerMode::Realized) {
    if (!realized_bits) throw ContractError("ledger: realized mode needs a codeword length for '" + label + "'");
    if (*realized_bits < 1) throw ContractError("ledger: realized length must be >= 1 for '" + label + "'");
  } else {
    realized_bits.reset();
  }
  entries_.push_back({std::move(label), expected_bits, realized_bits});
}

double BitLedger::total() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.expected_bits;
  return s;
}

std::optional<long long> BitLedger::total_realized() const {
  if (mode_ != LedgerMode::Realized) return std::nullopt;
  long long s = 0;
  for (const auto& e : entries_) s += *e.realized_bits;
  return s;
}

// ----------------------------------------------------------------- GolombCode

GolombCode::GolombCode(double p) : p_(p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("GolombCode: p must lie in (0, 1), got " + std::to_string(p));
  }
  m_ = std::max(1.0, std::ceil(-statmath::kLn2 / std::log1p(-p)));
  b_ = m_ <= 1.0 ? 0 : static_cast<int>(std::ceil(std::log2(m_)));
  // log2 can land a hair below an exact power of two
  while (std::ldexp(1.0, b_) < m_) ++b_;
  while (b_ > 0 && std::ldexp(1.0, b_ - 1) >= m_) --b_;
  cutoff_ = std::ldexp(1.0, b_) - m_;
}

long long GolombCode::length(std::uint64_t q, double r) const {
  long long bits = static_cast<long long>(q) + 1;
  if (b_ > 0) bits += (r < cutoff_) ? b_ - 1 : b_;
  return bits;
}

long long GolombCode::length(double n) const {
  if (!(n >= 0.0)) throw ContractError("GolombCode::length: n must be >= 0");
  const double q = std::floor(n / m_);
  const double r = n - q * m_;
  return length(static_cast<std::uint64_t>(q), std::clamp(r, 0.0, m_ - 1.0));
}

std::string GolombCode::encode(std::uint64_t n) const {
  if (m_ >= 0x1.0p62) throw ContractError("GolombCode::encode: m too large");
  const auto m = static_cast<std::uint64_t>(m_);
  const std::uint64_t q = n / m;
  const std::uint64_t r = n % m;
  std::string out(q, '1');
  out.push_back('0');
  const auto cutoff = static_cast<std::uint64_t>(cutoff_);
  auto put = [&out](std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) out.push_back(((v >> i) & 1U) ? '1' : '0');
  };
  if (b_ > 0) {
    if (r < cutoff) {
      put(r, b_ - 1);
    } else {
      put(r + cutoff, b_);
    }
  }
  return out;
}

GeometricDraw sample_geometric_index(const GolombCode& code, Rng& rng) {
  const double p = code.crossing_probability();
  const double m = code.m();
  const double log_fail = std::log1p(-p);
  const double log_block_fail = m * log_fail;  // log Pr(no success in a block of m)
  const double block_success = -std::expm1(log_block_fail);
  GeometricDraw g;
  if (block_success < 1.0) {
    const double q = std::floor(std::log(rng.uniform()) / log_block_fail);
    g.q = static_cast<std::uint64_t>(q);
  }
  // Within the block: Pr(r) proportional to (1-p)^r p on [0, m).
  const double r = std::ceil(std::log1p(-rng.uniform() * block_success) / log_fail) - 1.0;
  g.r = std::clamp(r, 0.0, m - 1.0);
  g.index = static_cast<double>(g.q) * m + g.r + 1.0;
  return g;
}

double default_wait_cap(double p) { return 1024.0 * std::ceil(1.0 / p); }

void charge_index(BitLedger& ledger, const std::string& label, const GolombCode& code, double gap) {
  const double expected = statmath::geometric_entropy(code.crossing_probability());
  if (ledger.mode() == LedgerMode::Realized) {
    ledger.charge(label, expected, code.length(gap - 1.0));
  } else {
    ledger.charge(label, expected);
  }
}

// ------------------------------------------------------------------ selection

ScalarSelection select_max_index(sources::PairStream& stream, double n, LedgerMode mode) {
  if (!(n >= 2.0)) throw ConfigError("select_max_index: need n >= 2 samples");
  int k = 0;
  const double mant = std::frexp(n, &k);
  if (mant != 0.5) throw ConfigError("select_max_index: n must be a power of two for a fixed-length index");
  --k;  // n = 2^k
  if (n > 0x1.0p40) throw ConfigError("select_max_index: scanning more than 2^40 samples is not supported");
  std::vector<double> x(stream.x_dim());
  std::vector<double> y(stream.y_dim());
  ScalarSelection sel;
  sel.transcript.ledger = BitLedger(mode);
  double best = -std::numeric_limits<double>::infinity();
  double best_i = 0.0;
  for (double i = 1.0; i <= n; i += 1.0) {
    stream.next(x, y);
    if (x[0] > best) {
      best = x[0];
      best_i = i;
      sel.y = y;
    }
  }
  sel.x = best;
  sel.transcript.indices = {best_i};
  sel.transcript.samples_consumed = n;
  sel.transcript.ledger.charge("index", static_cast<double>(k),
                               mode == LedgerMode::Realized ? std::optional<long long>(k) : std::nullopt);
  return sel;
}

ScalarSelection select_threshold_index(sources::PairStream& stream, double t, double p, double cap,
                                       LedgerMode mode) {
  const GolombCode code(p);
  std::vector<double> x(stream.x_dim());
  std::vector<double> y(stream.y_dim());
  ScalarSelection sel;
  sel.transcript.ledger = BitLedger(mode);
  for (double i = 1.0;; i += 1.0) {
    if (i > cap) {
      throw WaitCapExceeded("threshold scan exceeded the wait cap of " + format_g17(cap) + " samples", cap);
    }
    stream.next(x, y);
    if (x[0] > t) {
      sel.x = x[0];
      sel.y = y;
      sel.transcript.indices = {i};
      sel.transcript.samples_consumed = i;
      charge_index(sel.transcript.ledger, "index", code, i);
      return sel;
    }
  }
}

double StoppingSetParams::crossing_probability() const {
  return 2.0 * statmath::Q(a) * std::pow(1.0 - 2.0 * statmath::Q(b), static_cast<double>(d) - 1.0);
}

void StoppingSetParams::validate() const {
  const double dd = static_cast<double>(d);
  if (d < 1) throw ConfigError("stopping sets: dimension must be >= 1");
  if (!(b > 0.0) && d > 1) throw ConfigError("stopping sets: b must be positive");
  if (!(a > dd * (b + 1.0))) {
    throw ConfigError("stopping sets: need a > d(b+1), got a=" + std::to_string(a) + ", b=" + std::to_string(b) +
                      ", d=" + std::to_string(d));
  }
  if (!(a > (dd - 1.0) * b)) throw ConfigError("stopping sets: need a > (d-1)b");
  if (k_q < 1) throw ConfigError("stopping sets: k_q must be >= 1 (the sign of each diagonal entry costs a bit)");
  const double p = crossing_probability();
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("stopping sets: crossing probability outside (0, 1)");
}

StoppingSetParams make_stopping_set_params(double a, double b, std::size_t d, int k_q) {
  StoppingSetParams p;
  p.a = a;
  p.b = b;
  p.d = d;
  p.k_q = k_q;
  p.validate();
  p.k_l = statmath::geometric_entropy(p.crossing_probability());
  return p;
}

StoppingSelection select_stopping_set_indices(sources::PairStream& whitened, const StoppingSetParams& params,
                                              double cap, LedgerMode mode) {
  params.validate();
  const std::size_t d = params.d;
  if (whitened.x_dim() != d) throw ConfigError("select_stopping_set_indices: stream dimension differs from d");
  const GolombCode code(params.crossing_probability());
  std::vector<double> x(d);
  std::vector<double> y(whitened.y_dim());
  StoppingSelection sel;
  sel.transcript.ledger = BitLedger(mode);
  sel.w = linalg::Matrix(d, d);
  sel.y.resize(d);
  double consumed = 0.0;
  for (std::size_t l = 0; l < d; ++l) {
    for (double gap = 1.0;; gap += 1.0) {
      if (gap > cap) {
        throw WaitCapExceeded("stopping-set scan exceeded the wait cap of " + format_g17(cap) + " samples", cap);
      }
      whitened.next(x, y);
      bool hit = std::abs(x[l]) > params.a;
      for (std::size_t j = 0; hit && j < d; ++j)
        if (j != l && !(std::abs(x[j]) < params.b)) hit = false;
      if (!hit) continue;
      consumed += gap;
      sel.transcript.indices.push_back(consumed);
      for (std::size_t j = 0; j < d; ++j) sel.w(j, l) = x[j];
      sel.y[l] = y[0];
      charge_index(sel.transcript.ledger, "index[" + std::to_string(l + 1) + "]", code, gap);
      break;
    }
  }
  sel.transcript.samples_consumed = consumed;
  return sel;
}

StoppingSelection draw_stopping_set(const StoppingSetParams& params, Rng& rng, LedgerMode mode) {
  params.validate();
  const std::size_t d = params.d;
  const GolombCode code(params.crossing_probability());
  const double qa = statmath::Q(params.a);
  const double qb = statmath::Q(params.b);
  StoppingSelection sel;
  sel.transcript.ledger = BitLedger(mode);
  sel.w = linalg::Matrix(d, d);
  double consumed = 0.0;
  for (std::size_t l = 0; l < d; ++l) {
    const GeometricDraw g = sample_geometric_index(code, rng);
    consumed += g.index;
    sel.transcript.indices.push_back(consumed);
    for (std::size_t j = 0; j < d; ++j) {
      if (j == l) {
        const double mag = statmath::Q_inv(rng.uniform() * qa);
        sel.w(j, l) = rng.coin() ? mag : -mag;
      } else {
        sel.w(j, l) = statmath::Q_inv(qb + rng.uniform() * (1.0 - 2.0 * qb));
      }
    }
    charge_index(sel.transcript.ledger, "index[" + std::to_string(l + 1) + "]", code, g.index);
  }
  sel.transcript.samples_consumed = consumed;
  return sel;
}

// ----------------------------------------------------------------- quantizers

QuantizedMatrix quantize_W_matrix(const linalg::Matrix& w, const StoppingSetParams& params) {
  const std::size_t d = params.d;
  if (w.rows() != d || w.cols() != d) throw ConfigError("quantize_W_matrix: matrix must be d x d");
  if (params.k_q < 1) throw ConfigError("quantize_W_matrix: k_q must be >= 1");
  const double cells = std::ldexp(1.0, params.k_q);
  const double a = params.a;
  const double c = std::sqrt(3.0) * a;
  const double half_cells = cells / 2.0;
  const double diag_width = (c - a) / half_cells;
  const double off_width = 2.0 * params.b / cells;
  QuantizedMatrix out{linalg::Matrix(d, d), static_cast<double>(d * d) * params.k_q};
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double v = w(i, j);
      if (i == j) {
        const double mag = std::clamp(std::abs(v), a, c);
        const double cell = std::min(std::floor((mag - a) / diag_width), half_cells - 1.0);
        out.w_hat(i, j) = std::copysign(a + (cell + 0.5) * diag_width, v);
      } else {
        const double clamped = std::clamp(v, -params.b, params.b);
        const double cell = std::min(std::floor((clamped + params.b) / off_width), cells - 1.0);
        out.w_hat(i, j) = -params.b + (cell + 0.5) * off_width;
      }
    }
  return out;
}

QuantizedValue quantize_pareto_value(double x, double t, double u, int k_q) {
  if (!(x > t)) throw ContractError("quantize_pareto_value: x must exceed the threshold t");
  if (!(u > t)) throw ContractError("quantize_pareto_value: need u > t");
  if (k_q < 0) throw ContractError("quantize_pareto_value: k_q must be >= 0");
  const double cells = std::ldexp(1.0, k_q);
  const double delta = (u - t) / cells;
  QuantizedValue out;
  out.bits = k_q;
  if (x > u) {
    out.x_hat = u;
  } else {
    const double cell = std::min(std::floor((x - t) / delta), cells - 1.0);
    out.x_hat = t + (cell + 0.5) * delta;
  }
  return out;
}

// ----------------------------------------------------------------- allocation

StoppingSetParams allocate_bits_xvec(double k, std::size_t d, double b0) {
  if (d < 1) throw ConfigError("allocate_bits_xvec: d must be >= 1");
  if (!(b0 > 0.0)) throw ConfigError("allocate_bits_xvec: b0 must be positive");
  if (!(k > 0.0) || !std::isfinite(k)) throw ConfigError("allocate_bits_xvec: k must be positive");
  if (auto p = try_allocate_xvec(k, d, b0)) return *p;
  {
    const double dd = static_cast<double>(d);
    const double root = std::sqrt(k + 1.0) - 1.0;
    const int k_q = std::max(1, static_cast<int>(std::floor(std::sqrt(4.0 * root * root / (dd * dd * dd * dd)))));
    if ((k - dd * dd * k_q) / dd > 1000.0) {
      // 2^-1000 is near the bottom of the double range.
      throw ConfigError("allocate_bits_xvec: k=" + format_g17(k) + " needs more than 1000 bits per index for d=" +
                        std::to_string(d) + ", beyond double precision");
    }
  }
  for (double kk = std::floor(k) + 1.0; kk <= 200000.0; kk += 1.0) {
    if (try_allocate_xvec(kk, d, b0)) {
      throw ConfigError("allocate_bits_xvec: k=" + format_g17(k) + " is too small for d=" + std::to_string(d) +
                        ", b0=" + format_g17(b0) + " (need a > d(b0+1)); minimal feasible k is " + format_g17(kk));
    }
  }
  throw ConfigError("allocate_bits_xvec: no feasible k for d=" + std::to_string(d));
}

ParetoAllocation allocate_bits_pareto(double k, double alpha) {
  const sources::MarginalLaw law = sources::MarginalLaw::pareto(alpha);
  if (!(k > 0.0) || !std::isfinite(k)) throw ConfigError("allocate_bits_pareto: k must be positive");
  ParetoAllocation out;
  out.k_q = static_cast<int>(std::floor(k / (alpha - 1.0)));
  out.k_l = k - out.k_q;
  if (!(out.k_l > 2.0)) throw ConfigError("allocate_bits_pareto: k=" + format_g17(k) + " leaves no index bits");
  out.crossing_probability = statmath::geometric_entropy_inv(out.k_l);
  out.t = law.tail_inv(out.crossing_probability);
  if (!(out.t > 1.0)) {
    throw ConfigError("allocate_bits_pareto: k=" + format_g17(k) + " gives threshold t=" + format_g17(out.t) +
                      " <= 1, so u = t^(alpha/(alpha-2)) does not exceed t");
  }
  out.u = std::pow(out.t, alpha / (alpha - 2.0));
  return out;
}

// --------------------------------------------------------------------- record

std::string to_record(const std::string& label, const Transcript& transcript) {
  if (label.find_first_of("\t\n") != std::string::npos) {
    throw ContractError("to_record: label must not contain tabs or newlines");
  }
  std::string out = label;
  out.push_back('\t');
  for (std::size_t i = 0; i < transcript.indices.size(); ++i) {
    if (i) out.push_back(',');
    out += format_g17(transcript.indices[i]);
  }
  out.push_back('\t');
  out += format_g17(transcript.ledger.total());
  out.push_back('\t');
  const auto realized = transcript.ledger.total_realized();
  out += realized ? std::to_string(*realized) : "NA";
  return out;
}

TranscriptRecord parse_record(const std::string& line) {
  const std::vector<std::string> fields = split(line, '\t');
  if (fields.size() != 4) throw ConfigError("transcript record: expected 4 tab-separated fields");
  TranscriptRecord r;
  r.label = fields[0];
  if (!fields[1].empty())
    for (const std::string& s : split(fields[1], ',')) r.indices.push_back(parse_double(s, "index"));
  r.expected_bits = parse_double(fields[2], "expected bits");
  if (fields[3] != "NA") r.realized_bits = static_cast<long long>(parse_double(fields[3], "realized bits"));
  return r;
}

}  // namespace corrlink::protocol
