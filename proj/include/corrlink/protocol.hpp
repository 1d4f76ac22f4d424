#pragma once

// Alice's side of the one-way protocols: index selection, quantizers, bit
// allocation, and the ledger that charges every transmitted message.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "corrlink/linalg.hpp"
#include "corrlink/rng.hpp"
#include "corrlink/sources.hpp"

namespace corrlink::protocol {

enum class LedgerMode {
  ExpectedOnly,  // entropy accounting
  Realized,      // actual codeword lengths (Golomb for geometric indices)
};

struct LedgerEntry {
  std::string label;
  double expected_bits = 0.0;
  std::optional<long long> realized_bits;
};

class BitLedger {
 public:
  explicit BitLedger(LedgerMode mode = LedgerMode::ExpectedOnly) : mode_(mode) {}

  /// Records one message. In Realized mode the realized length is required.
  void charge(std::string label, double expected_bits, std::optional<long long> realized_bits = std::nullopt);

  LedgerMode mode() const noexcept { return mode_; }
  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }
  /// Sum of expected bits.
  double total() const;
  /// Sum of realized bits; empty in ExpectedOnly mode.
  std::optional<long long> total_realized() const;

 private:
  LedgerMode mode_;
  std::vector<LedgerEntry> entries_;
};

struct Transcript {
  std::vector<double> indices;  // 1-based sample indices; doubles since they can exceed 2^64
  std::vector<double> quantized_values;
  BitLedger ledger;
  double samples_consumed = 0.0;
};

/// Golomb code for geometric indices with parameter m = ceil(-1 / log2(1 - p)).
/// m is kept as a double: for p near 2^-80 it does not fit in 64 bits.
class GolombCode {
 public:
  explicit GolombCode(double p);

  double m() const noexcept { return m_; }
  double crossing_probability() const noexcept { return p_; }
  /// Codeword length for n = q m + r, 0 <= r < m.
  long long length(std::uint64_t q, double r) const;
  /// Codeword length for n >= 0.
  long long length(double n) const;
  /// Codeword as a '0'/'1' string; needs m < 2^62.
  std::string encode(std::uint64_t n) const;

 private:
  double p_;
  double m_;
  int b_;
  double cutoff_;  // remainders below this use b - 1 bits
};

/// A 1-based geometric index J with success probability p, drawn through the
/// Golomb decomposition J - 1 = q m + r so that it stays exact for tiny p.
struct GeometricDraw {
  double index = 1.0;
  std::uint64_t q = 0;
  double r = 0.0;
};

GeometricDraw sample_geometric_index(const GolombCode& code, Rng& rng);

/// Default scan limit 2^10 * ceil(1/p).
double default_wait_cap(double p);

/// Charges one geometric index to the ledger.
void charge_index(BitLedger& ledger, const std::string& label, const GolombCode& code, double gap);

struct ScalarSelection {
  Transcript transcript;
  double x = 0.0;           // X_J
  std::vector<double> y;    // Y_J
};

/// Scans n = 2^k samples and sends the argmax index with k fixed-length bits.
ScalarSelection select_max_index(sources::PairStream& stream, double n, LedgerMode mode = LedgerMode::ExpectedOnly);

/// Sends the first index with X > t. p is the crossing probability Pr(X > t)
/// used for the ledger. Throws WaitCapExceeded after cap samples.
ScalarSelection select_threshold_index(sources::PairStream& stream, double t, double p, double cap,
                                       LedgerMode mode = LedgerMode::ExpectedOnly);

struct StoppingSetParams {
  double a = 0.0;
  double b = 0.0;
  std::size_t d = 1;
  double k_l = 0.0;  // expected bits per index
  int k_q = 1;       // bits per quantized matrix entry

  /// 2 Q(a) (1 - 2 Q(b))^(d-1).
  double crossing_probability() const;
  /// Throws ConfigError unless a > d(b+1), a > (d-1)b, k_q >= 1.
  void validate() const;
};

/// Params from explicit (a, b, d, k_q); k_l is set to h_g of the crossing probability.
StoppingSetParams make_stopping_set_params(double a, double b, std::size_t d, int k_q);

struct StoppingSelection {
  Transcript transcript;
  linalg::Matrix w;       // column l is the whitened sample at index J_l
  std::vector<double> y;  // Y at J_1..J_d
};

/// Scans a whitened stream for the d stopping sets in order.
StoppingSelection select_stopping_set_indices(sources::PairStream& whitened, const StoppingSetParams& params,
                                              double cap, LedgerMode mode = LedgerMode::ExpectedOnly);

/// Draws W_J directly from its conditional law (no scanning) and charges the
/// ledger as the scan would.
StoppingSelection draw_stopping_set(const StoppingSetParams& params, Rng& rng,
                                    LedgerMode mode = LedgerMode::ExpectedOnly);

struct QuantizedMatrix {
  linalg::Matrix w_hat;
  double bits = 0.0;
};

/// Diagonal: sign kept, |w| clamped to [a, sqrt(3) a], the two segments
/// +-[a, c] share 2^k_q cells. Off-diagonal: [-b, b] in 2^k_q cells.
/// Midpoint reconstruction throughout.
QuantizedMatrix quantize_W_matrix(const linalg::Matrix& w, const StoppingSetParams& params);

struct QuantizedValue {
  double x_hat = 0.0;
  double bits = 0.0;
};

/// [t, u] in 2^k_q cells with midpoint reconstruction; x > u maps to u.
/// Throws ContractError for x <= t.
QuantizedValue quantize_pareto_value(double x, double t, double u, int k_q);

/// Bit split for the X-vector scheme. Integer k_q = max(1, floor(sqrt(4 k_l0 / d^3)))
/// with k_l0 = (sqrt(k+1)-1)^2 / d; then k_l = (k - d^2 k_q) / d so the
/// budget is met exactly. Throws ConfigError naming the minimal feasible k.
StoppingSetParams allocate_bits_xvec(double k, std::size_t d, double b0 = 0.3);

struct ParetoAllocation {
  double k_l = 0.0;
  int k_q = 0;
  double t = 0.0;
  double u = 0.0;
  double crossing_probability = 0.0;  // Pr(X > t)
};

/// k_q = floor(k/(alpha-1)), k_l = k - k_q, t from h_g(Pr(X > t)) = k_l,
/// u = t^(alpha/(alpha-2)).
ParetoAllocation allocate_bits_pareto(double k, double alpha);

/// `label<TAB>J1,J2,...<TAB>expected_bits<TAB>realized_bits|NA`
std::string to_record(const std::string& label, const Transcript& transcript);

struct TranscriptRecord {
  std::string label;
  std::vector<double> indices;
  double expected_bits = 0.0;
  std::optional<long long> realized_bits;
};

TranscriptRecord parse_record(const std::string& line);

}  // namespace corrlink::protocol
