#pragma once

// LT-code encoder/decoder over GF(2). Encoded symbols are XORs of d randomly
// chosen message parts; the decoder runs incremental Gaussian elimination
// (reduced row echelon, pivot = lowest index) with a peeling cascade so that
// completion fires on the exact symbol that closes rank n.

#include <cassert>
#include <cmath>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>

#include "cbrst/common.hpp"

namespace cbrst {

constexpr std::size_t kDefaultPartLen = 1460;

class OversizeMessage : public std::length_error {
 public:
  explicit OversizeMessage(const std::string& what) : std::length_error(what) {}
};

// A message split into k equal parts of part_len bytes, last part zero-padded.
struct MessagePayload {
  std::size_t part_len = 0;
  std::size_t message_size = 0;  // original byte length
  std::size_t k = 0;
  std::vector<std::uint8_t> parts;  // k * part_len

  std::span<const std::uint8_t> part(std::size_t i) const {
    return std::span<const std::uint8_t>(parts).subspan(i * part_len, part_len);
  }
};

inline MessagePayload packetize(std::span<const std::uint8_t> bytes,
                                std::size_t part_len,
                                std::size_t max_parts = 0) {
  if (part_len == 0) throw std::invalid_argument("packetize: part_len == 0");
  if (bytes.empty()) throw std::invalid_argument("packetize: empty message");
  std::size_t k = (bytes.size() + part_len - 1) / part_len;
  if (max_parts != 0 && k > max_parts)
    throw OversizeMessage("message of " + std::to_string(bytes.size()) +
                          " bytes exceeds " + std::to_string(max_parts) +
                          " parts of " + std::to_string(part_len));
  MessagePayload msg;
  msg.part_len = part_len;
  msg.message_size = bytes.size();
  msg.k = k;
  msg.parts.assign(k * part_len, 0);
  std::memcpy(msg.parts.data(), bytes.data(), bytes.size());
  return msg;
}

// Degree distributions. FixedD(d) emits the constant min(d,k) while k > d;
// for k <= d a constant degree would make every symbol the XOR of all k
// parts (rank never exceeds 1), so the degree falls back to uniform on
// [1,k], which keeps small messages decodable.
struct DegreeDistribution {
  enum class Kind { kFixed, kRobustSoliton };

  Kind kind = Kind::kFixed;
  unsigned fixed_d = 5;
  double rs_c = 0.1;
  double rs_delta = 0.5;

  static DegreeDistribution Fixed(unsigned d) {
    DegreeDistribution dd;
    dd.kind = Kind::kFixed;
    dd.fixed_d = d;
    return dd;
  }
  static DegreeDistribution RobustSoliton(double c, double delta) {
    DegreeDistribution dd;
    dd.kind = Kind::kRobustSoliton;
    dd.rs_c = c;
    dd.rs_delta = delta;
    return dd;
  }

  // Analytic pmf over degrees 1..k (index 0 -> degree 1).
  std::vector<double> pmf(std::size_t k) const {
    std::vector<double> p(k, 0.0);
    if (kind == Kind::kFixed) {
      if (k > fixed_d) {
        p[fixed_d - 1] = 1.0;
      } else {
        for (std::size_t i = 0; i < k; ++i) p[i] = 1.0 / static_cast<double>(k);
      }
      return p;
    }
    // Robust soliton: ideal soliton rho + spike/tail tau, truncated to [1,k]
    // and renormalized.
    double kk = static_cast<double>(k);
    double s = rs_c * std::log(kk / rs_delta) * std::sqrt(kk);
    std::size_t pivot = 0;
    if (s >= 1.0) pivot = std::min<std::size_t>(k, static_cast<std::size_t>(kk / s));
    for (std::size_t d = 1; d <= k; ++d) {
      double rho = (d == 1) ? 1.0 / kk : 1.0 / (static_cast<double>(d) * (d - 1.0));
      double tau = 0.0;
      if (pivot >= 1) {
        if (d < pivot)
          tau = s / (static_cast<double>(d) * kk);
        else if (d == pivot)
          tau = s * std::log(s / rs_delta) / kk;
      }
      p[d - 1] = rho + tau;
    }
    double z = 0.0;
    for (double v : p) z += v;
    for (double& v : p) v /= z;
    return p;
  }

  unsigned sample(std::size_t k, Rng& rng) const {
    assert(k >= 1);
    if (kind == Kind::kFixed) {
      if (k > fixed_d) return fixed_d;
      return 1 + static_cast<unsigned>(rand_below(rng, k));
    }
    auto p = pmf(k);
    double u = rand_u01(rng);
    double acc = 0.0;
    for (std::size_t d = 1; d <= k; ++d) {
      acc += p[d - 1];
      if (u < acc) return static_cast<unsigned>(d);
    }
    return static_cast<unsigned>(k);
  }
};

struct EncodedSymbol {
  std::uint8_t message_id = 0;
  std::uint16_t n = 0;
  std::uint32_t message_size = 0;
  IndexBitmap index_set;
  std::vector<std::uint8_t> payload;

  unsigned degree() const { return static_cast<unsigned>(index_set.count()); }
};

namespace detail {

// Choose d distinct indices from `pool` (partial Fisher-Yates on a scratch
// copy), OR the selected parts into sym.
inline void fill_symbol(const MessagePayload& msg, std::span<const std::uint32_t> pool,
                        unsigned d, Rng& rng, EncodedSymbol& sym,
                        std::uint64_t* xor_ops) {
  static thread_local std::vector<std::uint32_t> scratch;
  scratch.assign(pool.begin(), pool.end());
  sym.index_set = IndexBitmap(msg.k);
  sym.payload.assign(msg.part_len, 0);
  for (unsigned j = 0; j < d; ++j) {
    std::size_t pick = j + rand_below(rng, scratch.size() - j);
    std::swap(scratch[j], scratch[pick]);
    std::uint32_t idx = scratch[j];
    sym.index_set.set(idx);
    xor_bytes(sym.payload, msg.part(idx));
    if (xor_ops) ++*xor_ops;
  }
}

}  // namespace detail

inline EncodedSymbol encode_symbol(const MessagePayload& msg,
                                   const DegreeDistribution& dist,
                                   std::uint8_t message_id, Rng& rng) {
  EncodedSymbol sym;
  sym.message_id = message_id;
  sym.n = static_cast<std::uint16_t>(msg.k);
  sym.message_size = static_cast<std::uint32_t>(msg.message_size);
  unsigned d = dist.sample(msg.k, rng);
  static thread_local std::vector<std::uint32_t> all;
  all.resize(msg.k);
  for (std::uint32_t i = 0; i < msg.k; ++i) all[i] = i;
  detail::fill_symbol(msg, all, d, rng, sym, nullptr);
  return sym;
}

// Stateful symbol stream for one message. After receiver feedback the
// encoder can be restricted to the still-undecoded parts.
class LtEncoder {
 public:
  LtEncoder(MessagePayload msg, DegreeDistribution dist, std::uint8_t message_id,
            std::uint64_t seed)
      : msg_(std::move(msg)), dist_(dist), message_id_(message_id), rng_(seed) {
    residual_.resize(msg_.k);
    for (std::uint32_t i = 0; i < msg_.k; ++i) residual_[i] = i;
  }

  const MessagePayload& message() const { return msg_; }

  // Restrict encoding to parts not yet decoded at the receiver. An
  // all-decoded bitmap is ignored (STOP must be in flight; keep bursting
  // over the full set).
  void set_decoded(const IndexBitmap& decoded) {
    std::vector<std::uint32_t> rest;
    for (std::uint32_t i = 0; i < msg_.k; ++i)
      if (!decoded.test(i)) rest.push_back(i);
    if (!rest.empty()) residual_ = std::move(rest);
  }

  EncodedSymbol next() {
    EncodedSymbol sym;
    sym.message_id = message_id_;
    sym.n = static_cast<std::uint16_t>(msg_.k);
    sym.message_size = static_cast<std::uint32_t>(msg_.message_size);
    unsigned d = dist_.sample(residual_.size(), rng_);
    detail::fill_symbol(msg_, residual_, d, rng_, sym, &xor_ops_);
    ++generated_;
    return sym;
  }

  std::size_t symbols_generated() const { return generated_; }
  std::uint64_t xor_ops() const { return xor_ops_; }

 private:
  MessagePayload msg_;
  DegreeDistribution dist_;
  std::uint8_t message_id_;
  Rng rng_;
  std::vector<std::uint32_t> residual_;
  std::size_t generated_ = 0;
  std::uint64_t xor_ops_ = 0;
};

// Incremental GF(2) decoder. Rows are kept in reduced row echelon form,
// keyed by pivot (lowest set index); every pivot column is eliminated from
// all other rows, so a degree-1 row IS a decoded part and completion is
// exactly rank == n.
class LtDecoder {
 public:
  enum class PushResult { kProgress, kComplete, kRedundant, kHeaderMismatch };

  LtDecoder(std::size_t n, std::size_t message_size, std::size_t part_len)
      : n_(n), message_size_(message_size), part_len_(part_len),
        rows_(n), decoded_(n) {}

  PushResult push(const EncodedSymbol& sym) {
    if (sym.n != n_ || sym.message_size != message_size_ ||
        sym.payload.size() != part_len_)
      return PushResult::kHeaderMismatch;
    if (complete_) return PushResult::kRedundant;
    ++consumed_;

    IndexBitmap cols = sym.index_set;
    std::vector<std::uint8_t> data = sym.payload;
    // Eliminate every pivot column present. Stored rows carry no pivot
    // columns besides their own, so one ascending pass suffices.
    for (int p = cols.lowest_set(); p >= 0; p = cols.next_set(static_cast<std::size_t>(p) + 1)) {
      auto& row = rows_[static_cast<std::size_t>(p)];
      if (!row) continue;
      cols ^= row->cols;
      xor_bytes(data, row->data);
      ++xor_ops_;
    }
    if (cols.none()) return PushResult::kRedundant;

    int pivot = cols.lowest_set();
    // Back-substitute: clear the new pivot column from every stored row.
    for (std::size_t q = 0; q < n_; ++q) {
      auto& row = rows_[q];
      if (!row || !row->cols.test(static_cast<std::size_t>(pivot))) continue;
      row->cols ^= cols;
      xor_bytes(row->data, data);
      ++xor_ops_;
      if (row->cols.count() == 1) decoded_.set(q);
    }
    rows_[static_cast<std::size_t>(pivot)] = Row{std::move(cols), std::move(data)};
    ++rank_;
    if (rows_[static_cast<std::size_t>(pivot)]->cols.count() == 1)
      decoded_.set(static_cast<std::size_t>(pivot));

    if (rank_ == n_) {
      complete_ = true;
      return PushResult::kComplete;
    }
    return PushResult::kProgress;
  }

  bool complete() const { return complete_; }
  std::size_t rank() const { return rank_; }
  std::size_t n() const { return n_; }
  std::size_t message_size() const { return message_size_; }
  std::size_t part_len() const { return part_len_; }
  const IndexBitmap& decoded() const { return decoded_; }
  std::size_t symbols_consumed() const { return consumed_; }
  std::uint64_t xor_ops() const { return xor_ops_; }

  // Symbols consumed per original packet; valid once complete.
  double coding_rate() const {
    assert(complete_);
    return static_cast<double>(consumed_) / static_cast<double>(n_);
  }

  // De-padded original bytes; valid once complete.
  std::vector<std::uint8_t> message() const {
    assert(complete_);
    std::vector<std::uint8_t> out;
    out.reserve(n_ * part_len_);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto& row = rows_[i];
      assert(row && row->cols.count() == 1);
      out.insert(out.end(), row->data.begin(), row->data.end());
    }
    out.resize(message_size_);
    return out;
  }

 private:
  struct Row {
    IndexBitmap cols;
    std::vector<std::uint8_t> data;
  };

  std::size_t n_, message_size_, part_len_;
  std::vector<std::optional<Row>> rows_;  // indexed by pivot
  IndexBitmap decoded_;
  std::size_t rank_ = 0;
  std::size_t consumed_ = 0;
  bool complete_ = false;
  std::uint64_t xor_ops_ = 0;
};

inline unsigned sample_degree(const DegreeDistribution& dist, std::size_t k, Rng& rng) {
  return dist.sample(k, rng);
}

}  // namespace cbrst
