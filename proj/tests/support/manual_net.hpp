#pragma once

// In-memory two-endpoint "network" with a manual clock for driving transport
// state machines deterministically in unit tests. Each direction has
// per-path delivery probability and delay; wait_until advances virtual time
// and flushes due deliveries, so cbrst_send runs unmodified single-threaded.

#include <deque>
#include <functional>
#include <map>

#include "cbrst/transport.hpp"

namespace testnet {

class ManualNet;

class ManualEndpoint : public cbrst::MultipathChannel {
 public:
  ManualEndpoint(ManualNet& net, std::uint32_t paths) : net_(net), paths_(paths) {}

  std::uint32_t path_count() const override { return paths_; }
  void send(std::uint32_t path, std::span<const std::uint8_t> bytes,
            std::uint64_t peer) override;
  std::optional<cbrst::Datagram> receive() override {
    if (inbox_.empty()) return std::nullopt;
    auto d = std::move(inbox_.front());
    inbox_.pop_front();
    return d;
  }
  cbrst::Nanos now() const override;
  void wait_until(cbrst::Nanos t) override;

  std::deque<cbrst::Datagram> inbox_;
  ManualNet& net_;
  std::uint32_t paths_;
  ManualEndpoint* peer_ = nullptr;
  std::vector<double> deliver_prob_;  // per path; empty = always deliver
  cbrst::Nanos delay_ = 0;
  std::size_t sent_ = 0;
  std::vector<std::size_t> sent_per_path_;
};

class ManualNet {
 public:
  explicit ManualNet(std::uint64_t seed, std::uint32_t a_paths, std::uint32_t b_paths,
                     cbrst::Nanos delay = 0)
      : rng_(seed), a_(*this, a_paths), b_(*this, b_paths) {
    a_.peer_ = &b_;
    b_.peer_ = &a_;
    a_.delay_ = delay;
    b_.delay_ = delay;
    a_.sent_per_path_.resize(a_paths, 0);
    b_.sent_per_path_.resize(b_paths, 0);
  }

  ManualEndpoint& a() { return a_; }
  ManualEndpoint& b() { return b_; }
  cbrst::Nanos now() const { return clock_; }
  cbrst::Rng& rng() { return rng_; }

  // Invoked after each delivery into b's inbox (typically: poll a receiver).
  std::function<void()> on_deliver_b;

  void submit(ManualEndpoint& from, std::uint32_t path,
              std::span<const std::uint8_t> bytes, std::uint64_t peer) {
    from.sent_++;
    if (path < from.sent_per_path_.size()) from.sent_per_path_[path]++;
    if (!from.deliver_prob_.empty()) {
      double p = from.deliver_prob_[path % from.deliver_prob_.size()];
      if (cbrst::rand_u01(rng_) >= p) return;
    }
    cbrst::Datagram d;
    d.bytes.assign(bytes.begin(), bytes.end());
    d.path = path;
    d.peer = peer == 0 ? 1 : peer;
    d.source = d.peer;
    wire_.emplace(std::pair{clock_ + from.delay_, seq_++},
                  Pending{&from, std::move(d)});
  }

  void advance_to(cbrst::Nanos t) {
    while (!wire_.empty() && wire_.begin()->first.first <= t) {
      auto node = wire_.extract(wire_.begin());
      clock_ = node.key().first;
      Pending& p = node.mapped();
      ManualEndpoint* dst = p.from == &a_ ? &b_ : &a_;
      dst->inbox_.push_back(std::move(p.dgram));
      if (dst == &b_ && on_deliver_b) on_deliver_b();
    }
    if (t > clock_) clock_ = t;
  }

 private:
  struct Pending {
    ManualEndpoint* from;
    cbrst::Datagram dgram;
  };

  cbrst::Rng rng_;
  cbrst::Nanos clock_ = 0;
  std::uint64_t seq_ = 0;
  std::map<std::pair<cbrst::Nanos, std::uint64_t>, Pending> wire_;
  ManualEndpoint a_, b_;
};

inline void ManualEndpoint::send(std::uint32_t path, std::span<const std::uint8_t> bytes,
                                 std::uint64_t peer) {
  net_.submit(*this, path, bytes, peer);
}
inline cbrst::Nanos ManualEndpoint::now() const { return net_.now(); }
inline void ManualEndpoint::wait_until(cbrst::Nanos t) { net_.advance_to(t); }

inline std::vector<std::uint8_t> random_bytes(std::size_t n, cbrst::Rng& rng) {
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng());
  return v;
}

}  // namespace testnet
