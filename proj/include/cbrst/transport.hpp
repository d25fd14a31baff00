#pragma once

// Burst-until-received sender/receiver over an abstract multipath datagram
// channel. The sender paces rounds of one fresh encoded symbol per path and
// stops on STOP; the receiver feeds per-message decoders, STOPs on
// completion (and again for every DATA after that), answers FEEDBACK_REQ
// with its decoded-parts bitmap, and expires idle decoders.
//
// Sessions and endpoints are single-owner state machines; they can be driven
// by a real clock (cbrst_send / poll) or event-by-event from a simulator.

#include <map>
#include <memory>
#include <utility>

#include "cbrst/common.hpp"
#include "cbrst/ltcodec.hpp"
#include "cbrst/wire.hpp"

namespace cbrst {

struct Datagram {
  std::vector<std::uint8_t> bytes;
  std::uint32_t path = 0;
  // Reply-to handle (exact sender address). With port pools this varies per
  // packet by design.
  std::uint64_t peer = 0;
  // Stable sender identity (IP / host id) used to key per-message decoders.
  std::uint64_t source = 0;
};

class MultipathChannel {
 public:
  virtual ~MultipathChannel() = default;

  virtual std::uint32_t path_count() const = 0;
  // Paths available toward a specific peer (simulated topologies may have
  // fewer paths to same-rack destinations).
  virtual std::uint32_t path_count_to(std::uint64_t /*peer*/) const {
    return path_count();
  }
  // Best-effort, non-blocking. peer == 0 means the channel's default remote.
  virtual void send(std::uint32_t path, std::span<const std::uint8_t> bytes,
                    std::uint64_t peer) = 0;
  // Non-blocking; nullopt when nothing is pending.
  virtual std::optional<Datagram> receive() = 0;
  virtual Nanos now() const = 0;
  // Real channels sleep; simulated channels are event-driven and never get
  // called here.
  virtual void wait_until(Nanos t) = 0;
};

struct TransportConfig {
  WireFormat wire{};
  DegreeDistribution degree{};
  double rate_share = 1.0;        // r in (0,1]
  double link_capacity_bps = 1e9;
  Nanos timeout = 10 * kMilli;    // transmission timeout t
  std::size_t feedback_threshold_factor = 4;  // request feedback each factor*k symbols
  Nanos decoder_idle_timeout = 10 * kMilli;
};

enum class SendOutcome { kSuccess, kTimeout, kOversize, kIoError };

inline Nanos compute_inter_round_delay(double rate_share, std::uint32_t num_paths,
                                       std::size_t pkt_size, double link_capacity_bps) {
  return static_cast<Nanos>(std::llround(
      static_cast<double>(num_paths) * static_cast<double>(pkt_size) * 8.0e9 /
      (rate_share * link_capacity_bps)));
}

class SenderSession {
 public:
  enum class State { kBursting, kDone, kFailed };

  SenderSession(const TransportConfig& cfg, std::span<const std::uint8_t> message,
                std::uint8_t message_id, std::vector<std::uint32_t> path_ids,
                std::uint64_t peer, std::uint64_t seed, Nanos start)
      : cfg_(cfg),
        message_id_(message_id),
        paths_(std::move(path_ids)),
        peer_(peer),
        encoder_(packetize(message, cfg.wire.payload_len(), cfg.wire.max_parts()),
                 cfg.degree, message_id, seed),
        start_(start) {
    if (paths_.empty()) paths_.push_back(0);
    delay_ = compute_inter_round_delay(cfg.rate_share,
                                       static_cast<std::uint32_t>(paths_.size()),
                                       cfg.wire.data_packet_size(),
                                       cfg.link_capacity_bps);
    round_due_ = start_ + delay_;
    deadline_ = start_ + cfg.timeout;
    feedback_at_ = cfg.feedback_threshold_factor * encoder_.message().k;
  }

  State state() const { return state_; }
  SendOutcome outcome() const {
    return state_ == State::kDone ? SendOutcome::kSuccess : SendOutcome::kTimeout;
  }
  Nanos next_tick() const { return std::min(round_due_, deadline_); }
  Nanos inter_round_delay() const { return delay_; }
  std::size_t symbols_sent() const { return symbols_sent_; }
  std::size_t rounds() const { return rounds_; }
  std::uint8_t message_id() const { return message_id_; }
  std::size_t k() const { return encoder_.message().k; }
  const std::vector<Nanos>& round_starts() const { return round_starts_; }

  // Run one round if due (checks the timeout first, per the send loop).
  void on_tick(MultipathChannel& ch) {
    if (state_ != State::kBursting) return;
    Nanos now = ch.now();
    if (now >= deadline_) {
      state_ = State::kFailed;
      return;
    }
    if (now < round_due_) return;
    round_starts_.push_back(now);
    for (std::uint32_t p : paths_) {
      EncodedSymbol sym = encoder_.next();
      CbrstHeader h;
      h.type = PacketType::kData;
      h.message_id = message_id_;
      h.n = sym.n;
      h.message_size = sym.message_size;
      h.bitmap = sym.index_set;
      ch.send(p, serialize(h, sym.payload, cfg_.wire), peer_);
      ++symbols_sent_;
      if (ch.now() >= deadline_) {
        state_ = State::kFailed;
        return;
      }
    }
    ++rounds_;
    round_due_ += delay_;
    if (symbols_sent_ >= feedback_at_) {
      send_control(ch, PacketType::kFeedbackReq);
      feedback_at_ += cfg_.feedback_threshold_factor * encoder_.message().k;
    }
  }

  void on_packet(std::span<const std::uint8_t> bytes, MultipathChannel&) {
    if (state_ != State::kBursting) return;
    ParseError err;
    auto pkt = parse(bytes, cfg_.wire, &err);
    if (!pkt || pkt->header.message_id != message_id_) return;
    switch (pkt->header.type) {
      case PacketType::kStop:
        state_ = State::kDone;
        break;
      case PacketType::kFeedback: {
        IndexBitmap decoded(encoder_.message().k);
        for (std::size_t i = 0; i < decoded.size(); ++i) {
          std::size_t o = i >> 3;
          if (o < pkt->payload.size() && (pkt->payload[o] & (0x80u >> (i & 7))))
            decoded.set(i);
        }
        encoder_.set_decoded(decoded);
        break;
      }
      default:
        break;
    }
  }

 private:
  void send_control(MultipathChannel& ch, PacketType type) {
    CbrstHeader h;
    h.type = type;
    h.message_id = message_id_;
    h.n = static_cast<std::uint16_t>(encoder_.message().k);
    h.message_size = static_cast<std::uint32_t>(encoder_.message().message_size);
    auto bytes = serialize(h, {}, cfg_.wire);
    for (std::uint32_t p : paths_) ch.send(p, bytes, peer_);
  }

  TransportConfig cfg_;
  std::uint8_t message_id_;
  std::vector<std::uint32_t> paths_;
  std::uint64_t peer_;
  LtEncoder encoder_;
  Nanos start_, delay_, round_due_, deadline_;
  std::size_t feedback_at_;
  State state_ = State::kBursting;
  std::size_t symbols_sent_ = 0;
  std::size_t rounds_ = 0;
  std::vector<Nanos> round_starts_;
};

struct SendResult {
  SendOutcome outcome;
  std::size_t symbols_sent = 0;
  std::size_t rounds = 0;
  Nanos elapsed = 0;
};

// Blocking driver for real channels: drain inbound, sleep to the next round,
// repeat until STOP or timeout. Oversized messages fail immediately.
inline SendResult cbrst_send(MultipathChannel& ch, const TransportConfig& cfg,
                             std::span<const std::uint8_t> message,
                             std::uint8_t message_id, std::uint64_t peer = 0,
                             std::uint64_t seed = 0x9e3779b97f4a7c15ull,
                             std::vector<std::uint32_t> path_ids = {}) {
  Nanos start = ch.now();
  if (message.empty() || message.size() > cfg.wire.max_message_bytes())
    return {SendOutcome::kOversize, 0, 0, 0};
  if (path_ids.empty())
    for (std::uint32_t p = 0; p < ch.path_count(); ++p) path_ids.push_back(p);
  try {
    SenderSession s(cfg, message, message_id, std::move(path_ids), peer, seed, start);
    while (s.state() == SenderSession::State::kBursting) {
      while (auto d = ch.receive()) {
        s.on_packet(d->bytes, ch);
        if (s.state() != SenderSession::State::kBursting) break;
      }
      if (s.state() != SenderSession::State::kBursting) break;
      ch.wait_until(s.next_tick());
      while (auto d = ch.receive()) {
        s.on_packet(d->bytes, ch);
        if (s.state() != SenderSession::State::kBursting) break;
      }
      if (s.state() != SenderSession::State::kBursting) break;
      s.on_tick(ch);
    }
    return {s.outcome(), s.symbols_sent(), s.rounds(), ch.now() - start};
  } catch (const OversizeMessage&) {
    return {SendOutcome::kOversize, 0, 0, 0};
  } catch (const std::system_error&) {
    return {SendOutcome::kIoError, 0, 0, ch.now() - start};
  }
}

struct DeliveredMessage {
  std::uint64_t peer = 0;
  std::uint8_t message_id = 0;
  std::vector<std::uint8_t> bytes;
  Nanos completed_at = 0;
  std::size_t symbols_consumed = 0;
  std::uint16_t n = 0;
};

struct RequestMessage {
  std::uint64_t peer = 0;
  std::uint8_t message_id = 0;
  std::vector<std::uint8_t> payload;
  Nanos at = 0;
};

struct PollResult {
  std::vector<DeliveredMessage> deliveries;
  std::vector<RequestMessage> requests;
};

class ReceiverEndpoint {
 public:
  explicit ReceiverEndpoint(const TransportConfig& cfg) : cfg_(cfg) {}

  // Drain the channel, then expire idle decoders.
  PollResult poll(MultipathChannel& ch) {
    PollResult out;
    while (auto d = ch.receive()) on_datagram(*d, ch, out);
    expire_idle(ch.now());
    return out;
  }

  void on_datagram(const Datagram& dg, MultipathChannel& ch, PollResult& out) {
    ParseError err;
    auto pkt = parse(dg.bytes, cfg_.wire, &err);
    if (!pkt) {
      ++malformed_;
      return;
    }
    Nanos now = ch.now();
    std::uint64_t source = dg.source != 0 ? dg.source : dg.peer;
    Key key{source, pkt->header.message_id};
    switch (pkt->header.type) {
      case PacketType::kData:
        on_data(key, *pkt, dg, ch, now, out);
        break;
      case PacketType::kFeedbackReq:
        on_feedback_req(key, ch, dg.peer);
        break;
      case PacketType::kRequest:
        out.requests.push_back({dg.peer, pkt->header.message_id,
                                std::move(pkt->payload), now});
        break;
      default:
        ++stray_;
        break;
    }
  }

  void expire_idle(Nanos now) {
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (now - it->second.last_arrival >= cfg_.decoder_idle_timeout)
        it = entries_.erase(it);
      else
        ++it;
    }
  }

  std::size_t active_decoders() const {
    std::size_t c = 0;
    for (const auto& [k, e] : entries_)
      if (e.decoder) ++c;
    return c;
  }
  std::size_t malformed() const { return malformed_; }
  std::size_t stray() const { return stray_; }
  std::size_t stops_sent() const { return stops_sent_; }

 private:
  using Key = std::pair<std::uint64_t, std::uint8_t>;

  struct Entry {
    std::optional<LtDecoder> decoder;  // nullopt once completed (tombstone)
    std::uint16_t n = 0;
    std::uint32_t message_size = 0;
    Nanos last_arrival = 0;
    std::uint64_t reply_to = 0;  // latest sender address seen
  };

  void on_data(const Key& key, ParsedPacket& pkt, const Datagram& dg,
               MultipathChannel& ch, Nanos now, PollResult& out) {
    auto it = entries_.find(key);
    if (it != entries_.end() && !it->second.decoder) {
      // Completed: every further DATA triggers another STOP.
      it->second.last_arrival = now;
      it->second.reply_to = dg.peer;
      send_stop(ch, key, it->second);
      return;
    }
    if (pkt.header.n == 0) {
      ++malformed_;
      return;
    }
    if (it == entries_.end()) {
      Entry e;
      e.decoder.emplace(pkt.header.n, pkt.header.message_size,
                        cfg_.wire.payload_len());
      e.n = pkt.header.n;
      e.message_size = pkt.header.message_size;
      e.last_arrival = now;
      it = entries_.emplace(key, std::move(e)).first;
    }
    Entry& e = it->second;
    e.reply_to = dg.peer;
    EncodedSymbol sym;
    sym.message_id = key.second;
    sym.n = pkt.header.n;
    sym.message_size = pkt.header.message_size;
    sym.index_set = std::move(pkt.header.bitmap);
    sym.payload = std::move(pkt.payload);
    switch (e.decoder->push(sym)) {
      case LtDecoder::PushResult::kComplete: {
        DeliveredMessage m;
        m.peer = key.first;
        m.message_id = key.second;
        m.bytes = e.decoder->message();
        m.completed_at = now;
        m.symbols_consumed = e.decoder->symbols_consumed();
        m.n = e.n;
        out.deliveries.push_back(std::move(m));
        e.decoder.reset();  // tombstone
        e.last_arrival = now;
        send_stop(ch, key, e);
        break;
      }
      case LtDecoder::PushResult::kHeaderMismatch:
        ++malformed_;
        break;
      default:
        e.last_arrival = now;
        break;
    }
  }

  void on_feedback_req(const Key& key, MultipathChannel& ch, std::uint64_t peer) {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      ++stray_;
      return;
    }
    const Entry& e = it->second;
    CbrstHeader h;
    h.type = PacketType::kFeedback;
    h.message_id = key.second;
    h.n = e.n;
    h.message_size = e.message_size;
    std::vector<std::uint8_t> bits(cfg_.wire.bitmap_octets(), 0);
    if (e.decoder) {
      for (std::size_t i : e.decoder->decoded().indices())
        bits[i >> 3] |= static_cast<std::uint8_t>(0x80u >> (i & 7));
    } else {
      for (std::size_t i = 0; i < e.n; ++i)
        bits[i >> 3] |= static_cast<std::uint8_t>(0x80u >> (i & 7));
    }
    auto bytes = serialize(h, bits, cfg_.wire);
    for (std::uint32_t p = 0; p < ch.path_count_to(peer); ++p)
      ch.send(p, bytes, peer);
  }

  void send_stop(MultipathChannel& ch, const Key& key, const Entry& e) {
    CbrstHeader h;
    h.type = PacketType::kStop;
    h.message_id = key.second;
    h.n = e.n;
    h.message_size = e.message_size;
    auto bytes = serialize(h, {}, cfg_.wire);
    for (std::uint32_t p = 0; p < ch.path_count_to(e.reply_to); ++p)
      ch.send(p, bytes, e.reply_to);
    ++stops_sent_;
  }

  TransportConfig cfg_;
  std::map<Key, Entry> entries_;
  std::size_t malformed_ = 0;
  std::size_t stray_ = 0;
  std::size_t stops_sent_ = 0;
};

// Decorator that drops a fraction of outbound DATA packets. Control packets
// pass through unless drop_control is set.
class LossyChannel : public MultipathChannel {
 public:
  LossyChannel(MultipathChannel& inner, double drop_prob, std::uint64_t seed,
               bool drop_control = false)
      : inner_(inner), drop_prob_(drop_prob), rng_(seed), drop_control_(drop_control) {}

  std::uint32_t path_count() const override { return inner_.path_count(); }
  std::uint32_t path_count_to(std::uint64_t peer) const override {
    return inner_.path_count_to(peer);
  }
  void send(std::uint32_t path, std::span<const std::uint8_t> bytes,
            std::uint64_t peer) override {
    auto t = peek_type(bytes);
    bool droppable = drop_control_ || (t && *t == PacketType::kData);
    if (droppable && rand_u01(rng_) < drop_prob_) {
      ++dropped_;
      return;
    }
    inner_.send(path, bytes, peer);
  }
  std::optional<Datagram> receive() override { return inner_.receive(); }
  Nanos now() const override { return inner_.now(); }
  void wait_until(Nanos t) override { inner_.wait_until(t); }

  std::size_t dropped() const { return dropped_; }

 private:
  MultipathChannel& inner_;
  double drop_prob_;
  Rng rng_;
  bool drop_control_;
  std::size_t dropped_ = 0;
};

}  // namespace cbrst
