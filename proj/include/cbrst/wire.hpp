#pragma once

// Bit-exact serialization of cbrst packets. Layout (big-endian multi-octet
// fields), fixed 8 octets followed by the index bitmap:
//
//   octet 0      : version (high nibble) | packet type (low nibble)
//   octet 1      : message id
//   octets 2-3   : n, number of original packets
//   octets 4-7   : message size in bytes
//   octets 8-... : index bitmap, 2^x bits (max(1, 2^x/8) octets);
//                  index i lives in octet i/8 at mask 0x80 >> (i%8)
//   rest         : payload (one encoded part for DATA, decoded-parts bitmap
//                  for FEEDBACK, response descriptor for REQUEST)
//
// See docs/wire.md for the normative description and golden fixtures.

#include <cstring>
#include <optional>
#include <stdexcept>

#include "cbrst/common.hpp"

namespace cbrst {

enum class PacketType : std::uint8_t {
  kData = 0,
  kStop = 1,
  kFeedbackReq = 2,
  kFeedback = 3,
  kRequest = 4,
};

constexpr std::uint8_t kWireVersion = 1;
constexpr std::size_t kIpHeaderLen = 20;
constexpr std::size_t kUdpHeaderLen = 8;
constexpr std::size_t kFixedHeaderLen = 8;

struct WireFormat {
  unsigned x = 6;          // bitmap is 2^x bits; n <= 2^x
  std::size_t mtu = 1500;

  std::size_t max_parts() const { return std::size_t{1} << x; }
  std::size_t bitmap_octets() const { return std::max<std::size_t>(1, (max_parts() + 7) / 8); }
  std::size_t header_octets() const { return kFixedHeaderLen + bitmap_octets(); }
  std::size_t payload_len() const {
    return mtu - kIpHeaderLen - kUdpHeaderLen - header_octets();
  }
  std::size_t max_message_bytes() const { return max_parts() * payload_len(); }
  // Full on-the-wire size of a DATA packet including IP/UDP.
  std::size_t data_packet_size() const { return mtu; }
};

// Fraction of the MTU spent on IP + UDP + cbrst headers.
inline double header_overhead(unsigned x, std::size_t mtu) {
  std::size_t bitmap = std::max<std::size_t>(1, ((std::size_t{1} << x) + 7) / 8);
  return static_cast<double>(kIpHeaderLen + kUdpHeaderLen + kFixedHeaderLen + bitmap) /
         static_cast<double>(mtu);
}

struct CbrstHeader {
  std::uint8_t version = kWireVersion;
  PacketType type = PacketType::kData;
  std::uint8_t message_id = 0;
  std::uint16_t n = 0;
  std::uint32_t message_size = 0;
  IndexBitmap bitmap;  // interpreted over [0, n); empty for control packets
};

enum class ParseError {
  kNone,
  kTruncated,
  kBadVersion,
  kBitmapOutOfRange,
};

struct ParsedPacket {
  CbrstHeader header;
  std::vector<std::uint8_t> payload;
};

inline std::vector<std::uint8_t> serialize(const CbrstHeader& h,
                                           std::span<const std::uint8_t> payload,
                                           const WireFormat& fmt) {
  if (h.n > fmt.max_parts())
    throw std::invalid_argument("serialize: n exceeds 2^x");
  if (h.type == PacketType::kData) {
    bool any = false;
    for (std::size_t i : h.bitmap.indices()) {
      if (i >= h.n) throw std::invalid_argument("serialize: bitmap bit >= n");
      any = true;
    }
    if (!any) throw std::invalid_argument("serialize: DATA with empty bitmap");
  }
  std::vector<std::uint8_t> out(fmt.header_octets() + payload.size(), 0);
  out[0] = static_cast<std::uint8_t>((h.version << 4) |
                                     (static_cast<std::uint8_t>(h.type) & 0x0f));
  out[1] = h.message_id;
  out[2] = static_cast<std::uint8_t>(h.n >> 8);
  out[3] = static_cast<std::uint8_t>(h.n & 0xff);
  out[4] = static_cast<std::uint8_t>(h.message_size >> 24);
  out[5] = static_cast<std::uint8_t>((h.message_size >> 16) & 0xff);
  out[6] = static_cast<std::uint8_t>((h.message_size >> 8) & 0xff);
  out[7] = static_cast<std::uint8_t>(h.message_size & 0xff);
  for (std::size_t i : h.bitmap.indices())
    out[kFixedHeaderLen + (i >> 3)] |= static_cast<std::uint8_t>(0x80u >> (i & 7));
  if (!payload.empty())
    std::memcpy(out.data() + fmt.header_octets(), payload.data(), payload.size());
  return out;
}

inline std::optional<ParsedPacket> parse(std::span<const std::uint8_t> octets,
                                         const WireFormat& fmt,
                                         ParseError* err = nullptr) {
  auto fail = [&](ParseError e) -> std::optional<ParsedPacket> {
    if (err) *err = e;
    return std::nullopt;
  };
  if (octets.size() < fmt.header_octets()) return fail(ParseError::kTruncated);
  if ((octets[0] >> 4) != kWireVersion) return fail(ParseError::kBadVersion);

  ParsedPacket pkt;
  pkt.header.version = octets[0] >> 4;
  pkt.header.type = static_cast<PacketType>(octets[0] & 0x0f);
  pkt.header.message_id = octets[1];
  pkt.header.n = static_cast<std::uint16_t>((octets[2] << 8) | octets[3]);
  pkt.header.message_size =
      (static_cast<std::uint32_t>(octets[4]) << 24) |
      (static_cast<std::uint32_t>(octets[5]) << 16) |
      (static_cast<std::uint32_t>(octets[6]) << 8) | octets[7];
  if (pkt.header.n > fmt.max_parts()) return fail(ParseError::kBitmapOutOfRange);

  pkt.header.bitmap = IndexBitmap(pkt.header.n);
  std::size_t degree = 0;
  for (std::size_t o = 0; o < fmt.bitmap_octets(); ++o) {
    std::uint8_t b = octets[kFixedHeaderLen + o];
    for (int bit = 0; b && bit < 8; ++bit) {
      if (b & (0x80u >> bit)) {
        std::size_t i = o * 8 + static_cast<std::size_t>(bit);
        if (i >= pkt.header.n) return fail(ParseError::kBitmapOutOfRange);
        pkt.header.bitmap.set(i);
        ++degree;
        b = static_cast<std::uint8_t>(b & ~(0x80u >> bit));
      }
    }
  }
  if (pkt.header.type == PacketType::kData && degree == 0)
    return fail(ParseError::kBitmapOutOfRange);

  pkt.payload.assign(octets.begin() + static_cast<std::ptrdiff_t>(fmt.header_octets()),
                     octets.end());
  if (err) *err = ParseError::kNone;
  return pkt;
}

// Packet type from the first octet, without a full parse. Used by channels
// for traffic classification.
inline std::optional<PacketType> peek_type(std::span<const std::uint8_t> octets) {
  if (octets.empty() || (octets[0] >> 4) != kWireVersion) return std::nullopt;
  std::uint8_t t = octets[0] & 0x0f;
  if (t > static_cast<std::uint8_t>(PacketType::kRequest)) return std::nullopt;
  return static_cast<PacketType>(t);
}

}  // namespace cbrst
