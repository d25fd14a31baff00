#include <catch2/catch_amalgamated.hpp>

#include "cbrst/wire.hpp"
#include "support/manual_net.hpp"

using namespace cbrst;

namespace {

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xf]);
  }
  return s;
}

}  // namespace

TEST_CASE("golden fixture: DATA header layout", "[wire]") {
  // id=7, n=64, size=93184, bitmap {0,3,17,40,63}; hand-checked against the
  // layout in docs/wire.md octet by octet.
  WireFormat fmt;  // x=6, mtu=1500
  CbrstHeader h;
  h.type = PacketType::kData;
  h.message_id = 7;
  h.n = 64;
  h.message_size = 93184;
  h.bitmap = IndexBitmap(64);
  for (std::size_t i : {0u, 3u, 17u, 40u, 63u}) h.bitmap.set(i);

  std::vector<std::uint8_t> payload{0xde, 0xad, 0xbe, 0xef};
  auto bytes = serialize(h, payload, fmt);
  REQUIRE(bytes.size() == 16 + 4);
  REQUIRE(to_hex(bytes) == "1007004000016c009000400000800001deadbeef");

  auto parsed = parse(bytes, fmt);
  REQUIRE(parsed);
  REQUIRE(parsed->header.type == PacketType::kData);
  REQUIRE(parsed->header.message_id == 7);
  REQUIRE(parsed->header.n == 64);
  REQUIRE(parsed->header.message_size == 93184);
  REQUIRE(parsed->header.bitmap.indices() ==
          std::vector<std::size_t>{0, 3, 17, 40, 63});
  REQUIRE(parsed->payload == payload);
}

TEST_CASE("STOP packet is header only", "[wire]") {
  WireFormat fmt;
  CbrstHeader h;
  h.type = PacketType::kStop;
  h.message_id = 9;
  h.n = 4;
  h.message_size = 5000;
  auto bytes = serialize(h, {}, fmt);
  REQUIRE(bytes.size() == fmt.header_octets());
  auto parsed = parse(bytes, fmt);
  REQUIRE(parsed);
  REQUIRE(parsed->header.type == PacketType::kStop);
  REQUIRE(parsed->payload.empty());
}

TEST_CASE("parse(serialize(h,p)) identity on random headers", "[wire]") {
  Rng rng(101);
  WireFormat fmt;
  for (int i = 0; i < 10000; ++i) {
    CbrstHeader h;
    h.type = static_cast<PacketType>(rand_below(rng, 5));
    h.message_id = static_cast<std::uint8_t>(rng());
    h.n = static_cast<std::uint16_t>(1 + rand_below(rng, fmt.max_parts()));
    h.message_size = static_cast<std::uint32_t>(rng() & 0xffffff);
    h.bitmap = IndexBitmap(h.n);
    if (h.type == PacketType::kData) {
      std::size_t degree = 1 + rand_below(rng, h.n);
      for (std::size_t j = 0; j < degree; ++j)
        h.bitmap.set(rand_below(rng, h.n));
      if (h.bitmap.none()) h.bitmap.set(0);
    }
    auto payload = testnet::random_bytes(rand_below(rng, 64), rng);
    auto bytes = serialize(h, payload, fmt);
    auto parsed = parse(bytes, fmt);
    REQUIRE(parsed);
    REQUIRE(parsed->header.type == h.type);
    REQUIRE(parsed->header.message_id == h.message_id);
    REQUIRE(parsed->header.n == h.n);
    REQUIRE(parsed->header.message_size == h.message_size);
    REQUIRE(parsed->header.bitmap.indices() == h.bitmap.indices());
    REQUIRE(parsed->payload == payload);
  }
}

TEST_CASE("header overhead arithmetic", "[wire]") {
  REQUIRE(header_overhead(9, 1500) == Catch::Approx(100.0 / 1500.0));
  REQUIRE(header_overhead(9, 1500) < 0.07);
  REQUIRE(header_overhead(6, 1500) == Catch::Approx(44.0 / 1500.0));
  // x=0: one-bit bitmap rounds up to a whole octet
  REQUIRE(header_overhead(0, 1500) == Catch::Approx(37.0 / 1500.0));
}

TEST_CASE("max message size at defaults", "[wire]") {
  WireFormat fmt;
  REQUIRE(fmt.payload_len() == 1456);
  REQUIRE(fmt.max_message_bytes() == 93184);
  // within 0.3% of 64 * 1460 = 93440
  REQUIRE(std::abs(93184.0 - 93440.0) / 93440.0 < 0.003);
}

TEST_CASE("parse rejects malformed input", "[wire]") {
  WireFormat fmt;
  CbrstHeader h;
  h.type = PacketType::kData;
  h.message_id = 1;
  h.n = 8;
  h.message_size = 100;
  h.bitmap = IndexBitmap(8);
  h.bitmap.set(2);
  auto good = serialize(h, std::vector<std::uint8_t>(16, 1), fmt);

  ParseError err;

  SECTION("truncated") {
    std::vector<std::uint8_t> cut(good.begin(), good.begin() + 5);
    REQUIRE_FALSE(parse(cut, fmt, &err));
    REQUIRE(err == ParseError::kTruncated);
  }
  SECTION("bad version") {
    auto bad = good;
    bad[0] = static_cast<std::uint8_t>((3 << 4) | (bad[0] & 0x0f));
    REQUIRE_FALSE(parse(bad, fmt, &err));
    REQUIRE(err == ParseError::kBadVersion);
  }
  SECTION("bitmap bit at or past n") {
    auto bad = good;
    bad[8 + 1] |= 0x80;  // index 8 == n
    REQUIRE_FALSE(parse(bad, fmt, &err));
    REQUIRE(err == ParseError::kBitmapOutOfRange);
  }
  SECTION("n exceeding 2^x") {
    auto bad = good;
    bad[2] = 0x40;  // n = 16384
    REQUIRE_FALSE(parse(bad, fmt, &err));
    REQUIRE(err == ParseError::kBitmapOutOfRange);
  }
  SECTION("DATA with empty bitmap") {
    auto bad = good;
    for (std::size_t i = 8; i < 16; ++i) bad[i] = 0;
    REQUIRE_FALSE(parse(bad, fmt, &err));
    REQUIRE(err == ParseError::kBitmapOutOfRange);
  }
  SECTION("serialize rejects invalid headers") {
    CbrstHeader bad = h;
    bad.bitmap.set(9);  // >= n
    REQUIRE_THROWS_AS(serialize(bad, {}, fmt), std::invalid_argument);
    CbrstHeader empty = h;
    empty.bitmap = IndexBitmap(8);
    REQUIRE_THROWS_AS(serialize(empty, {}, fmt), std::invalid_argument);
  }
}

TEST_CASE("peek_type reads the type nibble", "[wire]") {
  WireFormat fmt;
  CbrstHeader h;
  h.type = PacketType::kFeedbackReq;
  h.message_id = 1;
  h.n = 4;
  h.message_size = 10;
  auto bytes = serialize(h, {}, fmt);
  REQUIRE(peek_type(bytes) == PacketType::kFeedbackReq);
  REQUIRE_FALSE(peek_type({}));
  std::vector<std::uint8_t> junk{0xff};
  REQUIRE_FALSE(peek_type(junk));
}
