#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogmin/codec.hpp"
#include "support.hpp"

using namespace cogmin;

namespace {

Errc decode_error(ByteView b) {
  try {
    decode_packet(b);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode accepted the input");
  return Errc::Io;
}

MinPacket minimal_interest() {
  MinPacket p;
  p.identifiers = {Identifier::content("/a")};
  return p;
}

}  // namespace

TEST_CASE("length prefixes use the shortest form") {
  auto len = [](std::uint64_t n) {
    Bytes out;
    tlv::write_length(out, n);
    return out;
  };
  CHECK(len(0) == Bytes{0x00});
  CHECK(len(252) == Bytes{0xFC});
  CHECK(len(253) == Bytes{0xFD, 0x00, 0xFD});
  CHECK(len(0xFFFF) == Bytes{0xFD, 0xFF, 0xFF});
  CHECK(len(0x10000) == Bytes{0xFE, 0x00, 0x01, 0x00, 0x00});
  CHECK(len(0x100000000ull) == Bytes{0xFF, 0, 0, 0, 1, 0, 0, 0, 0});
}

TEST_CASE("minimal interest matches the hand-assembled encoding") {
  // identifier area: 0x20 { 0x21 [02] 0x22 "a" }
  Bytes id_elem{0x20, 0x06, 0x21, 0x01, 0x02, 0x22, 0x01, 'a'};
  Bytes id_area{0x10, 0x08};
  id_area.insert(id_area.end(), id_elem.begin(), id_elem.end());
  Bytes ro{0x12, 0x14, 0x40, 0x08, 0, 0, 0, 0, 0, 0, 0, 0, 0x43, 0x08, 0, 0, 0, 0, 0, 0, 0, 0};
  Bytes va{0x13, 0x05, 0x50, 0x00, 0x51, 0x01, 0x40};
  Bytes body;
  for (const auto* part : {&id_area, &ro, &va}) body.insert(body.end(), part->begin(), part->end());
  Bytes expected{0x05, static_cast<std::uint8_t>(body.size())};
  expected.insert(expected.end(), body.begin(), body.end());

  auto wire = encode_packet(minimal_interest());
  CHECK(wire.front() == 0x05);
  CHECK(wire == expected);
  CHECK(decode_packet(wire) == minimal_interest());
}

TEST_CASE("encoder rejects malformed packets") {
  MinPacket p = minimal_interest();
  p.identifiers.clear();
  CHECK_THROWS_AS(encode_packet(p), Error);

  MinPacket data = minimal_interest();
  data.kind = PacketKind::Data;
  try {
    encode_packet(data);
    FAIL("unsigned Data encoded");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvariantViolation);
  }

  MinPacket pass_only = minimal_interest();
  pass_only.readonly.cyber_pass = Digest{};
  CHECK_THROWS_AS(encode_packet(pass_only), Error);

  MinPacket odd_alg = minimal_interest();
  odd_alg.signature = SignatureBlock{0x02, {}, Bytes(64), {}};
  try {
    encode_packet(odd_alg);
    FAIL("unknown algorithm encoded");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownAlgorithm);
  }
}

TEST_CASE("decoder errors") {
  auto wire = encode_packet(minimal_interest());

  CHECK(decode_error({}) == Errc::TruncatedInput);

  Bytes trailing = wire;
  trailing.push_back(0x00);
  CHECK(decode_error(trailing) == Errc::LengthMismatch);

  Bytes cut(wire.begin(), wire.end() - 1);
  CHECK(decode_error(cut) == Errc::TruncatedInput);

  Bytes unknown_kind = wire;
  unknown_kind[0] = 0x09;
  CHECK(decode_error(unknown_kind) == Errc::UnknownCriticalType);

  // Same packet with the outer length in the 2-octet form.
  Bytes long_form{0x05, 0xFD, 0x00, wire[1]};
  long_form.insert(long_form.end(), wire.begin() + 2, wire.end());
  CHECK(decode_error(long_form) == Errc::NonCanonicalEncoding);
}

TEST_CASE("unknown critical element inside an area is rejected") {
  auto p = minimal_interest();
  auto wire = encode_packet(p);
  // Rewrite the payload element type (0x50) to an unassigned critical code.
  auto at = std::find(wire.begin() + 2, wire.end(), std::uint8_t{0x50});
  REQUIRE(at != wire.end());
  *at = 0x5F;
  CHECK(decode_error(wire) == Errc::UnknownCriticalType);
}

TEST_CASE("non-critical extensions survive a round trip") {
  auto p = minimal_interest();
  p.readonly.extensions = {{0x90, {1, 2, 3}}};
  p.variable.extensions = {{0xFE, {}}, {0x80, Bytes(300, 7)}};
  p.extensions = {{0xC1, {9}}};
  auto wire = encode_packet(p);
  auto back = decode_packet(wire);
  CHECK(back == p);
  CHECK(encode_packet(back) == wire);
}

TEST_CASE("extensions must use non-critical codes") {
  auto p = minimal_interest();
  p.variable.extensions = {{0x55, {1}}};
  CHECK_THROWS_AS(encode_packet(p), Error);
}

TEST_CASE("generated packets round-trip") {
  std::mt19937_64 rng(0xC0DEC);
  for (int i = 0; i < 3000; ++i) {
    auto p = testsupport::random_packet(rng);
    auto wire = encode_packet(p);
    auto back = decode_packet(wire);
    REQUIRE(back == p);
    REQUIRE(encode_packet(back) == wire);
  }
}

TEST_CASE("mutated inputs never crash the decoder") {
  std::mt19937_64 rng(0xF022);
  std::vector<Bytes> corpus;
  for (int i = 0; i < 64; ++i) corpus.push_back(encode_packet(testsupport::random_packet(rng)));
  for (int i = 0; i < 20000; ++i) {
    auto input = testsupport::fuzz_input(rng, corpus);
    // Exact-size heap copy so sanitizers catch any over-read.
    auto heap = std::make_unique<std::uint8_t[]>(input.size() + 1);
    std::copy(input.begin(), input.end(), heap.get());
    try {
      auto p = decode_packet(ByteView(heap.get(), input.size()));
      REQUIRE(encode_packet(p) == input);
    } catch (const Error&) {
    }
  }
}

TEST_CASE("signed portion ignores in-transit fields") {
  std::mt19937_64 rng(5);
  auto p = testsupport::random_packet(rng);
  auto q = p;
  q.readonly.timestamp += 99;
  q.readonly.cyber_visa = Digest{1};
  q.readonly.cyber_pass = Digest{2};
  q.variable.hop_limit ^= 0xFF;
  CHECK(signed_portion(p) == signed_portion(q));
  CHECK(packet_digest(p) == packet_digest(q));
  q.readonly.nonce[0] ^= 1;
  CHECK(packet_digest(p) != packet_digest(q));
}

TEST_CASE("identifier elements round-trip") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 500; ++i) {
    auto id = testsupport::random_identifier(rng);
    auto wire = encode_identifier(id);
    REQUIRE(wire.front() == tlv::kIdentifier);
    tlv::Reader r(wire);
    auto e = r.next();
    CHECK(decode_identifier(e.value) == id);
  }
}
