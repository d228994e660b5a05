#pragma once

#include "cogmin/common.hpp"

#include <array>

namespace cogmin::crypto {

Digest sha256(ByteView data);
Digest sha256(std::initializer_list<ByteView> parts);

using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;
using Seed = std::array<std::uint8_t, 32>;

/// Ed25519 secret key. The 64-octet expanded form is wiped on destruction.
class SecretKey {
 public:
  SecretKey() = default;
  explicit SecretKey(const Seed& seed);
  SecretKey(const SecretKey&) = default;
  SecretKey& operator=(const SecretKey&) = default;
  ~SecretKey();

  const PublicKey& public_key() const noexcept { return public_; }
  const Seed& seed() const noexcept { return seed_; }
  Signature sign(ByteView message) const;

 private:
  Seed seed_{};
  std::array<std::uint8_t, 64> expanded_{};
  PublicKey public_{};
};

struct KeyPair {
  SecretKey secret;
  PublicKey public_key;
};

/// Fresh keypair from the OS entropy source.
KeyPair generate_keypair();
/// Deterministic keypair; the simulator derives seeds from its seeded generator.
KeyPair keypair_from_seed(const Seed& seed);

bool verify(const PublicKey& key, ByteView message, ByteView signature);

void random_bytes(std::span<std::uint8_t> out);

}  // namespace cogmin::crypto
