#include "cogmin/crypto.hpp"

#include <sodium.h>

namespace cogmin::crypto {

namespace {
void ensure_sodium() {
  static const bool ok = [] { return sodium_init() >= 0; }();
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}
}  // namespace

Digest sha256(ByteView data) {
  ensure_sodium();
  Digest out{};
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Digest sha256(std::initializer_list<ByteView> parts) {
  ensure_sodium();
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  for (auto p : parts) crypto_hash_sha256_update(&st, p.data(), p.size());
  Digest out{};
  crypto_hash_sha256_final(&st, out.data());
  return out;
}

SecretKey::SecretKey(const Seed& seed) : seed_(seed) {
  ensure_sodium();
  crypto_sign_seed_keypair(public_.data(), expanded_.data(), seed_.data());
}

SecretKey::~SecretKey() {
  sodium_memzero(expanded_.data(), expanded_.size());
  sodium_memzero(seed_.data(), seed_.size());
}

Signature SecretKey::sign(ByteView message) const {
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), expanded_.data());
  return sig;
}

KeyPair generate_keypair() {
  Seed seed{};
  random_bytes(seed);
  return keypair_from_seed(seed);
}

KeyPair keypair_from_seed(const Seed& seed) {
  SecretKey sk(seed);
  PublicKey pk = sk.public_key();
  return {std::move(sk), pk};
}

bool verify(const PublicKey& key, ByteView message, ByteView signature) {
  ensure_sodium();
  if (signature.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                     key.data()) == 0;
}

void random_bytes(std::span<std::uint8_t> out) {
  ensure_sodium();
  randombytes_buf(out.data(), out.size());
}

}  // namespace cogmin::crypto
