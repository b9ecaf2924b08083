#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <gmpxx.h>

namespace cmr::crypto {

using Bytes = std::vector<std::uint8_t>;
using Digest64 = std::array<std::uint8_t, 8>;

/// Full SHA-1 (20 bytes).
std::array<std::uint8_t, 20> sha1(std::span<const std::uint8_t> data);

/// First 64 bits of SHA-1(data).
Digest64 digest64(std::span<const std::uint8_t> data);
std::uint64_t digest64_u64(std::span<const std::uint8_t> data);  // big-endian read

void append_u16_be(Bytes& out, std::uint16_t v);
void append_u64_be(Bytes& out, std::uint64_t v);

/// Big-endian magnitude, left-padded with zeros to `width` bytes (0 = minimal).
Bytes to_bytes(const mpz_class& v, std::size_t width = 0);
mpz_class from_bytes(std::span<const std::uint8_t> bytes);
std::size_t byte_length(const mpz_class& v);

/// Seeded source for key generation and encryption randomness.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  /// Uniform in [0, bound).
  mpz_class below(const mpz_class& bound);
  /// Uniform with exactly `bits` bits (top bit set).
  mpz_class bits_exact(std::size_t bits);

 private:
  gmp_randclass state_;
};

// ---------------------------------------------------------------- Paillier

struct PaillierPublicKey {
  mpz_class n;
  mpz_class n_squared;
  mpz_class g;  // n + 1
  std::uint64_t fingerprint = 0;

  std::size_t ciphertext_bytes() const { return byte_length(n_squared); }
};

struct PaillierPrivateKey {
  PaillierPublicKey pub;
  mpz_class lambda;  // lcm(p - 1, q - 1)
  mpz_class mu;      // lambda^-1 mod n
};

struct Ciphertext {
  mpz_class value;
  std::uint64_t key_fingerprint = 0;

  friend bool operator==(const Ciphertext& a, const Ciphertext& b) {
    return a.value == b.value && a.key_fingerprint == b.key_fingerprint;
  }
};

PaillierPublicKey make_public_key(const mpz_class& n);
PaillierPrivateKey paillier_keygen(std::size_t bits, std::uint64_t seed);

/// Requires 0 <= m < n; throws CryptoError otherwise.
Ciphertext encrypt(const PaillierPublicKey& pub, const mpz_class& m, Rng& rng);
/// Throws CryptoError when the ciphertext was produced under another key.
mpz_class decrypt(const PaillierPrivateKey& priv, const Ciphertext& c);

/// E(m1) * E(m2) mod n^2, decrypting to m1 + m2 mod n.
Ciphertext hom_add(const PaillierPublicKey& pub, const Ciphertext& a, const Ciphertext& b);
/// E(m)^k mod n^2, decrypting to k * m mod n. k must be a non-negative integer;
/// callers encode negative scalars as n - |k|.
Ciphertext hom_scale(const PaillierPublicKey& pub, const Ciphertext& c, const mpz_class& k);
/// E(0) with unit randomness; the neutral element of hom_add.
Ciphertext identity_ciphertext(const PaillierPublicKey& pub);

// ------------------------------------------------------- fixed-point codec

/// Maps signed fixed-point values into Z_n. Values above n/2 decode negative.
class FixedPointCodec {
 public:
  FixedPointCodec(const mpz_class& modulus, unsigned scale_bits = 16);

  unsigned scale_bits() const { return scale_bits_; }
  double scale() const;
  const mpz_class& modulus() const { return n_; }

  /// round(S * v) mod n. Throws OverflowError when |S * v| >= n / 2.
  mpz_class encode(double v) const;
  /// Signed integer mod n, with the same budget check.
  mpz_class encode_integer(const mpz_class& v) const;
  /// Residue in [0, n) to signed integer in (-n/2, n/2].
  mpz_class to_signed(const mpz_class& m) const;
  /// to_signed(m) / S^scale_power.
  double decode(const mpz_class& m, unsigned scale_power = 1) const;

  /// Throws OverflowError unless n / 2 exceeds the largest accumulated
  /// magnitude  terms * max|round(S phi)| * round(S max_reading).
  void check_budget(std::size_t terms, double max_abs_coeff, double max_reading) const;

 private:
  mpz_class n_;
  mpz_class half_;
  unsigned scale_bits_;
};

/// round(2^scale_bits * phi).
std::int64_t quantize_coeff(double phi, unsigned scale_bits = 16);

// -------------------------------------------------------------- signatures

/// RSA signing keys; signatures cover SHA-1(digest || T_S) under an
/// EMSA-PKCS1-v1_5 encoding.
struct VerifyKey {
  mpz_class n;
  mpz_class e;

  friend bool operator==(const VerifyKey&, const VerifyKey&) = default;
};

struct SigningKey {
  VerifyKey pub;
  mpz_class d;
};

SigningKey rsa_keygen(std::size_t bits, Rng& rng);

Bytes sign(const Digest64& digest, std::uint64_t timestamp, const SigningKey& key);
/// Never throws; malformed input verifies false.
bool verify(std::span<const std::uint8_t> signature, const Digest64& digest, std::uint64_t timestamp,
            const VerifyKey& key) noexcept;

// ---------------------------------------------------------------- key files

std::string to_pem(const PaillierPublicKey& key);
std::string to_pem(const PaillierPrivateKey& key);
std::string to_pem(const VerifyKey& key);
std::string to_pem(const SigningKey& key);

PaillierPublicKey paillier_public_from_pem(const std::string& text);
PaillierPrivateKey paillier_private_from_pem(const std::string& text);
VerifyKey verify_key_from_pem(const std::string& text);
SigningKey signing_key_from_pem(const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cmr::crypto
