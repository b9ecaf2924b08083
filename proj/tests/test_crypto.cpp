#include <bit>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cmr/crypto.hpp"
#include "cmr/error.hpp"

namespace {

namespace c = cmr::crypto;

class Paillier : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { key_ = new c::PaillierPrivateKey(c::paillier_keygen(512, 42)); }
  static void TearDownTestSuite() { delete key_; }
  static const c::PaillierPrivateKey& key() { return *key_; }
  static const c::PaillierPublicKey& pub() { return key_->pub; }

 private:
  static c::PaillierPrivateKey* key_;
};
c::PaillierPrivateKey* Paillier::key_ = nullptr;

std::string hex(std::span<const std::uint8_t> b) {
  static const char* d = "0123456789abcdef";
  std::string s;
  for (auto v : b) {
    s += d[v >> 4];
    s += d[v & 15];
  }
  return s;
}

c::Bytes text(const std::string& s) { return c::Bytes(s.begin(), s.end()); }

TEST(Digest, Sha1Vectors) {
  EXPECT_EQ(hex(c::sha1(text("abc"))), "a9993e364706816aba3e25717850c26c9cd0d89d");
  EXPECT_EQ(hex(c::sha1(text(""))), "da39a3ee5e6b4b0d3255bfef95601890afd80709");
}

TEST(Digest, TruncatedToSixtyFourBits) {
  EXPECT_EQ(hex(c::digest64(c::Bytes{})), "da39a3ee5e6b4b0d");
  EXPECT_EQ(c::digest64_u64(c::Bytes{}), 0xda39a3ee5e6b4b0dULL);
  EXPECT_EQ(c::digest64(text("x")), c::digest64(text("x")));
}

TEST(Digest, Avalanche) {
  std::mt19937_64 rng(1);
  double flipped = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    c::Bytes msg(32);
    for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
    const auto a = c::digest64_u64(msg);
    msg[rng() % 32] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    flipped += std::popcount(a ^ c::digest64_u64(msg));
  }
  EXPECT_NEAR(flipped / trials, 32.0, 1.5);
}

TEST(Bytes, BigEndianHelpers) {
  c::Bytes out;
  c::append_u16_be(out, 0x1234);
  c::append_u64_be(out, 0x0102030405060708ULL);
  EXPECT_EQ(hex(out), "12340102030405060708");
  const mpz_class v("0x01ff", 0);
  EXPECT_EQ(hex(c::to_bytes(v, 4)), "000001ff");
  EXPECT_EQ(c::from_bytes(c::to_bytes(v, 4)), v);
  EXPECT_THROW(c::to_bytes(v, 1), cmr::CryptoError);
}

TEST_F(Paillier, RoundTripBoundaries) {
  c::Rng rng(1);
  EXPECT_EQ(c::decrypt(key(), c::encrypt(pub(), 0, rng)), 0);
  const mpz_class top = pub().n - 1;
  EXPECT_EQ(c::decrypt(key(), c::encrypt(pub(), top, rng)), top);
  EXPECT_THROW(c::encrypt(pub(), pub().n, rng), cmr::CryptoError);
  EXPECT_THROW(c::encrypt(pub(), -1, rng), cmr::CryptoError);
}

TEST_F(Paillier, RandomRoundTrips) {
  c::Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const mpz_class m = rng.below(pub().n);
    EXPECT_EQ(c::decrypt(key(), c::encrypt(pub(), m, rng)), m);
  }
}

TEST_F(Paillier, ProbabilisticEncryption) {
  c::Rng rng(3);
  EXPECT_NE(c::encrypt(pub(), 77, rng).value, c::encrypt(pub(), 77, rng).value);
}

TEST_F(Paillier, HomomorphicLaws) {
  c::Rng rng(4);
  const auto e2 = c::encrypt(pub(), 2, rng);
  const auto e3 = c::encrypt(pub(), 3, rng);
  EXPECT_EQ(c::decrypt(key(), c::hom_add(pub(), e2, e3)), 5);
  EXPECT_EQ(c::decrypt(key(), c::hom_scale(pub(), e3, 1)), 3);
  const auto lhs = c::hom_add(pub(), c::hom_scale(pub(), c::encrypt(pub(), 4, rng), 3),
                              c::hom_scale(pub(), c::encrypt(pub(), 6, rng), 5));
  EXPECT_EQ(c::decrypt(key(), lhs), 42);
  EXPECT_EQ(c::decrypt(key(), c::hom_add(pub(), e2, c::identity_ciphertext(pub()))), 2);
  EXPECT_THROW(c::hom_scale(pub(), e2, -1), cmr::CryptoError);
}

TEST_F(Paillier, CompositeLawRandomDraws) {
  c::Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const mpz_class p1 = rng.below(pub().n), m1 = rng.below(pub().n);
    const mpz_class p2 = rng.below(pub().n), m2 = rng.below(pub().n);
    const auto ct = c::hom_add(pub(), c::hom_scale(pub(), c::encrypt(pub(), m1, rng), p1),
                               c::hom_scale(pub(), c::encrypt(pub(), m2, rng), p2));
    mpz_class expect = (p1 * m1 + p2 * m2) % pub().n;
    EXPECT_EQ(c::decrypt(key(), ct), expect);
  }
}

TEST_F(Paillier, ForeignKeyCiphertextRejected) {
  const auto other = c::paillier_keygen(512, 43);
  c::Rng rng(6);
  const auto ct = c::encrypt(other.pub, 5, rng);
  EXPECT_THROW(c::decrypt(key(), ct), cmr::CryptoError);
}

TEST_F(Paillier, KeygenIsSeeded) {
  EXPECT_EQ(c::paillier_keygen(512, 42).pub.n, pub().n);
  EXPECT_NE(c::paillier_keygen(512, 44).pub.n, pub().n);
  EXPECT_EQ(mpz_sizeinbase(pub().n.get_mpz_t(), 2), 512u);
}

TEST_F(Paillier, CodecSignRule) {
  const c::FixedPointCodec codec(pub().n, 16);
  EXPECT_EQ(codec.encode(0.0), 0);
  EXPECT_EQ(codec.encode(-1.5), pub().n - 98304);
  EXPECT_EQ(codec.decode(codec.encode(-1.5)), -1.5);
  EXPECT_EQ(codec.decode(codec.encode(2.25)), 2.25);
  EXPECT_NEAR(codec.decode(codec.encode(0.123456789)), 0.123456789, 1.0 / 65536);
  EXPECT_EQ(codec.to_signed(pub().n - 1), -1);
  EXPECT_THROW(codec.encode(std::ldexp(1.0, 600)), cmr::OverflowError);
}

TEST_F(Paillier, EncryptedWeightedSumMatchesPlaintext) {
  const c::FixedPointCodec codec(pub().n, 16);
  c::Rng rng(7);
  std::mt19937_64 g(7);
  std::normal_distribution<double> phi_dist(0.0, 0.2);
  std::uniform_real_distribution<double> d_dist(0.0, 3000.0);
  auto acc = c::identity_ciphertext(pub());
  double plain = 0.0, abs_d = 0.0;
  mpz_class exact = 0;
  for (int i = 0; i < 10; ++i) {
    const double phi = phi_dist(g), d = d_dist(g);
    const std::int64_t q = c::quantize_coeff(phi, 16);
    const mpz_class e = q >= 0 ? mpz_class(q) : mpz_class(pub().n - (-q));
    const auto ct = c::encrypt(pub(), codec.encode(d), rng);
    acc = c::hom_add(pub(), acc, c::hom_scale(pub(), ct, e));
    plain += phi * d;
    abs_d += d;
    exact += mpz_class(q) * codec.to_signed(codec.encode(d));
  }
  const mpz_class got = codec.to_signed(c::decrypt(key(), acc));
  EXPECT_EQ(got, exact);
  EXPECT_NEAR(codec.decode(c::decrypt(key(), acc), 2), plain, 10.0 * std::ldexp(1.0, -16) * abs_d);
}

TEST_F(Paillier, BudgetCheck) {
  const c::FixedPointCodec codec(pub().n, 16);
  EXPECT_NO_THROW(codec.check_budget(128, 1.0, 5000.0));
  const auto tiny = c::paillier_keygen(64, 1);
  const c::FixedPointCodec small(tiny.pub.n, 16);
  EXPECT_THROW(small.check_budget(128, 1.0, 5e7), cmr::OverflowError);
}

TEST(Signature, SignVerify) {
  c::Rng rng(8);
  const auto key = c::rsa_keygen(512, rng);
  const auto other = c::rsa_keygen(512, rng);
  const auto dg = c::digest64(text("payload"));
  const auto sig = c::sign(dg, 9, key);
  EXPECT_TRUE(c::verify(sig, dg, 9, key.pub));
  EXPECT_FALSE(c::verify(sig, dg, 9, other.pub));
  EXPECT_FALSE(c::verify(sig, dg, 10, key.pub));
  EXPECT_FALSE(c::verify(sig, c::digest64(text("payloaD")), 9, key.pub));
  auto bad = sig;
  bad[bad.size() / 2] ^= 1;
  EXPECT_FALSE(c::verify(bad, dg, 9, key.pub));
  EXPECT_FALSE(c::verify(c::Bytes{}, dg, 9, key.pub));
  EXPECT_FALSE(c::verify(c::Bytes(200, 0xff), dg, 9, key.pub));
}

TEST(KeyFiles, PemRoundTrip) {
  c::Rng rng(9);
  const auto sk = c::rsa_keygen(512, rng);
  const auto pk = c::paillier_keygen(256, 3);
  EXPECT_EQ(c::signing_key_from_pem(c::to_pem(sk)).d, sk.d);
  EXPECT_EQ(c::verify_key_from_pem(c::to_pem(sk.pub)), sk.pub);
  const auto back = c::paillier_private_from_pem(c::to_pem(pk));
  EXPECT_EQ(back.lambda, pk.lambda);
  EXPECT_EQ(back.pub.n, pk.pub.n);
  EXPECT_EQ(c::paillier_public_from_pem(c::to_pem(pk.pub)).n, pk.pub.n);
  EXPECT_THROW(c::verify_key_from_pem("garbage"), cmr::CryptoError);
}

}  // namespace
