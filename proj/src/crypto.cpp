#include "cmr/crypto.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <openssl/evp.h>

#include "cmr/error.hpp"

namespace cmr::crypto {

std::array<std::uint8_t, 20> sha1(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 20> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha1(), nullptr) != 1 || len != 20) {
    throw CryptoError("SHA-1 failed");
  }
  return out;
}

Digest64 digest64(std::span<const std::uint8_t> data) {
  const auto full = sha1(data);
  Digest64 out{};
  std::copy_n(full.begin(), out.size(), out.begin());
  return out;
}

std::uint64_t digest64_u64(std::span<const std::uint8_t> data) {
  const auto d = digest64(data);
  std::uint64_t v = 0;
  for (std::uint8_t b : d) v = (v << 8) | b;
  return v;
}

void append_u16_be(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_u64_be(Bytes& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::size_t byte_length(const mpz_class& v) {
  return v == 0 ? 0 : (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
}

Bytes to_bytes(const mpz_class& v, std::size_t width) {
  const std::size_t len = byte_length(v);
  if (width != 0 && len > width) throw CryptoError("integer does not fit the requested width");
  Bytes out(width == 0 ? len : width, 0);
  if (len > 0) {
    std::size_t written = 0;
    mpz_export(out.data() + (out.size() - len), &written, 1, 1, 1, 0, v.get_mpz_t());
  }
  return out;
}

mpz_class from_bytes(std::span<const std::uint8_t> bytes) {
  mpz_class v;
  if (!bytes.empty()) mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return v;
}

Rng::Rng(std::uint64_t seed) : state_(gmp_randinit_mt) {
  mpz_class s;
  mpz_import(s.get_mpz_t(), 1, 1, sizeof(seed), 0, 0, &seed);
  state_.seed(s);
}

mpz_class Rng::below(const mpz_class& bound) { return state_.get_z_range(bound); }

mpz_class Rng::bits_exact(std::size_t bits) {
  mpz_class v = state_.get_z_bits(static_cast<mp_bitcnt_t>(bits));
  mpz_setbit(v.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 1));
  return v;
}

namespace {

mpz_class random_prime(Rng& rng, std::size_t bits) {
  mpz_class p = rng.bits_exact(bits);
  mpz_setbit(p.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 2));  // keep p*q at full width
  mpz_nextprime(p.get_mpz_t(), p.get_mpz_t());
  return p;
}

mpz_class invert(const mpz_class& a, const mpz_class& m) {
  mpz_class r;
  if (mpz_invert(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t()) == 0) throw CryptoError("not invertible");
  return r;
}

mpz_class powm(const mpz_class& b, const mpz_class& e, const mpz_class& m) {
  mpz_class r;
  mpz_powm(r.get_mpz_t(), b.get_mpz_t(), e.get_mpz_t(), m.get_mpz_t());
  return r;
}

void require_same_key(const PaillierPublicKey& pub, const Ciphertext& c) {
  if (c.key_fingerprint != pub.fingerprint) throw CryptoError("ciphertext belongs to a different key");
}

}  // namespace

PaillierPublicKey make_public_key(const mpz_class& n) {
  PaillierPublicKey pub;
  pub.n = n;
  pub.n_squared = n * n;
  pub.g = n + 1;
  const Bytes nb = to_bytes(n);
  pub.fingerprint = digest64_u64(nb);
  return pub;
}

PaillierPrivateKey paillier_keygen(std::size_t bits, std::uint64_t seed) {
  if (bits < 64 || bits % 2 != 0) throw CryptoError("Paillier modulus size must be even and >= 64 bits");
  Rng rng(seed);
  for (;;) {
    const mpz_class p = random_prime(rng, bits / 2);
    const mpz_class q = random_prime(rng, bits / 2);
    if (p == q) continue;
    const mpz_class n = p * q;
    mpz_class g;
    const mpz_class phi = (p - 1) * (q - 1);
    mpz_gcd(g.get_mpz_t(), n.get_mpz_t(), phi.get_mpz_t());
    if (g != 1) continue;
    PaillierPrivateKey key;
    key.pub = make_public_key(n);
    key.lambda = lcm(p - 1, q - 1);
    // With g = n + 1, L(g^lambda mod n^2) = lambda mod n.
    key.mu = invert(key.lambda % n, n);
    return key;
  }
}

Ciphertext encrypt(const PaillierPublicKey& pub, const mpz_class& m, Rng& rng) {
  if (m < 0 || m >= pub.n) throw CryptoError("plaintext out of range [0, n)");
  mpz_class r;
  mpz_class g;
  do {
    r = rng.below(pub.n);
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pub.n.get_mpz_t());
  } while (r == 0 || g != 1);
  // (1 + n)^m = 1 + m n (mod n^2)
  mpz_class c = (1 + m * pub.n) % pub.n_squared;
  c = (c * powm(r, pub.n, pub.n_squared)) % pub.n_squared;
  return {c, pub.fingerprint};
}

mpz_class decrypt(const PaillierPrivateKey& priv, const Ciphertext& c) {
  require_same_key(priv.pub, c);
  const auto& pub = priv.pub;
  if (c.value <= 0 || c.value >= pub.n_squared) throw CryptoError("ciphertext out of range");
  const mpz_class u = powm(c.value, priv.lambda, pub.n_squared);
  const mpz_class l = (u - 1) / pub.n;
  return (l * priv.mu) % pub.n;
}

Ciphertext hom_add(const PaillierPublicKey& pub, const Ciphertext& a, const Ciphertext& b) {
  require_same_key(pub, a);
  require_same_key(pub, b);
  return {(a.value * b.value) % pub.n_squared, pub.fingerprint};
}

Ciphertext hom_scale(const PaillierPublicKey& pub, const Ciphertext& c, const mpz_class& k) {
  require_same_key(pub, c);
  if (k < 0) throw CryptoError("hom_scale exponent must be non-negative");
  return {powm(c.value, k, pub.n_squared), pub.fingerprint};
}

Ciphertext identity_ciphertext(const PaillierPublicKey& pub) { return {mpz_class(1), pub.fingerprint}; }

FixedPointCodec::FixedPointCodec(const mpz_class& modulus, unsigned scale_bits)
    : n_(modulus), half_(modulus / 2), scale_bits_(scale_bits) {
  if (scale_bits_ == 0 || scale_bits_ > 52) throw InputError("fixed-point scale must be 2^1 .. 2^52");
}

double FixedPointCodec::scale() const { return std::ldexp(1.0, static_cast<int>(scale_bits_)); }

mpz_class FixedPointCodec::encode(double v) const {
  if (!std::isfinite(v)) throw InputError("cannot encode a non-finite value");
  const double scaled = std::nearbyint(std::ldexp(v, static_cast<int>(scale_bits_)));
  mpz_class z(scaled);
  return encode_integer(z);
}

mpz_class FixedPointCodec::encode_integer(const mpz_class& v) const {
  if (abs(v) >= half_) throw OverflowError("fixed-point value exceeds the plaintext budget n/2");
  return v >= 0 ? v : mpz_class(n_ + v);
}

mpz_class FixedPointCodec::to_signed(const mpz_class& m) const { return m > half_ ? mpz_class(m - n_) : m; }

double FixedPointCodec::decode(const mpz_class& m, unsigned scale_power) const {
  mpz_class s = to_signed(m);
  // Exact division by 2^(bits * power) would lose the fraction; go through
  // mpf-free double conversion on the integer and scale afterwards.
  const double v = s.get_d();
  return std::ldexp(v, -static_cast<int>(scale_bits_ * scale_power));
}

void FixedPointCodec::check_budget(std::size_t terms, double max_abs_coeff, double max_reading) const {
  const mpz_class q(std::ceil(std::ldexp(max_abs_coeff, static_cast<int>(scale_bits_))));
  const mpz_class r(std::ceil(std::ldexp(max_reading, static_cast<int>(scale_bits_))));
  const mpz_class bound = q * r * static_cast<unsigned long>(terms);
  if (bound >= half_) {
    throw OverflowError("key too small: " + std::to_string(terms) + " terms of |phi| <= " +
                        std::to_string(max_abs_coeff) + " and readings <= " + std::to_string(max_reading) +
                        " can exceed n/2");
  }
}

std::int64_t quantize_coeff(double phi, unsigned scale_bits) {
  return static_cast<std::int64_t>(std::nearbyint(std::ldexp(phi, static_cast<int>(scale_bits))));
}

// ------------------------------------------------------------- signatures

namespace {

// DER DigestInfo prefix for SHA-1 (RFC 8017, section 9.2 note 1).
constexpr std::array<std::uint8_t, 15> kSha1DigestInfo{0x30, 0x21, 0x30, 0x09, 0x06, 0x05, 0x2b, 0x0e,
                                                       0x03, 0x02, 0x1a, 0x05, 0x00, 0x04, 0x14};

std::optional<mpz_class> encode_message(const Digest64& digest, std::uint64_t timestamp, const mpz_class& n) {
  Bytes msg(digest.begin(), digest.end());
  append_u64_be(msg, timestamp);
  const auto h = sha1(msg);
  const std::size_t k = byte_length(n);
  const std::size_t t_len = kSha1DigestInfo.size() + h.size();
  if (k < t_len + 11) return std::nullopt;
  Bytes em(k, 0xff);
  em[0] = 0x00;
  em[1] = 0x01;
  em[k - t_len - 1] = 0x00;
  std::copy(kSha1DigestInfo.begin(), kSha1DigestInfo.end(), em.begin() + static_cast<std::ptrdiff_t>(k - t_len));
  std::copy(h.begin(), h.end(), em.end() - static_cast<std::ptrdiff_t>(h.size()));
  return from_bytes(em);
}

}  // namespace

SigningKey rsa_keygen(std::size_t bits, Rng& rng) {
  if (bits < 512) throw CryptoError("RSA signing keys must be at least 512 bits");
  const mpz_class e = 65537;
  for (;;) {
    const mpz_class p = random_prime(rng, bits / 2);
    const mpz_class q = random_prime(rng, bits - bits / 2);
    if (p == q) continue;
    const mpz_class phi = lcm(p - 1, q - 1);
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), e.get_mpz_t(), phi.get_mpz_t());
    if (g != 1) continue;
    return {{p * q, e}, invert(e, phi)};
  }
}

Bytes sign(const Digest64& digest, std::uint64_t timestamp, const SigningKey& key) {
  const auto em = encode_message(digest, timestamp, key.pub.n);
  if (!em) throw CryptoError("signing modulus too small");
  return to_bytes(powm(*em, key.d, key.pub.n), byte_length(key.pub.n));
}

bool verify(std::span<const std::uint8_t> signature, const Digest64& digest, std::uint64_t timestamp,
            const VerifyKey& key) noexcept {
  try {
    if (key.n <= 0 || signature.size() != byte_length(key.n)) return false;
    const mpz_class s = from_bytes(signature);
    if (s >= key.n) return false;
    const auto em = encode_message(digest, timestamp, key.n);
    return em && powm(s, key.e, key.n) == *em;
  } catch (...) {
    return false;
  }
}

// --------------------------------------------------------------- key files

namespace {

std::string pem_block(const std::string& label, const std::vector<std::pair<std::string, mpz_class>>& fields) {
  std::ostringstream out;
  out << "-----BEGIN " << label << "-----\n";
  for (const auto& [name, value] : fields) out << name << ": " << value.get_str(16) << '\n';
  out << "-----END " << label << "-----\n";
  return out.str();
}

std::map<std::string, mpz_class> parse_pem(const std::string& text, const std::string& label) {
  std::istringstream in(text);
  std::string line;
  const std::string begin = "-----BEGIN " + label + "-----";
  const std::string end = "-----END " + label + "-----";
  bool inside = false;
  bool closed = false;
  std::map<std::string, mpz_class> fields;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == begin) {
      inside = true;
      continue;
    }
    if (line == end) {
      closed = inside;
      break;
    }
    if (!inside || line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw CryptoError("key file: malformed line in " + label);
    std::string value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(' '));
    mpz_class v;
    if (v.set_str(value, 16) != 0) throw CryptoError("key file: bad hex in " + label);
    fields[line.substr(0, colon)] = v;
  }
  if (!closed) throw CryptoError("key file: missing " + label + " block");
  return fields;
}

const mpz_class& field(const std::map<std::string, mpz_class>& f, const std::string& name) {
  const auto it = f.find(name);
  if (it == f.end()) throw CryptoError("key file: missing field " + name);
  return it->second;
}

}  // namespace

std::string to_pem(const PaillierPublicKey& key) { return pem_block("CMR PAILLIER PUBLIC KEY", {{"n", key.n}}); }

std::string to_pem(const PaillierPrivateKey& key) {
  return pem_block("CMR PAILLIER PRIVATE KEY", {{"n", key.pub.n}, {"lambda", key.lambda}, {"mu", key.mu}});
}

std::string to_pem(const VerifyKey& key) { return pem_block("CMR RSA PUBLIC KEY", {{"n", key.n}, {"e", key.e}}); }

std::string to_pem(const SigningKey& key) {
  return pem_block("CMR RSA PRIVATE KEY", {{"n", key.pub.n}, {"e", key.pub.e}, {"d", key.d}});
}

PaillierPublicKey paillier_public_from_pem(const std::string& text) {
  return make_public_key(field(parse_pem(text, "CMR PAILLIER PUBLIC KEY"), "n"));
}

PaillierPrivateKey paillier_private_from_pem(const std::string& text) {
  const auto f = parse_pem(text, "CMR PAILLIER PRIVATE KEY");
  return {make_public_key(field(f, "n")), field(f, "lambda"), field(f, "mu")};
}

VerifyKey verify_key_from_pem(const std::string& text) {
  const auto f = parse_pem(text, "CMR RSA PUBLIC KEY");
  return {field(f, "n"), field(f, "e")};
}

SigningKey signing_key_from_pem(const std::string& text) {
  const auto f = parse_pem(text, "CMR RSA PRIVATE KEY");
  return {{field(f, "n"), field(f, "e")}, field(f, "d")};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace cmr::crypto
