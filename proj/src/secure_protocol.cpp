#include "cmr/secure_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cmr/coeff_stream.hpp"
#include "cmr/error.hpp"

namespace cmr {

using crypto::Bytes;
using crypto::Ciphertext;
using crypto::PaillierPublicKey;

namespace {

constexpr std::uint16_t kPartialBit = 0x8000;

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  Bytes buf;
  crypto::append_u64_be(buf, seed);
  crypto::append_u64_be(buf, a);
  crypto::append_u64_be(buf, b);
  return crypto::digest64_u64(buf);
}

std::uint16_t read_u16(std::span<const std::uint8_t> wire, std::size_t& pos) {
  if (pos + 2 > wire.size()) throw InputError("truncated packet");
  const auto v = static_cast<std::uint16_t>((wire[pos] << 8) | wire[pos + 1]);
  pos += 2;
  return v;
}

/// Sender ID from the wire header, without validation.
std::optional<NodeId> peek_sender(const Bytes& wire) {
  if (wire.size() < 2) return std::nullopt;
  return static_cast<NodeId>((wire[0] << 8) | wire[1]);
}

mpz_class signed_exponent(std::int64_t q, const PaillierPublicKey& pub) {
  return q >= 0 ? mpz_class(static_cast<unsigned long>(q)) : mpz_class(pub.n - static_cast<unsigned long>(-q));
}

}  // namespace

SecureKeys generate_keys(std::span<const NodeId> ids, std::size_t paillier_bits, std::size_t rsa_bits,
                         std::uint64_t seed) {
  SecureKeys keys;
  keys.collector = crypto::paillier_keygen(paillier_bits, mix(seed, 0));
  for (NodeId id : ids) {
    crypto::Rng rng(mix(seed, 1, id));
    auto key = crypto::rsa_keygen(rsa_bits, rng);
    keys.directory.keys[id] = key.pub;
    keys.signing.emplace(id, std::move(key));
  }
  return keys;
}

Bytes ciphertext_bytes(const std::vector<Ciphertext>& enc_data, const PaillierPublicKey& pub) {
  const std::size_t width = pub.ciphertext_bytes();
  Bytes out;
  out.reserve(width * enc_data.size());
  for (const auto& c : enc_data) {
    const Bytes b = crypto::to_bytes(c.value, width);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

crypto::Digest64 packet_digest(const std::vector<Ciphertext>& enc_data, std::uint64_t timestamp,
                               const PaillierPublicKey& pub) {
  Bytes input = ciphertext_bytes(enc_data, pub);
  crypto::append_u64_be(input, timestamp);
  return crypto::digest64(input);
}

SecurePacket make_packet(NodeId sender, std::vector<Ciphertext> enc_data, bool partial, std::uint64_t timestamp,
                         const crypto::SigningKey& key, const PaillierPublicKey& pub) {
  SecurePacket p;
  p.sender = sender;
  p.partial = partial;
  p.signature = crypto::sign(packet_digest(enc_data, timestamp, pub), timestamp, key);
  p.enc_data = std::move(enc_data);
  return p;
}

Bytes serialize(const SecurePacket& packet, const PaillierPublicKey& pub) {
  if (packet.sender > 0xFFFF) throw InputError("node ID does not fit the 2-byte wire field");
  if (packet.enc_data.size() >= kPartialBit) throw InputError("too many ciphertexts for one packet");
  const std::size_t width = pub.ciphertext_bytes();
  if (width > 0xFFFF || packet.signature.size() > 0xFFFF) throw InputError("field exceeds the 2-byte length prefix");
  Bytes out;
  crypto::append_u16_be(out, static_cast<std::uint16_t>(packet.sender));
  auto count = static_cast<std::uint16_t>(packet.enc_data.size());
  if (packet.partial) count |= kPartialBit;
  crypto::append_u16_be(out, count);
  for (const auto& c : packet.enc_data) {
    crypto::append_u16_be(out, static_cast<std::uint16_t>(width));
    const Bytes b = crypto::to_bytes(c.value, width);
    out.insert(out.end(), b.begin(), b.end());
  }
  crypto::append_u16_be(out, static_cast<std::uint16_t>(packet.signature.size()));
  out.insert(out.end(), packet.signature.begin(), packet.signature.end());
  return out;
}

SecurePacket parse_packet(std::span<const std::uint8_t> wire, const PaillierPublicKey& pub) {
  std::size_t pos = 0;
  SecurePacket p;
  p.sender = read_u16(wire, pos);
  const std::uint16_t count = read_u16(wire, pos);
  p.partial = (count & kPartialBit) != 0;
  const std::size_t n_ct = count & static_cast<std::uint16_t>(~kPartialBit);
  if (n_ct == 0) throw InputError("packet carries no ciphertext");
  const std::size_t width = pub.ciphertext_bytes();
  for (std::size_t i = 0; i < n_ct; ++i) {
    const std::size_t len = read_u16(wire, pos);
    if (len != width) throw InputError("ciphertext width mismatch");
    if (pos + len > wire.size()) throw InputError("truncated ciphertext");
    Ciphertext c{crypto::from_bytes(wire.subspan(pos, len)), pub.fingerprint};
    if (c.value <= 0 || c.value >= pub.n_squared) throw InputError("ciphertext out of range");
    p.enc_data.push_back(std::move(c));
    pos += len;
  }
  const std::size_t sig_len = read_u16(wire, pos);
  if (pos + sig_len != wire.size()) throw InputError("signature length does not match the packet size");
  p.signature.assign(wire.begin() + static_cast<std::ptrdiff_t>(pos), wire.end());
  return p;
}

ValidationResult validate(std::span<const std::uint8_t> wire, const KeyDirectory& directory,
                          const std::set<NodeId>& id_set, std::uint64_t timestamp, const PaillierPublicKey& pub) {
  ValidationResult r;
  SecurePacket p;
  try {
    p = parse_packet(wire, pub);
  } catch (const InputError& e) {
    r.reason = std::string("unparseable: ") + e.what();
    if (wire.size() >= 2) r.id = static_cast<NodeId>((wire[0] << 8) | wire[1]);
    return r;
  }
  r.id = p.sender;
  r.partial = p.partial;
  r.enc_data = p.enc_data;
  if (!id_set.contains(p.sender)) {
    r.reason = "sender ID not expected";
    return r;
  }
  const auto key = directory.keys.find(p.sender);
  if (key == directory.keys.end()) {
    r.reason = "no public key for sender";
    return r;
  }
  if (!crypto::verify(p.signature, packet_digest(p.enc_data, timestamp, pub), timestamp, key->second)) {
    r.reason = "signature does not verify";
    return r;
  }
  r.ok = true;
  return r;
}

NodeInbox::NodeInbox(std::set<NodeId> expected) : expected_(std::move(expected)) {}

std::vector<ValidationResult> NodeInbox::ingest(const std::vector<Bytes>& wires, const KeyDirectory& directory,
                                                std::uint64_t timestamp, const PaillierPublicKey& pub) {
  std::vector<ValidationResult> rejected;
  for (const auto& w : wires) {
    ValidationResult v = validate(w, directory, expected_, timestamp, pub);
    if (!v.ok) {
      rejected.push_back(std::move(v));
      continue;
    }
    if (received_ids_.insert(v.id).second) {
      received_wires_.emplace(v.id, w);
      received_.emplace(v.id, std::move(v));
    }
  }
  return rejected;
}

std::set<NodeId> NodeInbox::missing() const {
  std::set<NodeId> out;
  std::set_difference(expected_.begin(), expected_.end(), received_ids_.begin(), received_ids_.end(),
                      std::inserter(out, out.end()));
  return out;
}

std::set<NodeId> expected_senders(const Topology& topo, const RoleAssignment& roles, NodeId id) {
  std::set<NodeId> out;
  for (NodeId c : topo.children(id)) {
    out.insert(c);
    if (roles.role(c) == Role::kForwarder) {
      for (NodeId s : topo.subtree(c)) out.insert(s);
    }
  }
  return out;
}

std::vector<std::int64_t> quantized_coefficients(NodeId id, std::size_t m, unsigned scale_bits) {
  const auto z = coeff_stream(id, m);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  std::vector<std::int64_t> q(m);
  for (std::size_t l = 0; l < m; ++l) q[l] = crypto::quantize_coeff(z[l] * inv_sqrt_m, scale_bits);
  return q;
}

ForwarderOutput forwarder_step(const NodeContext& node, const NodeInbox& inbox, double reading,
                               std::uint64_t timestamp, crypto::Rng& rng) {
  if (node.role != Role::kForwarder) throw InputError("forwarder_step on a non-forwarder");
  ForwarderOutput out;
  for (const auto& [id, wire] : inbox.received_wires()) out.send_list.push_back(wire);
  out.resend_requests = inbox.missing();
  const crypto::FixedPointCodec codec(node.collector_key.n, node.scale_bits);
  std::vector<Ciphertext> own{crypto::encrypt(node.collector_key, codec.encode(reading), rng)};
  const SecurePacket p = make_packet(node.id, std::move(own), false, timestamp, *node.signing, node.collector_key);
  out.send_list.push_back(serialize(p, node.collector_key));
  return out;
}

AggregatorOutput aggregator_step(const NodeContext& node, const NodeInbox& inbox, double reading,
                                 std::uint64_t timestamp, crypto::Rng& rng) {
  if (node.role != Role::kAggregator) throw InputError("aggregator_step on a non-aggregator");
  const auto& pub = node.collector_key;
  const crypto::FixedPointCodec codec(pub.n, node.scale_bits);
  AggregatorOutput out;
  out.resend_requests = inbox.missing();
  out.partial = !out.resend_requests.empty();

  std::vector<Ciphertext> rows(node.m, crypto::identity_ciphertext(pub));
  for (const auto& [id, v] : inbox.received()) {
    if (node.roles->role(id) == Role::kForwarder) {
      const auto q = quantized_coefficients(id, node.m, node.scale_bits);
      for (std::size_t l = 0; l < node.m; ++l) {
        rows[l] = crypto::hom_add(pub, rows[l], crypto::hom_scale(pub, v.enc_data.at(0), signed_exponent(q[l], pub)));
      }
    }
  }
  for (const auto& [id, v] : inbox.received()) {
    if (node.roles->role(id) == Role::kAggregator) {
      if (v.enc_data.size() != node.m) throw InputError("aggregator packet with the wrong row count");
      out.partial = out.partial || v.partial;
      for (std::size_t l = 0; l < node.m; ++l) rows[l] = crypto::hom_add(pub, rows[l], v.enc_data[l]);
    }
  }
  const auto q_self = quantized_coefficients(node.id, node.m, node.scale_bits);
  const mpz_class e_self = codec.to_signed(codec.encode(reading));
  for (std::size_t l = 0; l < node.m; ++l) {
    const mpz_class term = codec.encode_integer(mpz_class(static_cast<long>(q_self[l])) * e_self);
    rows[l] = crypto::hom_add(pub, rows[l], crypto::encrypt(pub, term, rng));
  }
  const SecurePacket p = make_packet(node.id, std::move(rows), out.partial, timestamp, *node.signing, pub);
  out.packet = serialize(p, pub);
  return out;
}

CollectorOutput collector_assemble(const NodeInbox& inbox, const crypto::PaillierPrivateKey& priv,
                                   const Topology& topo, const RoleAssignment& roles, std::size_t m,
                                   unsigned scale_bits) {
  (void)topo;
  const crypto::FixedPointCodec codec(priv.pub.n, scale_bits);
  CollectorOutput out;
  out.partial = !inbox.missing().empty();
  std::vector<mpz_class> acc(m, mpz_class(0));
  for (const auto& [id, v] : inbox.received()) {
    if (roles.role(id) == Role::kForwarder) {
      const mpz_class e = codec.to_signed(crypto::decrypt(priv, v.enc_data.at(0)));
      const auto q = quantized_coefficients(id, m, scale_bits);
      for (std::size_t l = 0; l < m; ++l) acc[l] += mpz_class(static_cast<long>(q[l])) * e;
    } else {
      if (v.enc_data.size() != m) throw InputError("aggregator packet with the wrong row count");
      out.partial = out.partial || v.partial;
      for (std::size_t l = 0; l < m; ++l) acc[l] += codec.to_signed(crypto::decrypt(priv, v.enc_data[l]));
    }
  }
  out.y.resize(static_cast<Eigen::Index>(m));
  const mpz_class half = priv.pub.n / 2;
  for (std::size_t l = 0; l < m; ++l) {
    if (abs(acc[l]) >= half) throw OverflowError("collector sum exceeds the plaintext budget");
    out.y(static_cast<Eigen::Index>(l)) = std::ldexp(acc[l].get_d(), -2 * static_cast<int>(scale_bits));
  }
  out.y_int = std::move(acc);
  return out;
}

std::vector<mpz_class> quantized_plain_y(const Topology& topo, const Vector& d, std::size_t m, unsigned scale_bits) {
  if (static_cast<std::size_t>(d.size()) != topo.size()) throw InputError("quantized_plain_y: size mismatch");
  std::vector<mpz_class> y(m, mpz_class(0));
  for (NodeId id : topo.post_order()) {
    const double scaled = std::nearbyint(std::ldexp(d(static_cast<Eigen::Index>(topo.index_of(id))),
                                                    static_cast<int>(scale_bits)));
    const mpz_class e(scaled);
    const auto q = quantized_coefficients(id, m, scale_bits);
    for (std::size_t l = 0; l < m; ++l) y[l] += mpz_class(static_cast<long>(q[l])) * e;
  }
  return y;
}

const char* attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kTamper: return "tamper";
    case AttackKind::kReplay: return "replay";
    case AttackKind::kImpersonate: return "impersonate";
    case AttackKind::kEavesdrop: return "eavesdrop";
  }
  return "unknown";
}

AttackKind parse_attack(const std::string& name) {
  for (auto k : {AttackKind::kTamper, AttackKind::kReplay, AttackKind::kImpersonate, AttackKind::kEavesdrop}) {
    if (name == attack_name(k)) return k;
  }
  throw InputError("unknown attack '" + name + "'");
}

SecureSession::SecureSession(const Topology& topo, std::size_t m, const SecureKeys& keys, std::uint64_t seed)
    : topo_(topo), m_(m), keys_(keys), seed_(seed), roles_(classify_roles(topo, m)) {
  if (m_ > topo_.size()) throw InputError("M must not exceed N");
  for (NodeId id : topo_.post_order()) {
    if (!keys_.signing.contains(id)) throw InputError("no signing key for node " + std::to_string(id));
  }
}

namespace {

/// The adversary sitting on one link during one round.
class Adversary {
 public:
  Adversary(const AttackSpec& spec, const SecureKeys& keys, const std::map<NodeId, Bytes>& history,
            std::uint64_t timestamp)
      : spec_(spec), keys_(keys), history_(history), ts_(timestamp), remaining_(spec.transmissions) {
    outcome_.kind = spec.kind;
    outcome_.link = spec.link;
  }

  /// Alters the wires crossing `link` in place; returns the altered copies.
  std::vector<Bytes> intercept(const Link& link, std::vector<Bytes>& wires) {
    std::vector<Bytes> altered;
    if (link != spec_.link || wires.empty()) return altered;
    if (!target_) target_ = spec_.target ? *spec_.target : peek_sender(wires.front()).value_or(0);
    outcome_.target = *target_;
    for (auto& w : wires) {
      if (peek_sender(w) != target_) continue;
      if (spec_.kind == AttackKind::kEavesdrop) {
        observed_.push_back(w);
        continue;
      }
      if (remaining_ == 0) continue;
      --remaining_;
      w = forge(w);
      altered.push_back(w);
      outcome_.injected = true;
    }
    return altered;
  }

  const std::vector<Bytes>& observed() const { return observed_; }
  AttackOutcome& outcome() { return outcome_; }

 private:
  Bytes forge(const Bytes& honest) {
    const auto& pub = keys_.collector.pub;
    SecurePacket p = parse_packet(honest, pub);
    std::mt19937_64 gen(spec_.seed ^ (0x9E3779B97F4A7C15ULL * (spec_.transmissions - remaining_)));
    switch (spec_.kind) {
      case AttackKind::kTamper: {
        Bytes w = honest;
        // Flip one bit inside the ciphertext region.
        const std::size_t width = pub.ciphertext_bytes();
        const std::size_t ct = std::uniform_int_distribution<std::size_t>(0, p.enc_data.size() - 1)(gen);
        const std::size_t byte = 4 + ct * (width + 2) + 2 + std::uniform_int_distribution<std::size_t>(0, width - 1)(gen);
        w[byte] ^= static_cast<std::uint8_t>(1u << std::uniform_int_distribution<int>(0, 7)(gen));
        return w;
      }
      case AttackKind::kReplay: {
        const auto it = history_.find(p.sender);
        if (it != history_.end()) return it->second;
        // No earlier traffic recorded: replay a capture signed for the previous slot.
        const SecurePacket old = make_packet(p.sender, p.enc_data, p.partial, ts_ - 1, keys_.signing.at(p.sender), pub);
        return serialize(old, pub);
      }
      case AttackKind::kImpersonate: {
        crypto::Rng rng(spec_.seed);
        if (!attacker_) attacker_ = crypto::rsa_keygen(512, rng);
        std::vector<Ciphertext> fake;
        for (std::size_t i = 0; i < p.enc_data.size(); ++i) {
          fake.push_back(crypto::encrypt(pub, rng.below(pub.n), rng));
        }
        return serialize(make_packet(p.sender, std::move(fake), false, ts_, *attacker_, pub), pub);
      }
      case AttackKind::kEavesdrop:
        break;
    }
    return honest;
  }

  AttackSpec spec_;
  const SecureKeys& keys_;
  const std::map<NodeId, Bytes>& history_;
  std::uint64_t ts_;
  std::size_t remaining_;
  std::optional<NodeId> target_;
  std::optional<crypto::SigningKey> attacker_;
  std::vector<Bytes> observed_;
  AttackOutcome outcome_;
};

}  // namespace

SecureRoundResult SecureSession::run_round(const Vector& d, std::uint64_t timestamp,
                                           const SecureRoundOptions& options) {
  if (static_cast<std::size_t>(d.size()) != topo_.size()) throw InputError("run_round: reading vector size mismatch");
  const auto& priv = keys_.collector;
  const auto& pub = priv.pub;
  const crypto::FixedPointCodec codec(pub.n, options.scale_bits);

  std::int64_t max_q = 0;
  double max_d = 0.0;
  for (NodeId id : topo_.post_order()) {
    for (auto q : quantized_coefficients(id, m_, options.scale_bits)) max_q = std::max<std::int64_t>(max_q, std::abs(q));
    max_d = std::max(max_d, std::abs(d(static_cast<Eigen::Index>(topo_.index_of(id)))));
  }
  codec.check_budget(topo_.post_order().size(), std::ldexp(static_cast<double>(max_q), -static_cast<int>(options.scale_bits)),
                     max_d);

  SecureRoundResult result;
  std::optional<Adversary> adversary;
  if (options.attack) adversary.emplace(*options.attack, keys_, history_, timestamp);

  std::map<NodeId, std::vector<Bytes>> outgoing;  // wires each node sends upward
  std::map<NodeId, Bytes> own_packets;
  std::set<NodeId> missing;

  const auto receive = [&](NodeId receiver, NodeInbox& inbox) {
    const auto deliver = [&](NodeId child, std::vector<Bytes> wires) {
      const Link link{child, receiver};
      std::vector<Bytes> altered;
      if (adversary) altered = adversary->intercept(link, wires);
      for (const auto& rej : inbox.ingest(wires, keys_.directory, timestamp, pub)) {
        result.rejections.push_back({link, rej.id, rej.reason});
        if (adversary && adversary->outcome().reason.empty() && !altered.empty()) {
          adversary->outcome().reason = rej.reason;
        }
      }
      for (const auto& a : altered) {
        const auto sender = peek_sender(a);
        const auto it = sender ? inbox.received_wires().find(*sender) : inbox.received_wires().end();
        if (it != inbox.received_wires().end() && it->second == a) adversary->outcome().rejected = false;
      }
    };
    for (NodeId c : topo_.children(receiver)) deliver(c, outgoing.at(c));
    for (std::size_t attempt = 0; attempt < options.max_retries && !inbox.missing().empty(); ++attempt) {
      for (NodeId c : topo_.children(receiver)) {
        std::vector<Bytes> again;
        for (const auto& w : outgoing.at(c)) {
          const auto s = peek_sender(w);
          if (s && inbox.missing().contains(*s)) again.push_back(w);
        }
        if (again.empty()) continue;
        result.resends += again.size();
        if (adversary && adversary->outcome().injected) adversary->outcome().resends += again.size();
        deliver(c, std::move(again));
      }
    }
    const auto still = inbox.missing();
    missing.insert(still.begin(), still.end());
  };

  if (adversary) adversary->outcome().rejected = true;

  for (NodeId id : topo_.post_order()) {
    NodeContext ctx;
    ctx.id = id;
    ctx.role = roles_.role(id);
    ctx.m = m_;
    ctx.scale_bits = options.scale_bits;
    ctx.signing = &keys_.signing.at(id);
    ctx.directory = &keys_.directory;
    ctx.collector_key = pub;
    ctx.topology = &topo_;
    ctx.roles = &roles_;

    NodeInbox inbox(expected_senders(topo_, roles_, id));
    receive(id, inbox);
    crypto::Rng rng(mix(seed_, timestamp, id));
    const double reading = d(static_cast<Eigen::Index>(topo_.index_of(id)));
    std::vector<Bytes> send;
    if (ctx.role == Role::kForwarder) {
      auto out = forwarder_step(ctx, inbox, reading, timestamp, rng);
      own_packets[id] = out.send_list.back();
      send = std::move(out.send_list);
    } else {
      auto out = aggregator_step(ctx, inbox, reading, timestamp, rng);
      own_packets[id] = out.packet;
      send.push_back(std::move(out.packet));
    }
    const std::size_t packets = ctx.role == Role::kForwarder ? send.size() : m_;
    result.cost += packets;
    for (const auto& w : send) result.wire_bytes += w.size();
    outgoing[id] = std::move(send);
  }

  NodeInbox top(expected_senders(topo_, roles_, kCollectorId));
  receive(kCollectorId, top);
  CollectorOutput assembled = collector_assemble(top, priv, topo_, roles_, m_, options.scale_bits);

  const auto unreachable = topo_.unreachable_ids();
  missing.insert(unreachable.begin(), unreachable.end());
  result.missing.assign(missing.begin(), missing.end());
  result.partial = assembled.partial || !missing.empty();
  result.y_int = std::move(assembled.y_int);
  result.y = std::move(assembled.y);

  if (adversary) {
    AttackOutcome& o = adversary->outcome();
    if (o.kind == AttackKind::kEavesdrop) {
      o.rejected = false;
      bool hides = !adversary->observed().empty();
      bool distinct = hides;
      for (const auto& w : adversary->observed()) {
        const SecurePacket p = parse_packet(w, pub);
        crypto::Rng rng(mix(seed_, timestamp, 0xEA5D));
        for (const auto& c : p.enc_data) {
          const mpz_class plain = crypto::decrypt(priv, c);
          hides = hides && c.value != plain;
          const Ciphertext a = crypto::encrypt(pub, plain, rng);
          const Ciphertext b = crypto::encrypt(pub, plain, rng);
          distinct = distinct && a.value != b.value && a.value != c.value && b.value != c.value;
        }
      }
      o.ciphertext_hides_plain = hides;
      o.ciphertexts_distinct = distinct;
    } else {
      o.rejected = o.rejected && o.injected;
      o.recovered = o.injected && !missing.contains(o.target);
    }
    result.attack = o;
  }
  history_ = std::move(own_packets);
  return result;
}

}  // namespace cmr
