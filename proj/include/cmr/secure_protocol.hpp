#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "cmr/crypto.hpp"
#include "cmr/topology.hpp"
#include "cmr/types.hpp"

namespace cmr {

/// Public signature keys of every meter, by ID.
struct KeyDirectory {
  std::map<NodeId, crypto::VerifyKey> keys;
};

/// Everything the collector and the meters hold. Only the collector ever
/// touches `collector`; meters see it through NodeContext as a public key.
struct SecureKeys {
  crypto::PaillierPrivateKey collector;
  std::map<NodeId, crypto::SigningKey> signing;
  KeyDirectory directory;
};

/// Seeded key material for the collector and every listed meter.
SecureKeys generate_keys(std::span<const NodeId> ids, std::size_t paillier_bits, std::size_t rsa_bits,
                         std::uint64_t seed);

/// One signed transmission: a forwarder packet holds one ciphertext, an
/// aggregator packet holds M ciphertexts under a single signature.
struct SecurePacket {
  NodeId sender = 0;
  std::vector<crypto::Ciphertext> enc_data;
  bool partial = false;
  crypto::Bytes signature;
};

/// Fixed-width big-endian ciphertexts concatenated in order.
crypto::Bytes ciphertext_bytes(const std::vector<crypto::Ciphertext>& enc_data, const crypto::PaillierPublicKey& pub);

/// First 64 bits of SHA-1(ciphertext bytes || T_S as 8-byte big-endian).
crypto::Digest64 packet_digest(const std::vector<crypto::Ciphertext>& enc_data, std::uint64_t timestamp,
                               const crypto::PaillierPublicKey& pub);

/// Builds and signs a packet for round `timestamp`.
SecurePacket make_packet(NodeId sender, std::vector<crypto::Ciphertext> enc_data, bool partial,
                         std::uint64_t timestamp, const crypto::SigningKey& key, const crypto::PaillierPublicKey& pub);

/// [u16 id][u16 count | partial << 15]([u16 len][ciphertext])*[u16 len][signature], big-endian.
crypto::Bytes serialize(const SecurePacket& packet, const crypto::PaillierPublicKey& pub);
/// Throws InputError on any layout violation.
SecurePacket parse_packet(std::span<const std::uint8_t> wire, const crypto::PaillierPublicKey& pub);

struct ValidationResult {
  bool ok = false;
  NodeId id = 0;  // as claimed by the packet (0 if unparseable)
  std::vector<crypto::Ciphertext> enc_data;
  bool partial = false;
  std::string reason;  // empty when ok
};

/// ok iff the packet parses, its ID is in `id_set` and the signature verifies
/// under directory[id] for timestamp T_S.
ValidationResult validate(std::span<const std::uint8_t> wire, const KeyDirectory& directory,
                          const std::set<NodeId>& id_set, std::uint64_t timestamp, const crypto::PaillierPublicKey& pub);

/// Received packets of one node in one round.
class NodeInbox {
 public:
  explicit NodeInbox(std::set<NodeId> expected);

  const std::set<NodeId>& expected() const { return expected_; }
  const std::set<NodeId>& received_ids() const { return received_ids_; }
  /// Validated wire packets keyed by sender.
  const std::map<NodeId, crypto::Bytes>& received_wires() const { return received_wires_; }
  const std::map<NodeId, ValidationResult>& received() const { return received_; }

  /// Validates every wire and keeps the first valid packet per sender. Returns the rejections.
  std::vector<ValidationResult> ingest(const std::vector<crypto::Bytes>& wires, const KeyDirectory& directory,
                                       std::uint64_t timestamp, const crypto::PaillierPublicKey& pub);
  /// expected \ received, ascending.
  std::set<NodeId> missing() const;

 private:
  std::set<NodeId> expected_;
  std::set<NodeId> received_ids_;
  std::map<NodeId, crypto::Bytes> received_wires_;
  std::map<NodeId, ValidationResult> received_;
};

/// What a meter knows: its own signing key, the public directory, the
/// collector's public Paillier key and the topology. No private Paillier key.
struct NodeContext {
  NodeId id = 0;
  Role role = Role::kForwarder;
  std::size_t m = 0;
  unsigned scale_bits = 16;
  const crypto::SigningKey* signing = nullptr;
  const KeyDirectory* directory = nullptr;
  crypto::PaillierPublicKey collector_key;
  const Topology* topology = nullptr;
  const RoleAssignment* roles = nullptr;
};

/// IDs a node (or the collector) expects to hear from: the whole subtree of
/// each forwarder child and each aggregator child itself.
std::set<NodeId> expected_senders(const Topology& topo, const RoleAssignment& roles, NodeId id);

/// Quantized coefficients round(S phi(id, l, m)) for l = 1..m.
std::vector<std::int64_t> quantized_coefficients(NodeId id, std::size_t m, unsigned scale_bits);

struct ForwarderOutput {
  std::vector<crypto::Bytes> send_list;  // received packets then the node's own
  std::set<NodeId> resend_requests;
};

ForwarderOutput forwarder_step(const NodeContext& node, const NodeInbox& inbox, double reading,
                               std::uint64_t timestamp, crypto::Rng& rng);

struct AggregatorOutput {
  crypto::Bytes packet;
  std::set<NodeId> resend_requests;
  bool partial = false;
};

/// Row l of the output is
///   prod_{f in forwarder origins} E(d_f)^{q_lf} * prod_{a in aggregator children} E_a,l * E(q_li d_i),
/// with negative q applied as the exponent n - |q|.
AggregatorOutput aggregator_step(const NodeContext& node, const NodeInbox& inbox, double reading,
                                 std::uint64_t timestamp, crypto::Rng& rng);

struct CollectorOutput {
  std::vector<mpz_class> y_int;  // signed, at scale S^2
  Vector y;
  bool partial = false;
};

/// Decrypts aggregator rows and self-weights forwarder-origin readings.
CollectorOutput collector_assemble(const NodeInbox& inbox, const crypto::PaillierPrivateKey& priv,
                                   const Topology& topo, const RoleAssignment& roles, std::size_t m,
                                   unsigned scale_bits);

/// sum_j q_lj round(S d_j) over reachable meters, in exact integers at scale S^2.
std::vector<mpz_class> quantized_plain_y(const Topology& topo, const Vector& d, std::size_t m, unsigned scale_bits);

enum class AttackKind { kTamper, kReplay, kImpersonate, kEavesdrop };

const char* attack_name(AttackKind kind);
/// "tamper", "replay", "impersonate" or "eavesdrop"; throws InputError otherwise.
AttackKind parse_attack(const std::string& name);

struct AttackSpec {
  AttackKind kind = AttackKind::kTamper;
  Link link;                      // transmission the adversary sits on
  std::optional<NodeId> target;   // packet sender to hit; default: first packet on the link
  std::size_t transmissions = 1;  // how many consecutive sends of the target are corrupted
  std::uint64_t seed = 1;         // bit position, attacker key
};

struct AttackOutcome {
  AttackKind kind = AttackKind::kTamper;
  Link link;
  NodeId target = 0;
  bool injected = false;         // a packet was actually altered
  bool rejected = false;         // every altered packet failed validation
  std::string reason;            // validation reason at the receiving hop
  std::size_t resends = 0;       // resend requests triggered
  bool recovered = false;        // honest copy accepted after resend
  bool ciphertexts_distinct = false;  // eavesdrop: equal plaintexts encrypt differently
  bool ciphertext_hides_plain = false;  // eavesdrop: no observed ciphertext equals its plaintext
};

struct SecureRoundOptions {
  unsigned scale_bits = 16;
  std::size_t max_retries = 2;
  std::optional<AttackSpec> attack;
};

struct RejectionRecord {
  Link link;
  NodeId claimed_id = 0;
  std::string reason;
};

struct SecureRoundResult {
  std::vector<mpz_class> y_int;
  Vector y;
  std::size_t cost = 0;
  std::size_t wire_bytes = 0;
  std::size_t resends = 0;
  bool partial = false;
  std::vector<NodeId> missing;
  std::vector<RejectionRecord> rejections;
  std::optional<AttackOutcome> attack;
};

/// Runs secure rounds over a fixed topology and key set. Keeps the previous
/// round's wire packets so that replay attacks use genuinely old traffic.
class SecureSession {
 public:
  SecureSession(const Topology& topo, std::size_t m, const SecureKeys& keys, std::uint64_t seed);

  /// T_S = timestamp. Throws OverflowError when the key is too small for the
  /// readings, InputError on size mismatch.
  SecureRoundResult run_round(const Vector& d, std::uint64_t timestamp, const SecureRoundOptions& options = {});

  const RoleAssignment& roles() const { return roles_; }

 private:
  const Topology& topo_;
  std::size_t m_;
  const SecureKeys& keys_;
  std::uint64_t seed_;
  RoleAssignment roles_;
  std::map<NodeId, crypto::Bytes> history_;
};

}  // namespace cmr
