#include <cmath>
#include <random>
#include <type_traits>

#include <gtest/gtest.h>

#include "cmr/coeff_stream.hpp"
#include "cmr/error.hpp"
#include "cmr/reading_protocol.hpp"
#include "cmr/secure_protocol.hpp"
#include "cmr/topology.hpp"

namespace {

using cmr::NodeId;
using cmr::Vector;
namespace c = cmr::crypto;

// A meter's view carries only the collector's public key.
static_assert(std::is_same_v<decltype(cmr::NodeContext::collector_key), c::PaillierPublicKey>);
static_assert(!std::is_base_of_v<c::PaillierPrivateKey, cmr::NodeContext>);
static_assert(!std::is_constructible_v<cmr::NodeContext, c::PaillierPrivateKey>);

std::vector<NodeId> id_range(NodeId n) {
  std::vector<NodeId> ids(n);
  for (NodeId i = 0; i < n; ++i) ids[i] = i + 1;
  return ids;
}

class SecureFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto ids = id_range(64);
    keys_ = new cmr::SecureKeys(cmr::generate_keys(ids, 512, 512, 7));
  }
  static void TearDownTestSuite() { delete keys_; }
  static const cmr::SecureKeys& keys() { return *keys_; }
  static const c::PaillierPublicKey& pub() { return keys_->collector.pub; }

  static cmr::NodeContext context(NodeId id, const cmr::Topology& topo, const cmr::RoleAssignment& roles) {
    cmr::NodeContext ctx;
    ctx.id = id;
    ctx.role = roles.role(id);
    ctx.m = roles.m();
    ctx.signing = &keys().signing.at(id);
    ctx.directory = &keys().directory;
    ctx.collector_key = pub();
    ctx.topology = &topo;
    ctx.roles = &roles;
    return ctx;
  }

  static c::Bytes forwarder_packet(NodeId id, double reading, std::uint64_t ts, c::Rng& rng) {
    const c::FixedPointCodec codec(pub().n, 16);
    std::vector<c::Ciphertext> ct{c::encrypt(pub(), codec.encode(reading), rng)};
    return cmr::serialize(cmr::make_packet(id, ct, false, ts, keys().signing.at(id), pub()), pub());
  }

 private:
  static cmr::SecureKeys* keys_;
};
cmr::SecureKeys* SecureFixture::keys_ = nullptr;

Vector readings(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> g(6.2, 0.5);
  Vector d(static_cast<Eigen::Index>(n));
  for (auto& v : d) v = g(rng);
  return d;
}

TEST_F(SecureFixture, WireLayout) {
  c::Rng rng(1);
  const auto wire = forwarder_packet(0x21, 5.0, 3, rng);
  const std::size_t width = pub().ciphertext_bytes();
  EXPECT_EQ(wire[0], 0x00);
  EXPECT_EQ(wire[1], 0x21);
  EXPECT_EQ(wire[2], 0x00);
  EXPECT_EQ(wire[3], 0x01);
  EXPECT_EQ((wire[4] << 8) | wire[5], static_cast<int>(width));
  const std::size_t sig_at = 6 + width;
  const std::size_t sig_len = static_cast<std::size_t>((wire[sig_at] << 8) | wire[sig_at + 1]);
  EXPECT_EQ(wire.size(), sig_at + 2 + sig_len);
  const auto p = cmr::parse_packet(wire, pub());
  EXPECT_EQ(p.sender, 0x21u);
  EXPECT_FALSE(p.partial);
  EXPECT_EQ(cmr::serialize(p, pub()), wire);
}

TEST_F(SecureFixture, PartialFlagUsesHighBitOfCount) {
  c::Rng rng(2);
  std::vector<c::Ciphertext> ct{c::encrypt(pub(), 1, rng), c::encrypt(pub(), 2, rng)};
  const auto p = cmr::make_packet(4, ct, true, 1, keys().signing.at(4), pub());
  const auto wire = cmr::serialize(p, pub());
  EXPECT_EQ(wire[2], 0x80);
  EXPECT_EQ(wire[3], 0x02);
  const auto back = cmr::parse_packet(wire, pub());
  EXPECT_TRUE(back.partial);
  EXPECT_EQ(back.enc_data.size(), 2u);
}

TEST_F(SecureFixture, ParseRejectsMalformed) {
  c::Rng rng(3);
  auto wire = forwarder_packet(3, 1.0, 1, rng);
  EXPECT_THROW(cmr::parse_packet(std::span(wire).first(3), pub()), cmr::InputError);
  wire.push_back(0);
  EXPECT_THROW(cmr::parse_packet(wire, pub()), cmr::InputError);
}

TEST_F(SecureFixture, ValidateHonestForeignAndTampered) {
  c::Rng rng(4);
  const auto wire = forwarder_packet(5, 12.5, 9, rng);
  const auto ok = cmr::validate(wire, keys().directory, {5, 6}, 9, pub());
  EXPECT_TRUE(ok.ok);
  EXPECT_EQ(ok.id, 5u);
  EXPECT_TRUE(ok.reason.empty());
  const auto foreign = cmr::validate(wire, keys().directory, {6}, 9, pub());
  EXPECT_FALSE(foreign.ok);
  EXPECT_EQ(foreign.id, 5u);
  EXPECT_EQ(foreign.enc_data.size(), 1u);
  EXPECT_FALSE(cmr::validate(wire, keys().directory, {5}, 10, pub()).ok);
  std::mt19937_64 g(4);
  for (int t = 0; t < 20; ++t) {
    auto bad = wire;
    const std::size_t byte = 6 + g() % pub().ciphertext_bytes();
    bad[byte] ^= static_cast<std::uint8_t>(1u << (g() % 8));
    const auto r = cmr::validate(bad, keys().directory, {5}, 9, pub());
    EXPECT_FALSE(r.ok);
    EXPECT_FALSE(r.reason.empty());
  }
  const c::Bytes junk{0, 5, 1};
  const auto j = cmr::validate(junk, keys().directory, {5}, 9, pub());
  EXPECT_FALSE(j.ok);
  EXPECT_NE(j.reason.find("unparseable"), std::string::npos);
}

TEST_F(SecureFixture, InboxKeepsFirstValidPacket) {
  c::Rng rng(5);
  cmr::NodeInbox inbox({2, 3});
  const auto a = forwarder_packet(2, 1.0, 1, rng);
  const auto b = forwarder_packet(2, 2.0, 1, rng);
  const auto rej = inbox.ingest({a, b, forwarder_packet(4, 1.0, 1, rng)}, keys().directory, 1, pub());
  EXPECT_EQ(rej.size(), 1u);
  EXPECT_EQ(inbox.received_wires().at(2), a);
  EXPECT_EQ(inbox.missing(), (std::set<NodeId>{3}));
}

TEST_F(SecureFixture, ForwarderLeafSendsOwnPacket) {
  const auto topo = cmr::gen_chain(3);
  const auto roles = cmr::classify_roles(topo, 3);
  const auto ctx = context(3, topo, roles);
  cmr::NodeInbox inbox(cmr::expected_senders(topo, roles, 3));
  c::Rng rng(6);
  const auto out = cmr::forwarder_step(ctx, inbox, 42.0, 1, rng);
  ASSERT_EQ(out.send_list.size(), 1u);
  EXPECT_TRUE(out.resend_requests.empty());
  const auto v = cmr::validate(out.send_list[0], keys().directory, {3}, 1, pub());
  ASSERT_TRUE(v.ok);
  const c::FixedPointCodec codec(pub().n, 16);
  EXPECT_EQ(codec.decode(c::decrypt(keys().collector, v.enc_data[0])), 42.0);
}

TEST_F(SecureFixture, ForwarderRelaysAndRequestsResend) {
  // Node 1 with children 2 and 3.
  const cmr::Topology t({{1, 0, {}}, {2, 1, {}}, {3, 1, {}}});
  const auto roles = cmr::classify_roles(t, 5);
  const auto ctx = context(1, t, roles);
  c::Rng rng(7);
  cmr::NodeInbox inbox(cmr::expected_senders(t, roles, 1));
  auto tampered = forwarder_packet(3, 1.0, 1, rng);
  tampered[10] ^= 1;
  inbox.ingest({forwarder_packet(2, 1.0, 1, rng), tampered}, keys().directory, 1, pub());
  const auto out = cmr::forwarder_step(ctx, inbox, 1.0, 1, rng);
  EXPECT_EQ(out.resend_requests, (std::set<NodeId>{3}));
  EXPECT_EQ(out.send_list.size(), inbox.received().size() + 1);
  EXPECT_THROW(cmr::aggregator_step(ctx, inbox, 1.0, 1, rng), cmr::InputError);
}

TEST_F(SecureFixture, AggregatorWithZeroReadingPassesChildThrough) {
  // 1 <- 2 <- 3 <- 4 under M=2: nodes 1 and 2 aggregate.
  const auto topo = cmr::gen_chain(4);
  const auto roles = cmr::classify_roles(topo, 2);
  ASSERT_TRUE(roles.is_aggregator(1));
  ASSERT_TRUE(roles.is_aggregator(2));
  c::Rng rng(8);
  std::vector<c::Ciphertext> rows{c::encrypt(pub(), 1111, rng), c::encrypt(pub(), pub().n - 7, rng)};
  const auto child = cmr::serialize(cmr::make_packet(2, rows, false, 1, keys().signing.at(2), pub()), pub());
  cmr::NodeInbox inbox(cmr::expected_senders(topo, roles, 1));
  ASSERT_EQ(inbox.expected(), (std::set<NodeId>{2}));
  inbox.ingest({child}, keys().directory, 1, pub());
  const auto out = cmr::aggregator_step(context(1, topo, roles), inbox, 0.0, 1, rng);
  EXPECT_FALSE(out.partial);
  const auto p = cmr::parse_packet(out.packet, pub());
  ASSERT_EQ(p.enc_data.size(), 2u);
  EXPECT_EQ(c::decrypt(keys().collector, p.enc_data[0]), 1111);
  EXPECT_EQ(c::decrypt(keys().collector, p.enc_data[1]), pub().n - 7);
}

TEST_F(SecureFixture, AggregatorRowsEqualPlaintextAccumulation) {
  // Node 1 aggregates forwarders 2, 3, 4 under M=2.
  const cmr::Topology t({{1, 0, {}}, {2, 1, {}}, {3, 1, {}}, {4, 1, {}}});
  const auto roles = cmr::classify_roles(t, 2);
  ASSERT_TRUE(roles.is_aggregator(1));
  c::Rng rng(9);
  const std::map<NodeId, double> d{{1, 17.25}, {2, 3.5}, {3, 812.0}, {4, 0.125}};
  cmr::NodeInbox inbox(cmr::expected_senders(t, roles, 1));
  inbox.ingest({forwarder_packet(2, d.at(2), 1, rng), forwarder_packet(3, d.at(3), 1, rng),
                forwarder_packet(4, d.at(4), 1, rng)},
               keys().directory, 1, pub());
  const auto out = cmr::aggregator_step(context(1, t, roles), inbox, d.at(1), 1, rng);
  const auto p = cmr::parse_packet(out.packet, pub());
  const c::FixedPointCodec codec(pub().n, 16);
  for (std::size_t l = 0; l < 2; ++l) {
    mpz_class expect = 0;
    for (const auto& [id, v] : d) {
      expect += mpz_class(static_cast<long>(cmr::quantized_coefficients(id, 2, 16)[l])) *
                mpz_class(std::lround(std::ldexp(v, 16)));
    }
    EXPECT_EQ(codec.to_signed(c::decrypt(keys().collector, p.enc_data[l])), expect);
  }
}

TEST_F(SecureFixture, AllForwarderNetworkAssemblesAtCollector) {
  const auto topo = cmr::gen_star(6);
  cmr::SecureSession session(topo, 3, keys(), 1);
  const Vector d = readings(6, 1);
  const auto r = session.run_round(d, 1);
  EXPECT_EQ(r.y_int, cmr::quantized_plain_y(topo, d, 3, 16));
  EXPECT_EQ(r.cost, 6u);
  EXPECT_FALSE(r.partial);
}

TEST_F(SecureFixture, SecureEqualsQuantizedPlainOnRandomTrees) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const std::size_t n = 10 + 8 * seed;
    const auto topo = cmr::gen_random_tree(n, seed);
    const std::size_t m = static_cast<std::size_t>(std::lround(0.3 * static_cast<double>(n)));
    cmr::SecureSession session(topo, m, keys(), seed);
    const Vector d = readings(n, seed);
    const auto r = session.run_round(d, 1);
    EXPECT_EQ(r.y_int, cmr::quantized_plain_y(topo, d, m, 16));
    EXPECT_TRUE(r.rejections.empty());
    EXPECT_EQ(r.resends, 0u);
    EXPECT_EQ(r.cost, cmr::run_plain_round(topo, d, m).cost);
    const Vector y = cmr::run_plain_round(topo, d, m).y;
    EXPECT_LE((r.y - y).norm(), 1e-3 * y.norm());
  }
}

TEST_F(SecureFixture, OverflowWhenKeyTooSmall) {
  const auto small = cmr::generate_keys(id_range(4), 64, 512, 3);
  const auto topo = cmr::gen_chain(4);
  cmr::SecureSession session(topo, 2, small, 1);
  EXPECT_THROW(session.run_round(readings(4, 2) * 1e8, 1), cmr::OverflowError);
}

class AttackTest : public SecureFixture, public ::testing::WithParamInterface<cmr::AttackKind> {};

TEST_P(AttackTest, RejectedAndYUnaffected) {
  const auto topo = cmr::gen_random_tree(24, 5);
  const std::size_t m = 7;
  cmr::SecureSession session(topo, m, keys(), 2);
  const Vector d0 = readings(24, 3);
  const Vector d1 = readings(24, 4);
  session.run_round(d0, 1);
  std::mt19937_64 g(static_cast<std::uint64_t>(GetParam()));
  for (int trial = 0; trial < 6; ++trial) {
    const NodeId victim = topo.post_order()[g() % topo.post_order().size()];
    cmr::SecureRoundOptions opt;
    opt.attack = cmr::AttackSpec{GetParam(), {victim, *topo.node(victim).parent}, victim, 1, g()};
    const auto r = session.run_round(d1, 2 + static_cast<std::uint64_t>(trial), opt);
    ASSERT_TRUE(r.attack.has_value());
    EXPECT_TRUE(r.attack->injected);
    EXPECT_TRUE(r.attack->rejected) << r.attack->reason;
    EXPECT_TRUE(r.attack->recovered);
    EXPECT_GE(r.attack->resends, 1u);
    EXPECT_EQ(r.y_int, cmr::quantized_plain_y(topo, d1, m, 16));
    EXPECT_FALSE(r.partial);
    for (const auto& rej : r.rejections) EXPECT_EQ(rej.link.child, victim);
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, AttackTest,
                         ::testing::Values(cmr::AttackKind::kTamper, cmr::AttackKind::kReplay,
                                           cmr::AttackKind::kImpersonate));

TEST_F(SecureFixture, PersistentTamperingExhaustsRetries) {
  const auto topo = cmr::gen_chain(5);
  cmr::SecureSession session(topo, 2, keys(), 3);
  cmr::SecureRoundOptions opt;
  opt.attack = cmr::AttackSpec{cmr::AttackKind::kTamper, {5, 4}, 5, 10, 1};
  const auto r = session.run_round(readings(5, 5), 1, opt);
  EXPECT_TRUE(r.partial);
  EXPECT_EQ(r.missing, (std::vector<NodeId>{5}));
  EXPECT_EQ(r.resends, 2u);
  EXPECT_FALSE(r.attack->recovered);
}

TEST_F(SecureFixture, EavesdropperSeesOnlyCiphertext) {
  const auto topo = cmr::gen_random_tree(12, 6);
  cmr::SecureSession session(topo, 4, keys(), 4);
  const NodeId victim = topo.post_order().front();
  cmr::SecureRoundOptions opt;
  opt.attack = cmr::AttackSpec{cmr::AttackKind::kEavesdrop, {victim, *topo.node(victim).parent}, victim, 1, 1};
  const Vector d = readings(12, 6);
  const auto r = session.run_round(d, 1, opt);
  ASSERT_TRUE(r.attack.has_value());
  EXPECT_TRUE(r.attack->ciphertexts_distinct);
  EXPECT_TRUE(r.attack->ciphertext_hides_plain);
  EXPECT_TRUE(r.rejections.empty());
  EXPECT_EQ(r.y_int, cmr::quantized_plain_y(topo, d, 4, 16));
}

TEST(AttackNames, RoundTrip) {
  for (auto k : {cmr::AttackKind::kTamper, cmr::AttackKind::kReplay, cmr::AttackKind::kImpersonate,
                 cmr::AttackKind::kEavesdrop}) {
    EXPECT_EQ(cmr::parse_attack(cmr::attack_name(k)), k);
  }
  EXPECT_THROW(cmr::parse_attack("ddos"), cmr::InputError);
}

}  // namespace
