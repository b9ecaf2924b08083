#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cmr/types.hpp"

namespace cmr {

struct MeterNode {
  NodeId id = 0;
  /// Primary parent; kCollectorId for nodes attached to the collector.
  /// nullopt once the reliability diagnostic has given up on the node.
  std::optional<NodeId> parent;
  /// Alternative parents in promotion order (primary excluded).
  std::vector<NodeId> candidates;
};

/// Rooted transmission tree. The collector is the root and is not a meter.
///
/// Node order is significant: it is the column order of the sensing matrix and
/// the element order of reading vectors.
class Topology {
 public:
  Topology() = default;
  /// Throws InputError unless reachable nodes form a tree rooted at the collector.
  explicit Topology(std::vector<MeterNode> nodes);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<MeterNode>& nodes() const { return nodes_; }
  const MeterNode& node(NodeId id) const { return nodes_[index_of(id)]; }
  std::size_t index_of(NodeId id) const;
  bool contains(NodeId id) const { return index_.contains(id); }
  std::vector<NodeId> ids() const;

  bool reachable(NodeId id) const { return reachable_[index_of(id)]; }
  std::vector<NodeId> unreachable_ids() const;

  /// Children in ascending ID order; pass kCollectorId for the root's children.
  const std::vector<NodeId>& children(NodeId id) const;
  /// Subtree size minus one, for reachable nodes.
  std::size_t descendant_count(NodeId id) const { return descendants_[index_of(id)]; }
  /// Every reachable descendant of id, ascending.
  std::vector<NodeId> subtree(NodeId id) const;
  /// Reachable nodes with children before their parent; siblings ascending.
  const std::vector<NodeId>& post_order() const { return post_order_; }
  /// Number of hops from the node to the collector (children of root = 1).
  std::size_t depth(NodeId id) const;

  friend bool operator==(const Topology& a, const Topology& b);

 private:
  void build();

  std::vector<MeterNode> nodes_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<bool> reachable_;
  std::unordered_map<NodeId, std::vector<NodeId>> children_;
  std::vector<std::size_t> descendants_;
  std::vector<NodeId> post_order_;
};

enum class Role { kForwarder, kAggregator, kCollector };

const char* role_name(Role role);

struct NodeRecord {
  NodeId id = 0;
  Role role = Role::kForwarder;
  std::size_t descendant_count = 0;
};

/// Role of every reachable meter plus the collector record (id 0).
class RoleAssignment {
 public:
  RoleAssignment(std::vector<NodeRecord> records, std::size_t m);

  Role role(NodeId id) const;
  bool is_aggregator(NodeId id) const { return role(id) == Role::kAggregator; }
  std::size_t m() const { return m_; }
  const std::vector<NodeRecord>& records() const { return records_; }

 private:
  std::vector<NodeRecord> records_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::size_t m_;
};

/// Forwarder iff descendant_count <= m - 1, Aggregator otherwise. Throws
/// InputError when m < 2.
RoleAssignment classify_roles(const Topology& topo, std::size_t m);

/// Uniform random attachment over IDs 1..n: node k picks its parent uniformly
/// from the collector and nodes 1..k-1. Up to two extra earlier nodes become
/// candidates, so promotion can never create a cycle.
Topology gen_random_tree(std::size_t n, std::uint64_t seed);

/// Complete p-ary tree with the collector at layer 0 and meters on layers 1..L,
/// IDs assigned breadth-first from 1.
Topology gen_pary_tree(std::size_t p, std::size_t layers);

/// 1 <- 2 <- ... <- n, node 1 attached to the collector.
Topology gen_chain(std::size_t n);

/// n meters all attached to the collector.
Topology gen_star(std::size_t n);

enum class LinkState { kOk, kDelayed, kDead };

struct Link {
  NodeId child = 0;
  NodeId parent = 0;
  auto operator<=>(const Link&) const = default;
};

struct LinkFailure {
  Link link;
  LinkState state = LinkState::kDead;
};

struct DiagnosisResult {
  Topology ready;
  std::vector<NodeId> unreachable;  // ascending
  std::size_t test_rounds = 0;
  std::vector<std::pair<NodeId, NodeId>> promotions;  // (node, new parent) in order
};

/// Reliability diagnostic: each test round, every node whose primary link is
/// dead or delayed broadcasts the failure and promotes its next candidate.
/// Candidates that would close a cycle are skipped. Nodes that run out of
/// candidates, and nodes stranded below them, are reported unreachable and
/// left detached in the ready topology.
DiagnosisResult diagnose_links(const Topology& candidate, const std::vector<LinkFailure>& failures);

std::string topology_to_json(const Topology& topo);
Topology topology_from_json(const std::string& text);
void save_topology(const Topology& topo, const std::filesystem::path& path);
Topology load_topology(const std::filesystem::path& path);

}  // namespace cmr
