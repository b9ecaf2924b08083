#include "cmr/topology.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cmr/error.hpp"
#include "random.hpp"

namespace cmr {

Topology::Topology(std::vector<MeterNode> nodes) : nodes_(std::move(nodes)) { build(); }

void Topology::build() {
  index_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const NodeId id = nodes_[i].id;
    if (id == kCollectorId) throw InputError("topology: meter id 0 is reserved for the collector");
    if (!index_.emplace(id, i).second) throw InputError("topology: duplicate node id " + std::to_string(id));
  }
  std::unordered_map<NodeId, std::vector<NodeId>> all_children;
  for (const auto& n : nodes_) {
    if (!n.parent) continue;
    if (*n.parent != kCollectorId && !index_.contains(*n.parent)) {
      throw InputError("topology: node " + std::to_string(n.id) + " has unknown parent " +
                       std::to_string(*n.parent));
    }
    if (*n.parent == n.id) throw InputError("topology: self loop at node " + std::to_string(n.id));
    all_children[*n.parent].push_back(n.id);
  }
  for (auto& [_, c] : all_children) std::sort(c.begin(), c.end());

  reachable_.assign(nodes_.size(), false);
  children_.clear();
  descendants_.assign(nodes_.size(), 0);
  post_order_.clear();
  post_order_.reserve(nodes_.size());

  // Iterative DFS from the collector; children are visited in ascending order.
  struct Frame {
    NodeId id;
    std::size_t next;
  };
  std::vector<Frame> stack{{kCollectorId, 0}};
  children_[kCollectorId] = all_children[kCollectorId];
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& kids = all_children[f.id];
    if (f.next < kids.size()) {
      const NodeId child = kids[f.next++];
      const std::size_t ci = index_.at(child);
      if (reachable_[ci]) throw InputError("topology: cycle through node " + std::to_string(child));
      reachable_[ci] = true;
      children_[child] = all_children[child];
      stack.push_back({child, 0});
    } else {
      if (f.id != kCollectorId) {
        const std::size_t i = index_.at(f.id);
        std::size_t count = 0;
        for (NodeId c : kids) count += descendants_[index_.at(c)] + 1;
        descendants_[i] = count;
        post_order_.push_back(f.id);
      }
      stack.pop_back();
    }
  }

  // Unreached nodes must hang below a detached node; anything else is a cycle.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (reachable_[i] || !nodes_[i].parent) continue;
    std::unordered_set<NodeId> seen{nodes_[i].id};
    std::optional<NodeId> p = nodes_[i].parent;
    while (p && *p != kCollectorId) {
      if (!seen.insert(*p).second) throw InputError("topology: cycle through node " + std::to_string(*p));
      p = nodes_[index_.at(*p)].parent;
    }
  }
}

std::size_t Topology::index_of(NodeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw InputError("topology: unknown node " + std::to_string(id));
  return it->second;
}

std::vector<NodeId> Topology::ids() const {
  std::vector<NodeId> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.push_back(n.id);
  return out;
}

std::vector<NodeId> Topology::unreachable_ids() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!reachable_[i]) out.push_back(nodes_[i].id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<NodeId>& Topology::children(NodeId id) const {
  static const std::vector<NodeId> kNone;
  const auto it = children_.find(id);
  return it == children_.end() ? kNone : it->second;
}

std::vector<NodeId> Topology::subtree(NodeId id) const {
  std::vector<NodeId> out;
  std::vector<NodeId> stack(children(id).begin(), children(id).end());
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    out.push_back(n);
    for (NodeId c : children(n)) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t Topology::depth(NodeId id) const {
  std::size_t d = 0;
  std::optional<NodeId> p = id;
  while (p && *p != kCollectorId) {
    ++d;
    p = node(*p).parent;
    if (d > nodes_.size()) break;
  }
  return d;
}

bool operator==(const Topology& a, const Topology& b) {
  if (a.nodes_.size() != b.nodes_.size()) return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& x = a.nodes_[i];
    const auto& y = b.nodes_[i];
    if (x.id != y.id || x.parent != y.parent || x.candidates != y.candidates) return false;
  }
  return true;
}

const char* role_name(Role role) {
  switch (role) {
    case Role::kForwarder:
      return "forwarder";
    case Role::kAggregator:
      return "aggregator";
    case Role::kCollector:
      return "collector";
  }
  return "?";
}

RoleAssignment::RoleAssignment(std::vector<NodeRecord> records, std::size_t m)
    : records_(std::move(records)), m_(m) {
  for (std::size_t i = 0; i < records_.size(); ++i) index_.emplace(records_[i].id, i);
}

Role RoleAssignment::role(NodeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw InputError("roles: node " + std::to_string(id) + " not classified");
  return records_[it->second].role;
}

RoleAssignment classify_roles(const Topology& topo, std::size_t m) {
  if (m < 2) throw InputError("classify_roles: M must be at least 2");
  std::vector<NodeRecord> records;
  records.reserve(topo.size() + 1);
  records.push_back({kCollectorId, Role::kCollector, topo.post_order().size()});
  for (const auto& n : topo.nodes()) {
    if (!topo.reachable(n.id)) continue;
    const std::size_t desc = topo.descendant_count(n.id);
    records.push_back({n.id, desc + 1 <= m ? Role::kForwarder : Role::kAggregator, desc});
  }
  return RoleAssignment(std::move(records), m);
}

Topology gen_random_tree(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<MeterNode> nodes;
  nodes.reserve(n);
  for (std::size_t k = 1; k <= n; ++k) {
    // Options: collector (0) and nodes 1..k-1.
    const auto pick = [&rng, k] { return static_cast<NodeId>(detail::uniform_index(rng, k)); };
    MeterNode node{static_cast<NodeId>(k), pick(), {}};
    const std::size_t want = std::min<std::size_t>(2, k - 1);
    for (int attempt = 0; node.candidates.size() < want && attempt < 16; ++attempt) {
      const NodeId c = pick();
      if (c == *node.parent) continue;
      if (std::find(node.candidates.begin(), node.candidates.end(), c) != node.candidates.end()) continue;
      node.candidates.push_back(c);
    }
    nodes.push_back(std::move(node));
  }
  return Topology(std::move(nodes));
}

Topology gen_pary_tree(std::size_t p, std::size_t layers) {
  if (p < 2) throw InputError("gen_pary_tree: p must be at least 2");
  if (layers < 1) throw InputError("gen_pary_tree: need at least one layer");
  std::vector<MeterNode> nodes;
  std::vector<NodeId> frontier{kCollectorId};
  NodeId next = 1;
  for (std::size_t layer = 1; layer <= layers; ++layer) {
    std::vector<NodeId> fresh;
    for (NodeId parent : frontier) {
      for (std::size_t c = 0; c < p; ++c) {
        nodes.push_back({next, parent, {}});
        fresh.push_back(next++);
      }
    }
    frontier = std::move(fresh);
  }
  return Topology(std::move(nodes));
}

Topology gen_chain(std::size_t n) {
  std::vector<MeterNode> nodes;
  for (std::size_t k = 1; k <= n; ++k) nodes.push_back({static_cast<NodeId>(k), static_cast<NodeId>(k - 1), {}});
  return Topology(std::move(nodes));
}

Topology gen_star(std::size_t n) {
  std::vector<MeterNode> nodes;
  for (std::size_t k = 1; k <= n; ++k) nodes.push_back({static_cast<NodeId>(k), kCollectorId, {}});
  return Topology(std::move(nodes));
}

DiagnosisResult diagnose_links(const Topology& candidate, const std::vector<LinkFailure>& failures) {
  std::map<Link, LinkState> state;
  for (const auto& f : failures) state[f.link] = f.state;
  const auto link_ok = [&state](NodeId child, NodeId parent) {
    const auto it = state.find({child, parent});
    return it == state.end() || it->second == LinkState::kOk;
  };

  std::vector<MeterNode> nodes = candidate.nodes();
  std::unordered_map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index.emplace(nodes[i].id, i);

  // True when walking up from `from` reaches `target` under the current parents.
  const auto reaches = [&](NodeId from, NodeId target) {
    std::optional<NodeId> p = from;
    for (std::size_t hops = 0; p && *p != kCollectorId && hops <= nodes.size(); ++hops) {
      if (*p == target) return true;
      p = nodes[index.at(*p)].parent;
    }
    return false;
  };

  DiagnosisResult result;
  bool changed = true;
  while (changed) {
    changed = false;
    ++result.test_rounds;
    // Failures detected in this test round, broadcast before anyone promotes.
    std::vector<std::size_t> failed;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (!n.parent) continue;
      const bool parent_detached = *n.parent != kCollectorId && !nodes[index.at(*n.parent)].parent;
      if (!link_ok(n.id, *n.parent) || parent_detached) failed.push_back(i);
    }
    for (std::size_t i : failed) {
      MeterNode& n = nodes[i];
      changed = true;
      std::optional<NodeId> promoted;
      while (!n.candidates.empty()) {
        const NodeId c = n.candidates.front();
        n.candidates.erase(n.candidates.begin());
        const bool detached = c != kCollectorId && !nodes[index.at(c)].parent;
        if (!detached && !reaches(c, n.id)) {
          promoted = c;
          break;
        }
      }
      n.parent = promoted;
      if (promoted) result.promotions.emplace_back(n.id, *promoted);
    }
  }
  result.ready = Topology(std::move(nodes));
  result.unreachable = result.ready.unreachable_ids();
  return result;
}

std::string topology_to_json(const Topology& topo) {
  nlohmann::json j;
  j["root"] = kCollectorId;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : topo.nodes()) {
    nlohmann::json node;
    node["id"] = n.id;
    node["parent"] = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
    node["candidates"] = n.candidates;
    j["nodes"].push_back(std::move(node));
  }
  return j.dump(2);
}

Topology topology_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("topology json: ") + e.what());
  }
  try {
    if (j.at("root").get<NodeId>() != kCollectorId) throw InputError("topology json: root must be 0");
    std::vector<MeterNode> nodes;
    for (const auto& n : j.at("nodes")) {
      MeterNode node;
      node.id = n.at("id").get<NodeId>();
      if (!n.at("parent").is_null()) node.parent = n.at("parent").get<NodeId>();
      if (n.contains("candidates")) node.candidates = n.at("candidates").get<std::vector<NodeId>>();
      nodes.push_back(std::move(node));
    }
    return Topology(std::move(nodes));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("topology json: ") + e.what());
  }
}

void save_topology(const Topology& topo, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << topology_to_json(topo) << '\n';
}

Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return topology_from_json(ss.str());
}

}  // namespace cmr
