#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmr/topology.hpp"
#include "cmr/types.hpp"

namespace cmr {

struct RoundResult {
  /// Collector measurements y_l (empty for a full round).
  Vector y;
  /// Plaintext readings that reached the collector, in topology order
  /// (zero for nodes whose reading arrived only inside aggregates or not at all).
  Vector collected;
  std::size_t cost = 0;
  std::map<Link, std::size_t> per_link;
  std::map<NodeId, double> raw_received;
  /// True when some meters were unreachable; their columns are zero in y.
  bool partial = false;
  std::vector<NodeId> missing;
  /// Coefficients each aggregator generated, keyed by the node they weight;
  /// filled only when PlainRoundOptions::capture_coefficients is set.
  std::map<NodeId, std::vector<double>> captured;
};

struct PlainRoundOptions {
  /// Replace each phi by round(2^bits phi) / 2^bits before use.
  std::optional<unsigned> quantize_bits;
  bool capture_coefficients = false;
};

/// One round of compressed reading. Forwarders relay every plaintext reading
/// from their subtree plus their own; aggregators send M weighted sums
///   m_i^(l) = sum_{j in plaintexts + self} phi_lj d_j + sum_{c in aggregator children} m_c^(l),
/// summing plaintext terms by ascending node ID and then child aggregates by
/// ascending child ID. Each plaintext reading and each row sum costs one packet
/// on the link it crosses. `d` follows topo.ids() order.
RoundResult run_plain_round(const Topology& topo, const Vector& d, std::size_t m,
                            const PlainRoundOptions& options = {});

/// Bootstrap round: every node forwards plaintext, cost = sum (descendants + 1).
RoundResult run_full_round(const Topology& topo, const Vector& d);

struct CostBounds {
  std::size_t min = 0;
  std::size_t max = 0;  // M (N - M/2 + 1/2)
};

/// Throws InputError unless 2 <= M <= N.
CostBounds cost_bounds(std::size_t n, std::size_t m);

/// Closed-form plain-round cost on the complete p-ary tree with L meter layers.
std::size_t pary_cost(std::size_t p, std::size_t layers, std::size_t m);

/// N * M: every link carries M packets.
std::size_t baseline_cost(std::size_t n, std::size_t m);

/// sum over reachable meters of (descendants + 1).
std::size_t non_aggregation_cost(const Topology& topo);

/// One JSON line: {"round":r,"cost":c,"per_link":{"child->parent":k,...},"y":[...]}.
std::string round_log_line(std::size_t round, const RoundResult& result);

}  // namespace cmr
