#include "cmr/reading_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "cmr/coeff_stream.hpp"
#include "cmr/crypto.hpp"
#include "cmr/error.hpp"

namespace cmr {
namespace {

struct Outbox {
  std::vector<std::pair<NodeId, double>> plaintext;  // forwarder payload
  std::vector<double> aggregate;                     // aggregator payload (size M)
  bool is_aggregate = false;
};

class CoefficientSource {
 public:
  CoefficientSource(std::size_t m, const PlainRoundOptions& options) : m_(m), options_(options) {}

  const std::vector<double>& operator()(NodeId id) {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    std::vector<double> z = coeff_stream(id, m_);
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m_));
    for (double& v : z) {
      v *= inv_sqrt_m;
      if (options_.quantize_bits) {
        const int bits = static_cast<int>(*options_.quantize_bits);
        v = std::ldexp(static_cast<double>(crypto::quantize_coeff(v, *options_.quantize_bits)), -bits);
      }
    }
    return cache_.emplace(id, std::move(z)).first->second;
  }

 private:
  std::size_t m_;
  const PlainRoundOptions& options_;
  std::unordered_map<NodeId, std::vector<double>> cache_;
};

/// Weighted sum over plaintext terms (ascending id) then child aggregates (ascending child id).
std::vector<double> combine(std::vector<std::pair<NodeId, double>> plaintext,
                            const std::vector<const std::vector<double>*>& child_aggregates, std::size_t m,
                            CoefficientSource& coeffs, RoundResult* capture) {
  std::sort(plaintext.begin(), plaintext.end());
  std::vector<double> out(m, 0.0);
  for (const auto& [id, reading] : plaintext) {
    const auto& phi = coeffs(id);
    if (capture) capture->captured[id] = phi;
    for (std::size_t l = 0; l < m; ++l) out[l] += phi[l] * reading;
  }
  for (const auto* agg : child_aggregates) {
    for (std::size_t l = 0; l < m; ++l) out[l] += (*agg)[l];
  }
  return out;
}

std::vector<NodeId> missing_nodes(const Topology& topo) { return topo.unreachable_ids(); }

}  // namespace

RoundResult run_plain_round(const Topology& topo, const Vector& d, std::size_t m,
                            const PlainRoundOptions& options) {
  if (static_cast<std::size_t>(d.size()) != topo.size()) throw InputError("run_plain_round: reading vector size mismatch");
  const RoleAssignment roles = classify_roles(topo, m);
  CoefficientSource coeffs(m, options);
  RoundResult result;
  result.missing = missing_nodes(topo);
  result.partial = !result.missing.empty();
  result.collected = Vector::Zero(d.size());
  RoundResult* capture = options.capture_coefficients ? &result : nullptr;

  std::unordered_map<NodeId, Outbox> outbox;
  const auto reading = [&](NodeId id) { return d(static_cast<Eigen::Index>(topo.index_of(id))); };

  for (NodeId id : topo.post_order()) {
    Outbox box;
    const auto& kids = topo.children(id);
    if (roles.role(id) == Role::kForwarder) {
      box.plaintext.emplace_back(id, reading(id));
      for (NodeId c : kids) {
        auto& child = outbox.at(c);
        box.plaintext.insert(box.plaintext.end(), child.plaintext.begin(), child.plaintext.end());
      }
    } else {
      std::vector<std::pair<NodeId, double>> plain{{id, reading(id)}};
      std::vector<const std::vector<double>*> aggs;
      for (NodeId c : kids) {
        const auto& child = outbox.at(c);
        if (child.is_aggregate) {
          aggs.push_back(&child.aggregate);
        } else {
          plain.insert(plain.end(), child.plaintext.begin(), child.plaintext.end());
        }
      }
      box.aggregate = combine(std::move(plain), aggs, m, coeffs, capture);
      box.is_aggregate = true;
    }
    const std::size_t packets = box.is_aggregate ? m : box.plaintext.size();
    result.per_link[{id, *topo.node(id).parent}] = packets;
    result.cost += packets;
    outbox.emplace(id, std::move(box));
  }

  // Collector: self-weights plaintext readings, adds child aggregates.
  std::vector<std::pair<NodeId, double>> plain;
  std::vector<const std::vector<double>*> aggs;
  for (NodeId c : topo.children(kCollectorId)) {
    const auto& child = outbox.at(c);
    if (child.is_aggregate) {
      aggs.push_back(&child.aggregate);
    } else {
      plain.insert(plain.end(), child.plaintext.begin(), child.plaintext.end());
    }
  }
  for (const auto& [id, v] : plain) {
    result.raw_received[id] = v;
    result.collected(static_cast<Eigen::Index>(topo.index_of(id))) = v;
  }
  const auto y = combine(std::move(plain), aggs, m, coeffs, nullptr);
  result.y = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
  return result;
}

RoundResult run_full_round(const Topology& topo, const Vector& d) {
  if (static_cast<std::size_t>(d.size()) != topo.size()) throw InputError("run_full_round: reading vector size mismatch");
  RoundResult result;
  result.missing = missing_nodes(topo);
  result.partial = !result.missing.empty();
  result.collected = Vector::Zero(d.size());
  for (NodeId id : topo.post_order()) {
    const std::size_t packets = topo.descendant_count(id) + 1;
    result.per_link[{id, *topo.node(id).parent}] = packets;
    result.cost += packets;
    const auto i = static_cast<Eigen::Index>(topo.index_of(id));
    result.raw_received[id] = d(i);
    result.collected(i) = d(i);
  }
  return result;
}

CostBounds cost_bounds(std::size_t n, std::size_t m) {
  if (m < 2) throw InputError("cost_bounds: M must be at least 2");
  if (m > n) throw InputError("cost_bounds: M must not exceed N");
  // M (N - M/2 + 1/2) = M (2N - M + 1) / 2, always an integer.
  return {n, m * (2 * n - m + 1) / 2};
}

std::size_t pary_cost(std::size_t p, std::size_t layers, std::size_t m) {
  if (p < 2 || layers < 1) throw InputError("pary_cost: need p >= 2 and L >= 1");
  std::vector<std::size_t> pw(layers + 2, 1);
  for (std::size_t i = 1; i < pw.size(); ++i) pw[i] = pw[i - 1] * p;
  // Subtree size of a node j layers above the leaves: sum_{i=0}^{j} p^i.
  const auto subtree = [&pw](std::size_t j) {
    std::size_t s = 0;
    for (std::size_t i = 0; i <= j; ++i) s += pw[i];
    return s;
  };
  // l: the number of forwarder layers counted from the leaves.
  std::size_t l = 0;
  while (l < layers && subtree(l) - 1 < m) ++l;
  std::size_t cost = 0;
  for (std::size_t j = 0; j < l; ++j) cost += pw[layers - j] * subtree(j);
  for (std::size_t j = 1; j + l <= layers; ++j) cost += m * pw[j];
  return cost;
}

std::size_t baseline_cost(std::size_t n, std::size_t m) { return n * m; }

std::size_t non_aggregation_cost(const Topology& topo) {
  std::size_t cost = 0;
  for (NodeId id : topo.post_order()) cost += topo.descendant_count(id) + 1;
  return cost;
}

std::string round_log_line(std::size_t round, const RoundResult& result) {
  nlohmann::ordered_json j;
  j["round"] = round;
  j["cost"] = result.cost;
  nlohmann::ordered_json links = nlohmann::ordered_json::object();
  for (const auto& [link, count] : result.per_link) {
    links[std::to_string(link.child) + "->" + std::to_string(link.parent)] = count;
  }
  j["per_link"] = std::move(links);
  j["y"] = std::vector<double>(result.y.data(), result.y.data() + result.y.size());
  if (result.partial) j["missing"] = result.missing;
  return j.dump();
}

}  // namespace cmr
