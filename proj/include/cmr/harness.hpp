#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmr/coeff_stream.hpp"
#include "cmr/secure_protocol.hpp"
#include "cmr/topology.hpp"
#include "cmr/trace_store.hpp"

namespace cmr {

enum class TopologyKind { kRandom, kPary, kChain, kStar, kFile };
enum class RunMode { kPlain, kSecure };
enum class CryptoProfile { kTest512, kDefault2048 };

struct TopologySpec {
  TopologyKind kind = TopologyKind::kRandom;
  std::size_t n = 128;     // random, chain, star
  std::size_t p = 2;       // p-ary
  std::size_t layers = 7;  // p-ary
  std::string path;        // file
};

/// "kind:key=value,..." with keys round, link (child->parent), target, transmissions.
struct AttackPlan {
  AttackKind kind = AttackKind::kTamper;
  std::size_t round = 1;
  std::optional<Link> link;
  std::optional<NodeId> target;
  std::size_t transmissions = 1;
};

AttackPlan parse_attack_plan(const std::string& text);

struct ExperimentConfig {
  TopologySpec topology;
  std::optional<std::size_t> m;
  double m_ratio = 0.3;
  std::size_t rounds = 50;
  std::string trace_path;  // empty: synthetic
  double target_corr = 0.9995;
  double load_log_mean = 6.2;
  double load_log_sigma = 0.5;
  RunMode mode = RunMode::kPlain;
  CryptoProfile crypto = CryptoProfile::kTest512;
  double solver_tol = 1e-6;
  bool bounds = true;
  EstimateMode bound_mode = EstimateMode::kEstimated;
  std::size_t bound_k = 0;
  std::optional<AttackPlan> attack;
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;
};

/// Accepts any subset of the fields written by config_to_json.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with sorted keys; output_dir is left out so that the
/// same experiment written to two places hashes identically.
std::string config_to_json(const ExperimentConfig& config);
/// Hex of the 64-bit digest of the canonical JSON.
std::string config_hash(const ExperimentConfig& config);

/// Independent per-component seed derived from the master seed.
std::uint64_t subseed(std::uint64_t master, std::string_view label);

/// Throws InputError unless 2 <= M < N.
std::size_t resolve_m(const ExperimentConfig& config, std::size_t n);

Topology build_topology(const TopologySpec& spec, std::uint64_t seed);
ReadingTrace build_trace(const ExperimentConfig& config, const Topology& topo);

struct RunSummary {
  std::string config_hash;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t rounds = 0;
  double mean_cost = 0.0;
  double min_snr_db = 0.0;
  std::vector<std::string> violations;
  std::vector<std::filesystem::path> outputs;
};

/// Runs the experiment and writes topology.json, rounds.jsonl, metrics.csv
/// and summary.json into config.output_dir.
RunSummary run_experiment(const ExperimentConfig& config);

}  // namespace cmr
