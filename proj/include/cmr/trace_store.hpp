#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "cmr/types.hpp"

namespace cmr {

/// Meter readings in watts, one row per round and one column per meter.
///
/// Every reading is finite and non-negative and node IDs are distinct; the
/// constructor enforces both.
class ReadingTrace {
 public:
  ReadingTrace(std::vector<NodeId> node_ids, Matrix readings);

  std::size_t n_nodes() const { return node_ids_.size(); }
  std::size_t n_rounds() const { return static_cast<std::size_t>(readings_.rows()); }
  const std::vector<NodeId>& node_ids() const { return node_ids_; }
  const Matrix& readings() const { return readings_; }

  /// d(t) as a column vector ordered like node_ids().
  Vector round(std::size_t t) const { return readings_.row(static_cast<Eigen::Index>(t)).transpose(); }

  friend bool operator==(const ReadingTrace& a, const ReadingTrace& b) {
    return a.node_ids_ == b.node_ids_ && a.readings_ == b.readings_;
  }

 private:
  std::vector<NodeId> node_ids_;
  Matrix readings_;
};

struct LoadedTrace {
  ReadingTrace trace;
  std::size_t filtered_rounds = 0;  // rows dropped for negative or missing values
};

/// Parses the CSV schema `round,node_<id1>,...,node_<idN>`. Rounds with any
/// negative, missing or non-finite reading are dropped whole; the remaining
/// rounds are sorted by their round number and renumbered from 0.
LoadedTrace load_trace(const std::filesystem::path& path);
LoadedTrace parse_trace(std::istream& in);

/// Writes the same schema; values use the shortest round-trip representation.
void save_trace(const ReadingTrace& trace, const std::filesystem::path& path);
void write_trace(const ReadingTrace& trace, std::ostream& out);

struct SynthesisParams {
  std::size_t n_nodes = 128;
  std::size_t rounds = 50;
  double target_corr = 0.9995;  // in (0, 1]
  std::uint64_t seed = 1;
  /// Initial loads are exp(log_mean + log_sigma z) watts: household-scale,
  /// median about 490 W with a coefficient of variation near 0.53.
  double log_mean = 6.2;
  double log_sigma = 0.5;
};

/// Random-walk trace d_i(t+1) = |d_i(t) + alpha * eta| with lognormal initial
/// loads. alpha is found by bisection so that the mean consecutive-round
/// Pearson correlation matches target_corr. IDs are 1..n.
ReadingTrace synthesize_trace(const SynthesisParams& params);

}  // namespace cmr
