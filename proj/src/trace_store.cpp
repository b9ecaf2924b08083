#include "cmr/trace_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>

#include "cmr/analysis.hpp"
#include "cmr/error.hpp"
#include "random.hpp"

namespace cmr {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

NodeId parse_node_header(std::string_view field) {
  constexpr std::string_view kPrefix = "node_";
  if (!field.starts_with(kPrefix)) {
    throw InputError("trace header: expected node_<id>, got '" + std::string(field) + "'");
  }
  field.remove_prefix(kPrefix.size());
  NodeId id = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), id);
  if (ec != std::errc{} || ptr != field.data() + field.size() || id == 0) {
    throw InputError("trace header: bad node id '" + std::string(field) + "'");
  }
  return id;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

ReadingTrace::ReadingTrace(std::vector<NodeId> node_ids, Matrix readings)
    : node_ids_(std::move(node_ids)), readings_(std::move(readings)) {
  if (node_ids_.empty()) throw InputError("trace has no nodes");
  if (readings_.rows() == 0) throw InputError("trace has no rounds");
  if (static_cast<std::size_t>(readings_.cols()) != node_ids_.size()) {
    throw InputError("trace: reading columns do not match node count");
  }
  std::unordered_set<NodeId> seen;
  for (NodeId id : node_ids_) {
    if (id == 0) throw InputError("trace: node ids must be positive");
    if (!seen.insert(id).second) throw InputError("trace: duplicate node id " + std::to_string(id));
  }
  for (Eigen::Index i = 0; i < readings_.size(); ++i) {
    const double v = readings_.data()[i];
    if (!std::isfinite(v) || v < 0) throw InputError("trace: readings must be finite and >= 0");
  }
}

LoadedTrace parse_trace(std::istream& in) {
  std::string line;
  // Skip leading blank lines; an empty file has no valid rounds.
  while (std::getline(in, line) && trim(line).empty()) {
  }
  if (trim(line).empty()) throw InputError("trace: zero valid rounds");

  const auto header = split_csv(line);
  if (header.size() < 2 || header.front() != "round") {
    throw InputError("trace header must be 'round,node_<id>,...'");
  }
  std::vector<NodeId> ids;
  for (std::size_t c = 1; c < header.size(); ++c) ids.push_back(parse_node_header(header[c]));

  struct Row {
    double round;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  std::size_t filtered = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw InputError("trace line " + std::to_string(line_no) + ": inconsistent column count");
    }
    const auto round = parse_real(fields[0]);
    if (!round) throw InputError("trace line " + std::to_string(line_no) + ": bad round index");
    Row row{*round, {}};
    row.values.reserve(ids.size());
    bool valid = true;
    for (std::size_t c = 1; c < fields.size() && valid; ++c) {
      const auto v = parse_real(fields[c]);
      valid = v && std::isfinite(*v) && *v >= 0;
      if (valid) row.values.push_back(*v);
    }
    if (!valid) {
      ++filtered;
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("trace: zero valid rounds");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.round < b.round; });

  Matrix readings(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < ids.size(); ++c) {
      readings(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r].values[c];
    }
  }
  return {ReadingTrace(std::move(ids), std::move(readings)), filtered};
}

LoadedTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read trace file " + path.string());
  return parse_trace(in);
}

void write_trace(const ReadingTrace& trace, std::ostream& out) {
  out << "round";
  for (NodeId id : trace.node_ids()) out << ",node_" << id;
  out << '\n';
  const Matrix& r = trace.readings();
  for (Eigen::Index t = 0; t < r.rows(); ++t) {
    out << t;
    for (Eigen::Index c = 0; c < r.cols(); ++c) out << ',' << format_real(r(t, c));
    out << '\n';
  }
}

void save_trace(const ReadingTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write trace file " + path.string());
  write_trace(trace, out);
}

namespace {

Matrix random_walk(const Vector& start, const Matrix& steps, double alpha) {
  Matrix out(steps.rows() + 1, start.size());
  out.row(0) = start.transpose();
  for (Eigen::Index t = 0; t < steps.rows(); ++t) {
    out.row(t + 1) = (out.row(t) + alpha * steps.row(t)).cwiseAbs();
  }
  return out;
}

double mean_round_corr(const Matrix& readings, const std::vector<NodeId>& ids) {
  const auto r = defined_values(round_correlation(ReadingTrace(ids, readings)));
  return r.empty() ? 1.0 : mean(r);
}

}  // namespace

ReadingTrace synthesize_trace(const SynthesisParams& params) {
  if (params.n_nodes < 2) throw InputError("synthesize_trace: need at least 2 nodes");
  if (params.rounds < 2) throw InputError("synthesize_trace: need at least 2 rounds");
  if (!(params.target_corr > 0.0 && params.target_corr <= 1.0)) {
    throw InputError("synthesize_trace: target_corr must lie in (0, 1]");
  }
  if (!std::isfinite(params.log_mean) || !(params.log_sigma >= 0.0 && std::isfinite(params.log_sigma))) {
    throw InputError("synthesize_trace: load parameters must be finite with log_sigma >= 0");
  }
  const auto n = static_cast<Eigen::Index>(params.n_nodes);
  const auto steps_n = static_cast<Eigen::Index>(params.rounds - 1);

  std::mt19937_64 rng(params.seed);
  Vector start(n);
  for (Eigen::Index i = 0; i < n; ++i) start(i) = std::exp(params.log_mean + params.log_sigma * detail::gaussian(rng));
  Matrix steps(steps_n, n);
  for (Eigen::Index t = 0; t < steps_n; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) steps(t, i) = detail::gaussian(rng);
  }

  std::vector<NodeId> ids(params.n_nodes);
  std::iota(ids.begin(), ids.end(), NodeId{1});

  if (params.target_corr >= 1.0) return ReadingTrace(ids, random_walk(start, steps, 0.0));

  const double spread = std::sqrt((start.array() - start.mean()).square().mean());
  double lo = 0.0;
  double hi = spread;
  for (int i = 0; i < 60 && mean_round_corr(random_walk(start, steps, hi), ids) > params.target_corr; ++i) {
    hi *= 2.0;
  }
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mean_round_corr(random_walk(start, steps, mid), ids) > params.target_corr) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return ReadingTrace(ids, random_walk(start, steps, 0.5 * (lo + hi)));
}

}  // namespace cmr
