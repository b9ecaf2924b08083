#include "cmr/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cmr/analysis.hpp"
#include "cmr/crypto.hpp"
#include "cmr/error.hpp"
#include "cmr/reading_protocol.hpp"
#include "cmr/recovery.hpp"

namespace cmr {

using nlohmann::json;

namespace {

const char* topology_kind_name(TopologyKind k) {
  switch (k) {
    case TopologyKind::kRandom: return "random";
    case TopologyKind::kPary: return "pary";
    case TopologyKind::kChain: return "chain";
    case TopologyKind::kStar: return "star";
    case TopologyKind::kFile: return "file";
  }
  return "random";
}

TopologyKind parse_topology_kind(const std::string& s) {
  for (auto k : {TopologyKind::kRandom, TopologyKind::kPary, TopologyKind::kChain, TopologyKind::kStar,
                 TopologyKind::kFile}) {
    if (s == topology_kind_name(k)) return k;
  }
  throw InputError("unknown topology kind '" + s + "'");
}

const char* profile_name(CryptoProfile p) { return p == CryptoProfile::kTest512 ? "test-512" : "default-2048"; }

CryptoProfile parse_profile(const std::string& s) {
  if (s == "test-512") return CryptoProfile::kTest512;
  if (s == "default-2048") return CryptoProfile::kDefault2048;
  throw InputError("unknown crypto profile '" + s + "'");
}

EstimateMode parse_mode(const std::string& s) {
  if (s == "exact") return EstimateMode::kExact;
  if (s == "estimated") return EstimateMode::kEstimated;
  throw InputError("unknown bound mode '" + s + "'");
}

std::string attack_plan_text(const AttackPlan& a) {
  std::string s = std::string(attack_name(a.kind)) + ":round=" + std::to_string(a.round);
  if (a.link) s += ",link=" + std::to_string(a.link->child) + "->" + std::to_string(a.link->parent);
  if (a.target) s += ",target=" + std::to_string(*a.target);
  if (a.transmissions != 1) s += ",transmissions=" + std::to_string(a.transmissions);
  return s;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw InputError("bad " + what + " '" + s + "'");
  return v;
}

/// Shortest round-trip text; "inf" / "-inf" / "nan" for non-finite values.
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json config_json(const ExperimentConfig& c) {
  json j;
  json t;
  t["kind"] = topology_kind_name(c.topology.kind);
  t["n"] = c.topology.n;
  t["p"] = c.topology.p;
  t["layers"] = c.topology.layers;
  t["path"] = c.topology.path;
  j["topology"] = t;
  j["m"] = c.m ? json(*c.m) : json(nullptr);
  j["m_ratio"] = c.m_ratio;
  j["rounds"] = c.rounds;
  j["trace_path"] = c.trace_path;
  j["target_corr"] = c.target_corr;
  j["load_log_mean"] = c.load_log_mean;
  j["load_log_sigma"] = c.load_log_sigma;
  j["mode"] = c.mode == RunMode::kPlain ? "plain" : "secure";
  j["crypto_profile"] = profile_name(c.crypto);
  j["solver_tol"] = c.solver_tol;
  j["bounds"] = c.bounds;
  j["bound_mode"] = mode_name(c.bound_mode);
  j["bound_k"] = c.bound_k;
  j["attack"] = c.attack ? json(attack_plan_text(*c.attack)) : json(nullptr);
  j["master_seed"] = c.master_seed;
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace

AttackPlan parse_attack_plan(const std::string& text) {
  AttackPlan plan;
  const auto colon = text.find(':');
  plan.kind = parse_attack(text.substr(0, colon));
  if (colon == std::string::npos) return plan;
  std::stringstream ss(text.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InputError("attack option '" + item + "' lacks '='");
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    if (key == "round") {
      plan.round = parse_count(val, "attack round");
    } else if (key == "target") {
      plan.target = static_cast<NodeId>(parse_count(val, "attack target"));
    } else if (key == "transmissions") {
      plan.transmissions = parse_count(val, "attack transmissions");
    } else if (key == "link") {
      const auto arrow = val.find("->");
      if (arrow == std::string::npos) throw InputError("attack link must look like child->parent");
      plan.link = Link{static_cast<NodeId>(parse_count(val.substr(0, arrow), "link child")),
                       static_cast<NodeId>(parse_count(val.substr(arrow + 2), "link parent"))};
    } else {
      throw InputError("unknown attack option '" + key + "'");
    }
  }
  return plan;
}

ExperimentConfig config_from_json(const std::string& text) {
  ExperimentConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  try {
    if (j.contains("topology")) {
      const auto& t = j.at("topology");
      if (t.contains("kind")) c.topology.kind = parse_topology_kind(t.at("kind").get<std::string>());
      if (t.contains("n")) c.topology.n = t.at("n").get<std::size_t>();
      if (t.contains("p")) c.topology.p = t.at("p").get<std::size_t>();
      if (t.contains("layers")) c.topology.layers = t.at("layers").get<std::size_t>();
      if (t.contains("path")) c.topology.path = t.at("path").get<std::string>();
    }
    if (j.contains("m") && !j.at("m").is_null()) c.m = j.at("m").get<std::size_t>();
    if (j.contains("m_ratio")) c.m_ratio = j.at("m_ratio").get<double>();
    if (j.contains("rounds")) c.rounds = j.at("rounds").get<std::size_t>();
    if (j.contains("trace_path")) c.trace_path = j.at("trace_path").get<std::string>();
    if (j.contains("target_corr")) c.target_corr = j.at("target_corr").get<double>();
    if (j.contains("load_log_mean")) c.load_log_mean = j.at("load_log_mean").get<double>();
    if (j.contains("load_log_sigma")) c.load_log_sigma = j.at("load_log_sigma").get<double>();
    if (j.contains("mode")) {
      const auto m = j.at("mode").get<std::string>();
      if (m != "plain" && m != "secure") throw InputError("config: mode must be plain or secure");
      c.mode = m == "plain" ? RunMode::kPlain : RunMode::kSecure;
    }
    if (j.contains("crypto_profile")) c.crypto = parse_profile(j.at("crypto_profile").get<std::string>());
    if (j.contains("solver_tol")) c.solver_tol = j.at("solver_tol").get<double>();
    if (j.contains("bounds")) c.bounds = j.at("bounds").get<bool>();
    if (j.contains("bound_mode")) c.bound_mode = parse_mode(j.at("bound_mode").get<std::string>());
    if (j.contains("bound_k")) c.bound_k = j.at("bound_k").get<std::size_t>();
    if (j.contains("attack") && !j.at("attack").is_null()) c.attack = parse_attack_plan(j.at("attack").get<std::string>());
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(crypto::read_text(path)); }

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(); }

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config);
  const auto d = crypto::digest64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (auto b : d) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

std::uint64_t subseed(std::uint64_t master, std::string_view label) {
  crypto::Bytes buf;
  crypto::append_u64_be(buf, master);
  buf.insert(buf.end(), label.begin(), label.end());
  return crypto::digest64_u64(buf);
}

std::size_t resolve_m(const ExperimentConfig& config, std::size_t n) {
  const std::size_t m = config.m ? *config.m : static_cast<std::size_t>(std::lround(config.m_ratio * static_cast<double>(n)));
  if (m < 2) throw InputError("M must be at least 2 (got " + std::to_string(m) + ")");
  if (m >= n) throw InputError("M must be smaller than N (got M=" + std::to_string(m) + ", N=" + std::to_string(n) + ")");
  return m;
}

Topology build_topology(const TopologySpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case TopologyKind::kRandom: return gen_random_tree(spec.n, seed);
    case TopologyKind::kPary: return gen_pary_tree(spec.p, spec.layers);
    case TopologyKind::kChain: return gen_chain(spec.n);
    case TopologyKind::kStar: return gen_star(spec.n);
    case TopologyKind::kFile: return load_topology(spec.path);
  }
  throw InputError("unknown topology kind");
}

ReadingTrace build_trace(const ExperimentConfig& config, const Topology& topo) {
  if (config.trace_path.empty()) {
    SynthesisParams p;
    p.n_nodes = topo.size();
    p.rounds = config.rounds;
    p.target_corr = config.target_corr;
    p.seed = subseed(config.master_seed, "trace");
    p.log_mean = config.load_log_mean;
    p.log_sigma = config.load_log_sigma;
    ReadingTrace t = synthesize_trace(p);
    auto ids = topo.ids();
    std::sort(ids.begin(), ids.end());
    return ReadingTrace(ids, t.readings());
  }
  ReadingTrace t = load_trace(config.trace_path).trace;
  if (t.n_rounds() > config.rounds) {
    return ReadingTrace(t.node_ids(), t.readings().topRows(static_cast<Eigen::Index>(config.rounds)));
  }
  return t;
}

RunSummary run_experiment(const ExperimentConfig& config) {
  RunSummary summary;
  summary.config_hash = config_hash(config);
  const Topology topo = build_topology(config.topology, subseed(config.master_seed, "topology"));
  const std::size_t n = topo.size();
  const std::size_t m = resolve_m(config, n);
  const ReadingTrace trace = build_trace(config, topo);
  const Matrix readings = align_trace(trace, topo);
  summary.n = n;
  summary.m = m;
  summary.rounds = trace.n_rounds();

  const CostBounds bounds = cost_bounds(n, m);
  const bool complete = topo.unreachable_ids().empty();
  const unsigned scale_bits = 16;

  std::vector<json> round_logs(trace.n_rounds());
  MeasureFn measure;
  Matrix phi;
  std::optional<SecureKeys> keys;
  std::optional<SecureSession> session;
  const auto ids = topo.ids();

  if (config.mode == RunMode::kPlain) {
    phi = assemble_sensing_matrix(ids, m).entries();
    measure = [&](std::size_t t, const Vector& d) {
      const RoundResult r = run_plain_round(topo, d, m);
      round_logs[t] = json::parse(round_log_line(t, r));
      return Measurement{r.y, r.cost, r.partial};
    };
  } else {
    const std::size_t paillier_bits = config.crypto == CryptoProfile::kTest512 ? 512 : 2048;
    const std::size_t rsa_bits = config.crypto == CryptoProfile::kTest512 ? 512 : 1024;
    keys = generate_keys(ids, paillier_bits, rsa_bits, subseed(config.master_seed, "crypto"));
    session.emplace(topo, m, *keys, subseed(config.master_seed, "crypto-randomness"));
    phi = assemble_sensing_matrix(ids, m).quantized_real(scale_bits).entries();
    measure = [&](std::size_t t, const Vector& d) {
      SecureRoundOptions opts;
      opts.scale_bits = scale_bits;
      if (config.attack && config.attack->round == t) {
        AttackSpec spec;
        spec.kind = config.attack->kind;
        spec.seed = subseed(config.master_seed, "attack");
        spec.transmissions = config.attack->transmissions;
        spec.target = config.attack->target;
        if (config.attack->link) {
          spec.link = *config.attack->link;
        } else {
          const auto& order = topo.post_order();
          const NodeId victim = spec.target ? *spec.target : order[spec.seed % order.size()];
          spec.link = Link{victim, *topo.node(victim).parent};
          spec.target = victim;
        }
        opts.attack = spec;
      }
      const SecureRoundResult r = session->run_round(d, t, opts);
      json log;
      log["round"] = t;
      log["cost"] = r.cost;
      log["wire_bytes"] = r.wire_bytes;
      log["resends"] = r.resends;
      log["y"] = vector_json(r.y);
      if (!r.missing.empty()) log["missing"] = r.missing;
      json rej = json::array();
      for (const auto& x : r.rejections) {
        rej.push_back({{"link", std::to_string(x.link.child) + "->" + std::to_string(x.link.parent)},
                       {"claimed_id", x.claimed_id},
                       {"reason", x.reason}});
      }
      log["rejections"] = rej;
      if (r.attack) {
        const auto& a = *r.attack;
        log["attack"] = {{"kind", attack_name(a.kind)},
                         {"link", std::to_string(a.link.child) + "->" + std::to_string(a.link.parent)},
                         {"target", a.target},
                         {"injected", a.injected},
                         {"rejected", a.rejected},
                         {"reason", a.reason},
                         {"resends", a.resends},
                         {"recovered", a.recovered},
                         {"ciphertexts_distinct", a.ciphertexts_distinct},
                         {"ciphertext_hides_plain", a.ciphertext_hides_plain}};
        if (a.kind != AttackKind::kEavesdrop && a.injected && !a.rejected) {
          summary.violations.push_back("round " + std::to_string(t) + ": injected " + attack_name(a.kind) +
                                       " packet was accepted");
        }
        if (a.kind == AttackKind::kEavesdrop && !(a.ciphertexts_distinct && a.ciphertext_hides_plain)) {
          summary.violations.push_back("round " + std::to_string(t) + ": eavesdrop check failed");
        }
      }
      if (!r.partial && r.y_int != quantized_plain_y(topo, d, m, scale_bits)) {
        summary.violations.push_back("round " + std::to_string(t) + ": secure y differs from quantized plain y");
      }
      round_logs[t] = std::move(log);
      return Measurement{r.y, r.cost, r.partial};
    };
  }

  StreamOptions so;
  so.solver.tol = config.solver_tol;
  so.bound_k = config.bound_k;
  if (config.bounds) {
    BoundOptions bo;
    bo.mode = config.bound_mode;
    bo.seed = subseed(config.master_seed, "solver");
    so.bounds = bo;
  }
  const std::vector<StreamRound> stream = stream_reconstruct(readings, topo, phi, measure, so);

  std::vector<double> costs;
  std::vector<double> snrs;
  std::vector<double> errs;
  for (const auto& r : stream) {
    if (r.bootstrap) {
      json log;
      log["round"] = r.round;
      log["cost"] = r.cost;
      log["bootstrap"] = true;
      round_logs[r.round] = std::move(log);
      continue;
    }
    costs.push_back(static_cast<double>(r.cost));
    if (!r.skipped) {
      snrs.push_back(r.snr_db);
      errs.push_back(r.err_l2);
    }
    if (complete && (r.cost < bounds.min || r.cost > bounds.max)) {
      summary.violations.push_back("round " + std::to_string(r.round) + ": cost " + std::to_string(r.cost) +
                                   " outside [" + std::to_string(bounds.min) + ", " + std::to_string(bounds.max) + "]");
    }
    json& log = round_logs[r.round];
    log["skipped"] = r.skipped;
    if (!r.skipped) {
      log["snr_db"] = finite_or_null(r.snr_db);
      log["err_l2"] = r.err_l2;
    }
  }

  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);

  json topo_json = json::parse(topology_to_json(topo));
  topo_json["config_hash"] = summary.config_hash;
  write_file(dir / "topology.json", topo_json.dump(2) + "\n");

  std::string jsonl;
  for (auto& log : round_logs) {
    log["config_hash"] = summary.config_hash;
    jsonl += log.dump() + "\n";
  }
  write_file(dir / "rounds.jsonl", jsonl);

  std::string csv = "# config_hash=" + summary.config_hash + "\nround,snr_db,err_l2,bound,feasible,k,mode\n";
  for (const auto& r : stream) {
    csv += std::to_string(r.round) + ",";
    if (r.skipped) {
      csv += ",,,,,\n";
      continue;
    }
    csv += num(r.snr_db) + "," + num(r.err_l2) + ",";
    if (r.bound) {
      csv += (r.bound->bound ? num(*r.bound->bound) : "") + "," + (r.bound->feasible ? "true" : "false") + "," +
             std::to_string(r.bound->k) + "," + mode_name(r.bound->mode);
    } else {
      csv += ",,,";
    }
    csv += "\n";
  }
  write_file(dir / "metrics.csv", csv);

  summary.mean_cost = costs.empty() ? 0.0 : mean(costs);
  summary.min_snr_db = snrs.empty() ? 0.0 : *std::min_element(snrs.begin(), snrs.end());
  json s;
  s["config_hash"] = summary.config_hash;
  s["config"] = config_json(config);
  s["n"] = n;
  s["m"] = m;
  s["rounds"] = summary.rounds;
  s["mean_cost"] = summary.mean_cost;
  s["cost_bounds"] = {{"min", bounds.min}, {"max", bounds.max}};
  s["baseline_cost"] = baseline_cost(n, m);
  s["non_aggregation_cost"] = non_aggregation_cost(topo);
  s["min_snr_db"] = finite_or_null(summary.min_snr_db);
  if (!snrs.empty()) {
    const auto b = boxplot_stats(snrs);
    s["snr_boxplot"] = {{"min", finite_or_null(b.min)}, {"q1", finite_or_null(b.q1)}, {"median", finite_or_null(b.median)},
                        {"q3", finite_or_null(b.q3)}, {"max", finite_or_null(b.max)}};
  }
  if (errs.size() >= 2) {
    s["err_slope_per_round"] = ls_slope(errs);
    s["mean_err_l2"] = mean(errs);
  }
  s["violations"] = summary.violations;
  write_file(dir / "summary.json", s.dump(2) + "\n");

  summary.outputs = {dir / "topology.json", dir / "rounds.jsonl", dir / "metrics.csv", dir / "summary.json"};
  return summary;
}

}  // namespace cmr
