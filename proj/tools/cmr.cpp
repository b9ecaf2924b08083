#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmr/analysis.hpp"
#include "cmr/crypto.hpp"
#include "cmr/error.hpp"
#include "cmr/harness.hpp"
#include "cmr/reading_protocol.hpp"
#include "cmr/secure_protocol.hpp"
#include "cmr/topology.hpp"
#include "cmr/trace_store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitViolation = 2;
constexpr int kExitError = 1;

json boxplot_json(const std::vector<double>& values) {
  if (values.empty()) return nullptr;
  const auto b = cmr::boxplot_stats(values);
  return {{"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3}, {"max", b.max}, {"count", values.size()}};
}

/// snr_db column of a metrics.csv, skipping comments, the header and non-finite entries.
std::vector<double> read_snr_column(const fs::path& path) {
  std::istringstream in(cmr::crypto::read_text(path));
  std::string line;
  std::vector<double> out;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) continue;
    const std::string cell = line.substr(a + 1, b - a - 1);
    if (cell.empty()) continue;
    const double v = std::strtod(cell.c_str(), nullptr);
    if (std::isfinite(v)) out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed, secure meter-reading experiments"};
  app.require_subcommand(1);

  // gen-topology
  auto* gen = app.add_subcommand("gen-topology", "Write topology JSON files");
  std::vector<std::size_t> pary;
  bool random = false;
  std::optional<std::size_t> chain_n;
  std::optional<std::size_t> star_n;
  std::size_t gen_n = 128;
  std::size_t gen_seeds = 1;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "topologies";
  gen->add_option("--pary", pary, "Complete p-ary tree: p L")->expected(2);
  gen->add_flag("--random", random, "Random attachment trees");
  gen->add_option("--chain", chain_n, "Chain of N meters");
  gen->add_option("--star", star_n, "Star of N meters");
  gen->add_option("--n", gen_n, "Meters per random tree");
  gen->add_option("--seeds", gen_seeds, "Number of random trees");
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--out", gen_out, "Output directory");

  // run
  auto* run = app.add_subcommand("run", "Stream collection and reconstruction");
  std::string config_path;
  std::optional<std::string> mode;
  std::optional<std::string> attack;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> run_n;
  std::optional<std::size_t> run_m;
  std::optional<std::size_t> rounds;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> topo_kind;
  std::optional<std::string> topo_file;
  std::optional<std::string> trace_file;
  std::optional<std::string> profile;
  std::optional<std::string> bound_mode;
  std::optional<double> tol;
  bool no_bounds = false;
  run->add_option("--config", config_path, "Experiment config JSON")->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "plain | secure")->check(CLI::IsMember({"plain", "secure"}));
  run->add_option("--attack", attack, "kind:round=R[,link=C->P][,target=ID][,transmissions=K]");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--n", run_n, "Meters");
  run->add_option("--m", run_m, "Measurements per round");
  run->add_option("--rounds", rounds, "Rounds");
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--topology", topo_kind, "random | pary | chain | star | file")
      ->check(CLI::IsMember({"random", "pary", "chain", "star", "file"}));
  run->add_option("--topology-file", topo_file, "Topology JSON")->check(CLI::ExistingFile);
  run->add_option("--trace", trace_file, "Trace CSV")->check(CLI::ExistingFile);
  run->add_option("--profile", profile, "test-512 | default-2048")->check(CLI::IsMember({"test-512", "default-2048"}));
  run->add_option("--bound-mode", bound_mode, "exact | estimated")->check(CLI::IsMember({"exact", "estimated"}));
  run->add_option("--tol", tol, "Solver feasibility tolerance");
  run->add_flag("--no-bounds", no_bounds, "Skip per-round error bounds");

  // cost-bounds
  auto* cb = app.add_subcommand("cost-bounds", "Cost bounds for N meters and M measurements");
  std::size_t cb_n = 0;
  std::size_t cb_m = 0;
  std::vector<std::size_t> cb_pary;
  cb->add_option("--n", cb_n, "Meters");
  cb->add_option("--m", cb_m, "Measurements")->required();
  cb->add_option("--pary", cb_pary, "p L: also print the p-ary closed form (N follows from p and L)")->expected(2);

  // analyze
  auto* an = app.add_subcommand("analyze", "Correlations and SNR summaries");
  std::optional<std::string> an_trace;
  std::vector<std::string> an_metrics;
  an->add_option("--trace", an_trace, "Trace CSV")->check(CLI::ExistingFile);
  an->add_option("--metrics", an_metrics, "metrics.csv files")->check(CLI::ExistingFile);

  // keygen
  auto* kg = app.add_subcommand("keygen", "Collector Paillier keys and per-meter signing keys");
  std::string kg_dir = "keys";
  std::size_t kg_n = 128;
  std::uint64_t kg_seed = 1;
  std::string kg_profile = "test-512";
  kg->add_option("--dir", kg_dir, "Key directory");
  kg->add_option("--n", kg_n, "Meters (IDs 1..N)");
  kg->add_option("--seed", kg_seed, "Seed");
  kg->add_option("--profile", kg_profile, "test-512 | default-2048")->check(CLI::IsMember({"test-512", "default-2048"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      fs::create_directories(gen_out);
      std::vector<std::pair<std::string, cmr::Topology>> made;
      if (!pary.empty()) {
        made.emplace_back("pary_" + std::to_string(pary[0]) + "_" + std::to_string(pary[1]) + ".json",
                          cmr::gen_pary_tree(pary[0], pary[1]));
      }
      if (chain_n) made.emplace_back("chain_" + std::to_string(*chain_n) + ".json", cmr::gen_chain(*chain_n));
      if (star_n) made.emplace_back("star_" + std::to_string(*star_n) + ".json", cmr::gen_star(*star_n));
      if (random) {
        for (std::size_t i = 0; i < gen_seeds; ++i) {
          const auto s = cmr::subseed(gen_seed, "topology/" + std::to_string(i));
          made.emplace_back("random_" + std::to_string(gen_n) + "_" + std::to_string(i) + ".json",
                            cmr::gen_random_tree(gen_n, s));
        }
      }
      if (made.empty()) throw cmr::InputError("gen-topology: pick --pary, --random, --chain or --star");
      for (const auto& [name, topo] : made) {
        cmr::save_topology(topo, fs::path(gen_out) / name);
        std::cout << (fs::path(gen_out) / name).string() << " (" << topo.size() << " meters)\n";
      }
      return 0;
    }

    if (run->parsed()) {
      cmr::ExperimentConfig cfg = config_path.empty() ? cmr::ExperimentConfig{} : cmr::load_config(config_path);
      if (mode) cfg.mode = *mode == "plain" ? cmr::RunMode::kPlain : cmr::RunMode::kSecure;
      if (attack) cfg.attack = cmr::parse_attack_plan(*attack);
      if (out_dir) cfg.output_dir = *out_dir;
      if (run_n) cfg.topology.n = *run_n;
      if (run_m) cfg.m = *run_m;
      if (rounds) cfg.rounds = *rounds;
      if (seed) cfg.master_seed = *seed;
      if (topo_kind) {
        const std::string k = *topo_kind;
        cfg.topology.kind = k == "random"  ? cmr::TopologyKind::kRandom
                            : k == "pary"  ? cmr::TopologyKind::kPary
                            : k == "chain" ? cmr::TopologyKind::kChain
                            : k == "star"  ? cmr::TopologyKind::kStar
                                           : cmr::TopologyKind::kFile;
      }
      if (topo_file) {
        cfg.topology.kind = cmr::TopologyKind::kFile;
        cfg.topology.path = *topo_file;
      }
      if (trace_file) cfg.trace_path = *trace_file;
      if (profile) cfg.crypto = *profile == "test-512" ? cmr::CryptoProfile::kTest512 : cmr::CryptoProfile::kDefault2048;
      if (bound_mode) cfg.bound_mode = *bound_mode == "exact" ? cmr::EstimateMode::kExact : cmr::EstimateMode::kEstimated;
      if (tol) cfg.solver_tol = *tol;
      if (no_bounds) cfg.bounds = false;

      const cmr::RunSummary s = cmr::run_experiment(cfg);
      std::cout << "config " << s.config_hash << ": N=" << s.n << " M=" << s.m << " rounds=" << s.rounds
                << " mean cost=" << s.mean_cost << " min SNR=" << s.min_snr_db << " dB\n";
      for (const auto& p : s.outputs) std::cout << "  wrote " << p.string() << "\n";
      for (const auto& v : s.violations) std::cerr << "violation: " << v << "\n";
      return s.violations.empty() ? 0 : kExitViolation;
    }

    if (cb->parsed()) {
      json j;
      std::size_t n = cb_n;
      if (!cb_pary.empty()) {
        const auto topo = cmr::gen_pary_tree(cb_pary[0], cb_pary[1]);
        n = topo.size();
        j["pary_cost"] = cmr::pary_cost(cb_pary[0], cb_pary[1], cb_m);
      }
      if (n == 0) throw cmr::InputError("cost-bounds: give --n or --pary");
      const auto b = cmr::cost_bounds(n, cb_m);
      j["n"] = n;
      j["m"] = cb_m;
      j["min"] = b.min;
      j["max"] = b.max;
      j["baseline"] = cmr::baseline_cost(n, cb_m);
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (an->parsed()) {
      json j;
      if (an_trace) {
        const auto loaded = cmr::load_trace(*an_trace);
        const auto rc = cmr::round_correlation(loaded.trace);
        const auto ic = cmr::increment_correlation(loaded.trace);
        const auto rcv = cmr::defined_values(rc);
        const auto icv = cmr::defined_values(ic);
        std::size_t above_9995 = 0;
        std::size_t above_08 = 0;
        for (double v : rcv) above_9995 += v > 0.9995;
        for (double v : icv) above_08 += v > 0.8;
        j["trace"] = {{"rounds", loaded.trace.n_rounds()},
                      {"nodes", loaded.trace.n_nodes()},
                      {"filtered_rounds", loaded.filtered_rounds},
                      {"round_correlation", boxplot_json(rcv)},
                      {"round_correlation_undefined", rc.size() - rcv.size()},
                      {"fraction_round_corr_above_0.9995", rcv.empty() ? 0.0 : double(above_9995) / rcv.size()},
                      {"increment_correlation", boxplot_json(icv)},
                      {"increment_correlation_undefined", ic.size() - icv.size()},
                      {"fraction_increment_corr_above_0.8", icv.empty() ? 0.0 : double(above_08) / icv.size()}};
      }
      for (const auto& m : an_metrics) {
        const auto snr = read_snr_column(m);
        j["metrics"][m] = {{"snr_db", boxplot_json(snr)}, {"slope_db_per_round", snr.size() >= 2 ? cmr::ls_slope(snr) : 0.0}};
      }
      if (j.is_null()) throw cmr::InputError("analyze: give --trace and/or --metrics");
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (kg->parsed()) {
      const bool test = kg_profile == "test-512";
      std::vector<cmr::NodeId> ids;
      for (std::size_t i = 1; i <= kg_n; ++i) ids.push_back(static_cast<cmr::NodeId>(i));
      const auto keys = cmr::generate_keys(ids, test ? 512 : 2048, test ? 512 : 1024, kg_seed);
      const fs::path dir(kg_dir);
      fs::create_directories(dir);
      cmr::crypto::write_text(dir / "collector.pub", cmr::crypto::to_pem(keys.collector.pub));
      cmr::crypto::write_text(dir / "collector.key", cmr::crypto::to_pem(keys.collector));
      for (const auto& [id, k] : keys.signing) {
        cmr::crypto::write_text(dir / ("node_" + std::to_string(id) + ".pub"), cmr::crypto::to_pem(k.pub));
        cmr::crypto::write_text(dir / ("node_" + std::to_string(id) + ".key"), cmr::crypto::to_pem(k));
      }
      std::cout << "wrote " << 2 + 2 * keys.signing.size() << " key files to " << dir.string() << "\n";
      return 0;
    }
  } catch (const cmr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
