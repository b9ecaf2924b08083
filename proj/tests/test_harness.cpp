#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cmr/error.hpp"
#include "cmr/harness.hpp"
#include "cmr/reading_protocol.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cmr_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + CMR_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

cmr::ExperimentConfig small_chain(const fs::path& out) {
  cmr::ExperimentConfig c;
  c.topology.kind = cmr::TopologyKind::kChain;
  c.topology.n = 10;
  c.m = 3;
  c.rounds = 5;
  c.bounds = false;
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST(Config, JsonRoundTripAndHash) {
  cmr::ExperimentConfig c;
  c.topology.kind = cmr::TopologyKind::kPary;
  c.topology.p = 3;
  c.topology.layers = 4;
  c.m = 12;
  c.rounds = 7;
  c.mode = cmr::RunMode::kSecure;
  c.bound_mode = cmr::EstimateMode::kExact;
  c.attack = cmr::parse_attack_plan("replay:round=3,link=4->2");
  c.master_seed = 99;
  const std::string text = cmr::config_to_json(c);
  const cmr::ExperimentConfig back = cmr::config_from_json(text);
  EXPECT_EQ(cmr::config_to_json(back), text);
  EXPECT_EQ(cmr::config_hash(back), cmr::config_hash(c));

  cmr::ExperimentConfig elsewhere = c;
  elsewhere.output_dir = "somewhere/else";
  EXPECT_EQ(cmr::config_hash(elsewhere), cmr::config_hash(c));
  cmr::ExperimentConfig other = c;
  other.master_seed = 100;
  EXPECT_NE(cmr::config_hash(other), cmr::config_hash(c));
}

TEST(Config, PartialJsonKeepsDefaults) {
  const auto c = cmr::config_from_json(R"({"rounds": 3})");
  EXPECT_EQ(c.rounds, 3u);
  EXPECT_EQ(c.topology.n, 128u);
  EXPECT_FALSE(c.m.has_value());
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(cmr::config_from_json("{not json"), cmr::InputError);
  EXPECT_THROW(cmr::config_from_json(R"({"mode": "loud"})"), cmr::InputError);
}

TEST(Config, SubseedsAreDistinctAndStable) {
  EXPECT_EQ(cmr::subseed(1, "trace"), cmr::subseed(1, "trace"));
  EXPECT_NE(cmr::subseed(1, "trace"), cmr::subseed(1, "topology"));
  EXPECT_NE(cmr::subseed(1, "trace"), cmr::subseed(2, "trace"));
}

TEST(Config, ResolveM) {
  cmr::ExperimentConfig c;
  c.m = 1;
  EXPECT_THROW(cmr::resolve_m(c, 10), cmr::InputError);
  c.m = 10;
  EXPECT_THROW(cmr::resolve_m(c, 10), cmr::InputError);
  c.m = 9;
  EXPECT_EQ(cmr::resolve_m(c, 10), 9u);
  c.m.reset();
  c.m_ratio = 0.3;
  const auto m = cmr::resolve_m(c, 128);
  EXPECT_GE(m, 2u);
  EXPECT_LT(m, 128u);
}

TEST(AttackPlan, Parses) {
  const auto p = cmr::parse_attack_plan("tamper:round=4,link=7->3,target=9,transmissions=3");
  EXPECT_EQ(p.kind, cmr::AttackKind::kTamper);
  EXPECT_EQ(p.round, 4u);
  ASSERT_TRUE(p.link.has_value());
  EXPECT_EQ(p.link->child, 7u);
  EXPECT_EQ(p.link->parent, 3u);
  EXPECT_EQ(p.target, 9u);
  EXPECT_EQ(p.transmissions, 3u);
  EXPECT_EQ(cmr::parse_attack_plan("eavesdrop").kind, cmr::AttackKind::kEavesdrop);
  EXPECT_THROW(cmr::parse_attack_plan("flood:round=1"), cmr::InputError);
  EXPECT_THROW(cmr::parse_attack_plan("tamper:round"), cmr::InputError);
  EXPECT_THROW(cmr::parse_attack_plan("tamper:link=3-2"), cmr::InputError);
  EXPECT_THROW(cmr::parse_attack_plan("tamper:speed=3"), cmr::InputError);
}

TEST(Experiment, ChainCostAndOutputs) {
  const auto dir = fresh_dir("chain");
  const auto s = cmr::run_experiment(small_chain(dir));
  EXPECT_TRUE(s.violations.empty());
  EXPECT_EQ(s.n, 10u);
  EXPECT_EQ(s.m, 3u);
  EXPECT_DOUBLE_EQ(s.mean_cost, 27.0);
  ASSERT_EQ(s.outputs.size(), 4u);
  for (const auto& p : s.outputs) EXPECT_TRUE(fs::exists(p)) << p;

  std::ifstream in(dir / "rounds.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    if (j.value("bootstrap", false)) {
      EXPECT_EQ(j.at("cost").get<std::size_t>(), 55u);
    } else {
      EXPECT_EQ(j.at("cost").get<std::size_t>(), 27u);
    }
    EXPECT_EQ(j.at("config_hash").get<std::string>(), s.config_hash);
    ++lines;
  }
  EXPECT_EQ(lines, 5u);
  const auto summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary.at("config_hash").get<std::string>(), s.config_hash);
  EXPECT_EQ(slurp(dir / "metrics.csv").rfind("# config_hash=" + s.config_hash, 0), 0u);
}

TEST(Experiment, RerunIsByteIdentical) {
  const auto a = fresh_dir("rerun_a");
  const auto b = fresh_dir("rerun_b");
  cmr::ExperimentConfig c;
  c.topology.n = 24;
  c.m = 10;
  c.rounds = 6;
  c.output_dir = a.string();
  const auto sa = cmr::run_experiment(c);
  c.output_dir = b.string();
  const auto sb = cmr::run_experiment(c);
  EXPECT_EQ(sa.config_hash, sb.config_hash);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "rounds.jsonl"), slurp(b / "rounds.jsonl"));
}

TEST(Experiment, SecureMatchesPlainAndRejectsReplay) {
  const auto plain_dir = fresh_dir("plain");
  const auto secure_dir = fresh_dir("secure");
  cmr::ExperimentConfig c = small_chain(plain_dir);
  c.rounds = 4;
  const auto plain = cmr::run_experiment(c);
  c.mode = cmr::RunMode::kSecure;
  c.output_dir = secure_dir.string();
  c.attack = cmr::parse_attack_plan("replay:round=2");
  const auto secure = cmr::run_experiment(c);
  EXPECT_TRUE(secure.violations.empty());
  EXPECT_DOUBLE_EQ(secure.mean_cost, plain.mean_cost);

  std::ifstream in(secure_dir / "rounds.jsonl");
  std::string line;
  bool saw_attack = false;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    if (!j.contains("attack")) continue;
    saw_attack = true;
    EXPECT_EQ(j.at("round").get<std::size_t>(), 2u);
    EXPECT_TRUE(j["attack"]["injected"].get<bool>());
    EXPECT_TRUE(j["attack"]["rejected"].get<bool>());
    EXPECT_FALSE(j.at("rejections").empty());
  }
  EXPECT_TRUE(saw_attack);
}

TEST(Experiment, RejectsBadM) {
  cmr::ExperimentConfig c = small_chain(fresh_dir("bad_m"));
  c.m = 10;
  EXPECT_THROW(cmr::run_experiment(c), cmr::InputError);
}

TEST(Cli, GenTopologyPary) {
  const auto dir = fresh_dir("cli_pary");
  ASSERT_EQ(run_cli("gen-topology --pary 2 7 --out \"" + dir.string() + "\"", dir / "log.txt"), 0);
  const auto topo = cmr::load_topology(dir / "pary_2_7.json");
  EXPECT_EQ(topo.size(), 254u);
}

TEST(Cli, GenTopologyRandomIsDeterministic) {
  const auto a = fresh_dir("cli_rand_a");
  const auto b = fresh_dir("cli_rand_b");
  ASSERT_EQ(run_cli("gen-topology --random --n 128 --seeds 20 --seed 5 --out \"" + a.string() + "\"", a / "log.txt"), 0);
  ASSERT_EQ(run_cli("gen-topology --random --n 128 --seeds 20 --seed 5 --out \"" + b.string() + "\"", b / "log.txt"), 0);
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".json") continue;
    ++count;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename()));
    EXPECT_EQ(cmr::load_topology(e.path()).size(), 128u);
  }
  EXPECT_EQ(count, 20u);
}

TEST(Cli, CostBounds) {
  const auto dir = fresh_dir("cli_cb");
  ASSERT_EQ(run_cli("cost-bounds --n 128 --m 20", dir / "out.json"), 0);
  const auto j = json::parse(slurp(dir / "out.json"));
  const auto b = cmr::cost_bounds(128, 20);
  EXPECT_EQ(j.at("min").get<std::size_t>(), b.min);
  EXPECT_EQ(j.at("max").get<std::size_t>(), b.max);
}

TEST(Cli, RunAndExitCodes) {
  const auto dir = fresh_dir("cli_run");
  EXPECT_EQ(run_cli("run --topology chain --n 10 --m 3 --rounds 3 --no-bounds --out \"" + (dir / "o").string() + "\"",
                    dir / "log.txt"),
            0);
  EXPECT_TRUE(fs::exists(dir / "o" / "metrics.csv"));
  EXPECT_EQ(run_cli("run --topology chain --n 10 --m 10 --rounds 3 --out \"" + (dir / "bad").string() + "\"",
                    dir / "log2.txt"),
            1);
  EXPECT_NE(run_cli("frobnicate", dir / "log3.txt"), 0);
}

TEST(Cli, KeygenIsDeterministic) {
  const auto a = fresh_dir("cli_keys_a");
  const auto b = fresh_dir("cli_keys_b");
  ASSERT_EQ(run_cli("keygen --n 3 --seed 7 --dir \"" + a.string() + "\"", a / "log.txt"), 0);
  ASSERT_EQ(run_cli("keygen --n 3 --seed 7 --dir \"" + b.string() + "\"", b / "log.txt"), 0);
  for (const char* f : {"collector.pub", "collector.key", "node_1.pub", "node_3.key"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}
