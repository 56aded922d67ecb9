#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "meshfl/channel.hpp"
#include "meshfl/experiment.hpp"
#include "meshfl/scenario.hpp"
#include "meshfl/util.hpp"

using namespace meshfl;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MESHFL_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::map<std::string, std::string> hash_tree(const std::string& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    out[fs::relative(entry.path(), root).string()] = hash_file(entry.path().string());
  }
  return out;
}

}  // namespace

TEST_CASE("run artifacts: complete set, hashed manifest, deterministic re-run") {
  Scenario s = load_scenario(testutil::scenario_path("testbed10.json"));
  const std::string out1 = testutil::fresh_tmp_dir("run1");
  const std::string out2 = testutil::fresh_tmp_dir("run2");
  RunSpec spec;
  spec.policy = "marl_online";
  spec.rounds = 3;
  spec.out_dir = out1;
  const RunResult r1 = run_experiment(s, spec);
  spec.out_dir = out2;
  const RunResult r2 = run_experiment(s, spec);

  for (const char* f :
       {"rounds.csv", "delays.csv", "links_timeline.csv", "events.jsonl", "qtables.json",
        "manifest.json"})
    CHECK(fs::exists(out1 + "/" + f));

  // manifest hashes match file contents
  const auto manifest = nlohmann::json::parse(testutil::slurp(out1 + "/manifest.json"));
  for (const auto& [name, hash] : manifest["artifacts"].items())
    CHECK(hash.get<std::string>() == hash_file(out1 + "/" + name));

  // byte-identical across reruns with the same seed
  for (const char* f : {"rounds.csv", "delays.csv", "qtables.json", "events.jsonl"})
    CHECK(testutil::slurp(out1 + "/" + f) == testutil::slurp(out2 + "/" + f));

  // a different seed moves the delay telemetry
  RunSpec other = spec;
  other.seed = 777;
  other.out_dir = testutil::fresh_tmp_dir("run3");
  run_experiment(s, other);
  CHECK(testutil::slurp(out1 + "/delays.csv") != testutil::slurp(other.out_dir + "/delays.csv"));
  CHECK(r1.counters.chunks_delivered == r2.counters.chunks_delivered);
}

TEST_CASE("frozen transfer: snapshot import, zero updates, rounds complete") {
  Scenario s = load_scenario(testutil::scenario_path("diamond_bottleneck.json"));
  const std::string out = testutil::fresh_tmp_dir("frozen_src");
  RunSpec online;
  online.policy = "marl_online";
  online.rounds = 10;
  online.out_dir = out;
  const RunResult trained = run_experiment(s, online);
  CHECK(trained.q_updates_applied > 0);

  RunSpec frozen;
  frozen.policy = "marl_frozen=" + out + "/qtables.json";
  frozen.rounds = 10;
  const RunResult target = run_experiment(s, frozen);
  CHECK(target.rounds.size() == 10);
  CHECK(target.q_updates_applied == 0);
  CHECK(target.q_updates_skipped == target.reward_events);
  CHECK(target.reward_events > 0);
  // frozen tables leave the run exactly as they entered it
  CHECK(target.qtables == trained.qtables);

  // warm start: the same snapshot keeps learning under marl_online
  RunSpec warm;
  warm.policy = "marl_online=" + out + "/qtables.json";
  warm.rounds = 2;
  const RunResult resumed = run_experiment(s, warm);
  CHECK(resumed.q_updates_applied > 0);
  CHECK(resumed.qtables != trained.qtables);
}

TEST_CASE("compare: jobs=1 and jobs=4 produce identical artifact trees") {
  Scenario s = load_scenario(testutil::scenario_path("fl_oracle_pair.json"));
  CompareSpec spec;
  spec.policies = {"shortest_path", "marl_online"};
  spec.seeds = {1, 2};
  spec.out_dir = testutil::fresh_tmp_dir("cmp_seq");
  spec.jobs = 1;
  const CompareResult seq = run_compare(s, spec);
  spec.out_dir = testutil::fresh_tmp_dir("cmp_par");
  spec.jobs = 4;
  const CompareResult par = run_compare(s, spec);

  REQUIRE(seq.cells.size() == 4);
  for (const auto& cell : seq.cells) CHECK(cell.ok);
  const auto a = hash_tree(fs::path(seq.summary_path).parent_path().string());
  const auto b = hash_tree(fs::path(par.summary_path).parent_path().string());
  CHECK(a == b);
  CHECK(a.size() > 4);
}

TEST_CASE("compare summary: one row per policy") {
  Scenario s = load_scenario(testutil::scenario_path("fl_oracle_pair.json"));
  CompareSpec spec;
  spec.policies = {"shortest_path"};
  spec.seeds = {7};
  spec.jobs = 1;
  spec.out_dir = testutil::fresh_tmp_dir("cmp_one");
  run_compare(s, spec);
  const std::string summary = testutil::slurp(spec.out_dir + "/summary.csv");
  int lines = 0;
  for (char c : summary) lines += c == '\n';
  CHECK(lines == 2);  // header + 1 policy row
  CHECK(fs::exists(spec.out_dir + "/plot_time_per_round.dat"));
  CHECK(fs::exists(spec.out_dir + "/plot_loss_vs_round.dat"));
  CHECK(fs::exists(spec.out_dir + "/plot_loss_vs_time.dat"));
}

TEST_CASE("compare: 3 policies x 3 seeds = 9 runs and a 3-row summary") {
  Scenario s = load_scenario(testutil::scenario_path("fl_oracle_pair.json"));
  // train a snapshot for the frozen policy first
  const std::string snap_dir = testutil::fresh_tmp_dir("cmp_snap");
  RunSpec train;
  train.policy = "marl_online";
  train.rounds = 5;
  train.out_dir = snap_dir;
  run_experiment(s, train);

  CompareSpec spec;
  spec.policies = {"shortest_path", "marl_online", "marl_frozen=" + snap_dir + "/qtables.json"};
  spec.seeds = {1, 2, 3};
  spec.jobs = 3;
  spec.out_dir = testutil::fresh_tmp_dir("cmp_nine");
  const CompareResult r = run_compare(s, spec);
  REQUIRE(r.cells.size() == 9);
  for (const auto& cell : r.cells) CHECK(cell.ok);
  const std::string summary = testutil::slurp(spec.out_dir + "/summary.csv");
  int lines = 0;
  for (char c : summary) lines += c == '\n';
  CHECK(lines == 4);  // header + 3 policy rows
  // per-run artifacts land under policy/seed directories
  CHECK(fs::exists(spec.out_dir + "/marl_frozen/seed_3/rounds.csv"));
}

TEST_CASE("trace generation is byte-deterministic for a fixed seed") {
  Scenario s = load_scenario(testutil::scenario_path("trace_roundtrip.json"));
  RunSpec a, b;
  a.out_dir = testutil::fresh_tmp_dir("gen_a");
  b.out_dir = testutil::fresh_tmp_dir("gen_b");
  run_trace_generate(s, a);
  run_trace_generate(s, b);
  for (const char* f : {"ra_we.csv", "rb_ww.csv", "rb_we.csv", "rc_ww.csv"})
    CHECK(testutil::slurp(a.out_dir + "/traces/" + f) ==
          testutil::slurp(b.out_dir + "/traces/" + f));
  // and the shadowing actually varies tick to tick
  const std::string body = testutil::slurp(a.out_dir + "/traces/ra_we.csv");
  const auto lines = split(body, '\n');
  CHECK(lines[1] != lines[2]);
}

TEST_CASE("a failed FL flow aborts the round with a diagnostic") {
  nlohmann::json j =
      nlohmann::json::parse(testutil::slurp(testutil::scenario_path("fl_oracle_pair.json")));
  // lossy link + zero retransmit budget: the first lost chunk kills an upload
  const std::string dir = testutil::fresh_tmp_dir("abort");
  std::string rows = std::string(kTraceCsvHeader) + "\n";
  for (int k = 0; k <= 40; ++k) rows += meshfl::fmt_double(5.0 * k) + ",4,-70.0,0.5,39.0\n";
  testutil::spit(dir + "/ra_w0.csv", rows);
  testutil::spit(dir + "/rb_w0.csv", rows);
  j["nodes"][0]["interfaces"][0]["trace_file"] = dir + "/ra_w0.csv";
  j["nodes"][1]["interfaces"][0]["trace_file"] = dir + "/rb_w0.csv";
  j["netsim"]["max_retransmits"] = 0;
  const Scenario s = scenario_from_json(j, testutil::scenario_dir());
  RunSpec spec;
  spec.rounds = 2;
  bool threw = false;
  try {
    run_experiment(s, spec);
  } catch (const RuntimeFault& e) {
    threw = true;
    CHECK(std::string(e.what()).find("aborted") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("trace generate + replay round trip through the experiment layer") {
  Scenario s = load_scenario(testutil::scenario_path("trace_roundtrip.json"));
  RunSpec gen_spec;
  gen_spec.out_dir = testutil::fresh_tmp_dir("tracegen");
  const RunResult gen = run_trace_generate(s, gen_spec);
  REQUIRE(gen.link_timeline.size() == 11);

  Scenario replay = s;
  for (auto& n : replay.topology.nodes)
    for (auto& r : n.interfaces)
      r.trace_file = gen_spec.out_dir + "/traces/" + n.id + "_" + r.iface_id + ".csv";
  RunSpec rep_spec;
  const RunResult rep = run_experiment(replay, rep_spec);
  REQUIRE(rep.link_timeline.size() == gen.link_timeline.size());
  for (std::size_t t = 0; t < gen.link_timeline.size(); ++t)
    for (std::size_t i = 0; i < gen.link_timeline[t].size(); ++i) {
      CHECK(gen.link_timeline[t][i].mcs_index == rep.link_timeline[t][i].mcs_index);
      CHECK(gen.link_timeline[t][i].effective_rate_mbps ==
            rep.link_timeline[t][i].effective_rate_mbps);
    }
}

TEST_CASE("CLI: exit-code discipline") {
  const std::string dir = testutil::fresh_tmp_dir("cli");

  CHECK(run_cli("validate --config " + testutil::scenario_path("testbed10.json")) == 0);

  // schema error -> 1
  nlohmann::json bad = nlohmann::json::parse(testutil::slurp(testutil::scenario_path("testbed10.json")));
  bad["nodes"][0]["role"] = "rotuer";
  testutil::spit(dir + "/bad_role.json", bad.dump());
  CHECK(run_cli("validate --config " + dir + "/bad_role.json") == 1);

  // missing trace file in replay mode -> 1
  nlohmann::json missing = nlohmann::json::parse(testutil::slurp(testutil::scenario_path("diamond_bottleneck.json")));
  missing["nodes"][1]["interfaces"][1]["trace_file"] = "traces/never_there.csv";
  testutil::spit(dir + "/missing_trace.json", missing.dump());
  CHECK(run_cli("validate --config " + dir + "/missing_trace.json") == 1);

  // unknown policy -> 1 (validation-class error)
  CHECK(run_cli("run --config " + testutil::scenario_path("fl_oracle_pair.json") + " --out " +
                dir + "/x --policy warp_drive") == 1);

  // missing config file -> 1
  CHECK(run_cli("validate --config " + dir + "/nope.json") == 1);
}

TEST_CASE("CLI: run/compare/trace smoke with artifacts") {
  const std::string dir = testutil::fresh_tmp_dir("cli_run");
  const std::string cfg = testutil::scenario_path("fl_oracle_pair.json");

  CHECK(run_cli("run --config " + cfg + " --out " + dir + "/r --rounds 2 --seed 5") == 0);
  CHECK(fs::exists(dir + "/r/rounds.csv"));
  const std::string rounds = testutil::slurp(dir + "/r/rounds.csv");
  int lines = 0;
  for (char c : rounds) lines += c == '\n';
  CHECK(lines == 3);  // header + 2 rounds

  CHECK(run_cli("run --config " + cfg + " --out " + dir + "/r2 --rounds 2 --seed 5") == 0);
  CHECK(testutil::slurp(dir + "/r/rounds.csv") == testutil::slurp(dir + "/r2/rounds.csv"));

  CHECK(run_cli("trace generate --config " + testutil::scenario_path("trace_roundtrip.json") +
                " --out " + dir + "/gen") == 0);
  CHECK(fs::exists(dir + "/gen/traces/ra_we.csv"));
  CHECK(run_cli("trace replay --config " + testutil::scenario_path("trace_roundtrip.json") +
                " --traces " + dir + "/gen/traces --out " + dir + "/rep") == 0);
  CHECK(fs::exists(dir + "/rep/links_timeline.csv"));
  // generated and replayed timelines agree tick by tick
  CHECK(testutil::slurp(dir + "/gen/links_timeline.csv") ==
        testutil::slurp(dir + "/rep/links_timeline.csv"));

  CHECK(run_cli("compare --config " + cfg + " --out " + dir + "/cmp --seeds 1,2 --jobs 2") == 0);
  CHECK(fs::exists(dir + "/cmp/summary.csv"));
}
