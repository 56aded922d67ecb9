#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "meshfl/experiment.hpp"
#include "meshfl/flworkload.hpp"
#include "meshfl/scenario.hpp"
#include "meshfl/util.hpp"

using namespace meshfl;

namespace {
Vec closed_form(const Vec& w, const Vec& c, double eta, int iters) {
  Vec out(w.size());
  const double shrink = std::pow(1.0 - eta, iters);
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = c[i] + shrink * (w[i] - c[i]);
  return out;
}
}  // namespace

TEST_CASE("local_sgd: fixed point at the center") {
  WorkerObjective obj{"w", {2.0, -1.0}, 1.0};
  const Vec out = local_sgd(obj, {2.0, -1.0}, 10, 0.1, 0.0, nullptr);
  CHECK(out[0] == 2.0);
  CHECK(out[1] == -1.0);
}

TEST_CASE("local_sgd: d=1, c=2, w=0, eta=0.1, H=10 gives 2(1-0.9^10)") {
  WorkerObjective obj{"w", {2.0}, 1.0};
  const Vec out = local_sgd(obj, {0.0}, 10, 0.1, 0.0, nullptr);
  CHECK(out[0] == doctest::Approx(1.3026431198).epsilon(1e-9));
  CHECK(std::abs(out[0] - closed_form({0.0}, {2.0}, 0.1, 10)[0]) < 1e-12);
}

TEST_CASE("local_sgd matches the closed form for random inputs when sigma=0") {
  RngStream rng(5, "sgd");
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform() * 5);
    Vec w(d), c(d);
    for (int i = 0; i < d; ++i) {
      w[i] = rng.gaussian();
      c[i] = rng.gaussian();
    }
    const double eta = 0.01 + rng.uniform() * 0.5;
    const int iters = 1 + static_cast<int>(rng.uniform() * 20);
    WorkerObjective obj{"w", c, 1.0};
    const Vec got = local_sgd(obj, w, iters, eta, 0.0, nullptr);
    const Vec want = closed_form(w, c, eta, iters);
    for (int i = 0; i < d; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
  }
}

TEST_CASE("local_sgd past the stability bound diverges but still computes") {
  WorkerObjective obj{"w", {0.0}, 1.0};
  const Vec out = local_sgd(obj, {1.0}, 4, 2.5, 0.0, nullptr);  // warns on stderr
  CHECK(std::abs(out[0]) == doctest::Approx(std::pow(1.5, 4)));
}

TEST_CASE("noisy local_sgd is unbiased around the closed form") {
  WorkerObjective obj{"w", {1.0}, 1.0};
  RngStream rng(21, "noise");
  double sum = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) sum += local_sgd(obj, {0.0}, 5, 0.1, 0.3, &rng)[0];
  const double want = closed_form({0.0}, {1.0}, 0.1, 5)[0];
  CHECK(std::abs(sum / n - want) < 0.01);
}

TEST_CASE("fedavg") {
  CHECK(fedavg({{{0.0}, 1.0}, {{2.0}, 1.0}}, FLConfig::Aggregation::uniform)[0] == 1.0);
  CHECK(fedavg({{{0.0}, 1.0}, {{2.0}, 3.0}}, FLConfig::Aggregation::weighted)[0] == 1.5);
  CHECK(fedavg({{{7.5}, 2.0}}, FLConfig::Aggregation::uniform)[0] == 7.5);
  CHECK_THROWS_AS(fedavg({}, FLConfig::Aggregation::uniform), RuntimeFault);
  CHECK_THROWS_AS(fedavg({{{1.0}, 1.0}, {{1.0, 2.0}, 1.0}}, FLConfig::Aggregation::uniform),
                  RuntimeFault);
  CHECK_THROWS_AS(fedavg({{{1.0}, 0.0}}, FLConfig::Aggregation::weighted), RuntimeFault);
}

TEST_CASE("objective loss is the half squared distance") {
  WorkerObjective obj{"w", {1.0, 1.0}, 1.0};
  CHECK(obj.loss({1.0, 1.0}) == 0.0);
  CHECK(obj.loss({2.0, 1.0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(obj.loss({1.0}), RuntimeFault);
}

TEST_CASE("noise-free oracle: simulated rounds follow the FedAvg-on-quadratics recursion") {
  const Scenario s = load_scenario(testutil::scenario_path("fl_oracle_pair.json"));
  RunSpec spec;
  const RunResult r = run_experiment(s, spec);
  REQUIRE(r.rounds.size() == 20);
  double w = 0.0;
  const double shrink = std::pow(0.9, 10);
  double prev_t = 0.0;
  double prev_loss = 1e18;
  for (const auto& round : r.rounds) {
    w = 1.0 + shrink * (w - 1.0);
    REQUIRE(round.model.size() == 1);
    CHECK(std::abs(round.model[0] - w) < 1e-9);
    const double want_loss = 0.5 * (w * w + (w - 2.0) * (w - 2.0)) / 2.0;
    CHECK(std::abs(round.loss - want_loss) < 1e-9);
    CHECK(round.sim_time_s > prev_t);  // monotone wall clock
    // strictly decreasing until the residual hits machine precision at 0.5
    if (prev_loss - 0.5 > 1e-12)
      CHECK(round.loss < prev_loss);
    else
      CHECK(round.loss <= prev_loss);
    prev_t = round.sim_time_s;
    prev_loss = round.loss;
  }
}

TEST_CASE("round timing: compute 5 s + serialized uploads + serialized downloads") {
  const Scenario s = load_scenario(testutil::scenario_path("fl_oracle_pair.json"));
  RunSpec spec;
  spec.rounds = 1;
  const RunResult r = run_experiment(s, spec);
  REQUIRE(r.rounds.size() == 1);
  const double transfer = 5.8e6 * 8.0 / 39e6;  // both flows share the one mesh link
  CHECK(r.rounds[0].sim_time_s == doctest::Approx(5.0 + 2 * transfer + 2 * transfer).epsilon(0.01));
  CHECK(r.rounds[0].upload_max_s == doctest::Approx(2 * transfer).epsilon(0.01));
  CHECK(r.rounds[0].download_max_s == doctest::Approx(2 * transfer).epsilon(0.01));
}

TEST_CASE("K=1: fedavg is the identity and the loss is that worker's loss") {
  nlohmann::json j = nlohmann::json::parse(testutil::slurp(testutil::scenario_path("fl_oracle_pair.json")));
  j["nodes"].erase(3);  // drop w2
  j["fl"]["centers"].erase("w2");
  const Scenario s = scenario_from_json(j, testutil::scenario_dir());
  RunSpec spec;
  spec.rounds = 3;
  const RunResult r = run_experiment(s, spec);
  double w = 0.0;
  for (const auto& round : r.rounds) {
    w = 0.0 + std::pow(0.9, 10) * (w - 0.0);
    CHECK(std::abs(round.model[0] - w) < 1e-12);
    CHECK(std::abs(round.loss - 0.5 * w * w) < 1e-12);
  }
}

TEST_CASE("weighted aggregation uses the configured sample counts") {
  nlohmann::json j = nlohmann::json::parse(testutil::slurp(testutil::scenario_path("fl_oracle_pair.json")));
  j["fl"]["aggregation"] = "weighted";
  j["fl"]["weights"] = {{"w1", 1.0}, {"w2", 3.0}};
  const Scenario s = scenario_from_json(j, testutil::scenario_dir());
  RunSpec spec;
  spec.rounds = 1;
  const RunResult r = run_experiment(s, spec);
  const double shrink = std::pow(0.9, 10);
  // locals: w1 -> 0, w2 -> 2(1-shrink); weighted mean with (1,3)
  const double want = (1.0 * 0.0 + 3.0 * 2.0 * (1.0 - shrink)) / 4.0;
  CHECK(std::abs(r.rounds[0].model[0] - want) < 1e-12);
}

TEST_CASE("loss-vs-round is identical across routing policies (noise included)") {
  const Scenario s = load_scenario(testutil::scenario_path("testbed10.json"));
  RunSpec sp_spec, marl_spec;
  sp_spec.policy = "shortest_path";
  sp_spec.rounds = 5;
  marl_spec.policy = "marl_online";
  marl_spec.rounds = 5;
  const RunResult a = run_experiment(s, sp_spec);
  const RunResult b = run_experiment(s, marl_spec);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(a.rounds[i].loss == b.rounds[i].loss);  // bit-identical
    REQUIRE(a.rounds[i].model.size() == b.rounds[i].model.size());
    for (std::size_t k = 0; k < a.rounds[i].model.size(); ++k)
      CHECK(a.rounds[i].model[k] == b.rounds[i].model[k]);
  }
  // routing does change the timing
  CHECK(a.rounds.back().sim_time_s != b.rounds.back().sim_time_s);
}

TEST_CASE("synchronous barrier: round r+1 flows start after round r completes") {
  const Scenario s = load_scenario(testutil::scenario_path("fl_oracle_pair.json"));
  Engine engine(s.topology, s.netsim, s.topology.seed);
  ShortestPathRouting policy(engine);
  engine.set_policy(&policy);
  const McsTable& table = McsTable::default_table();
  LinkScheduler sched(s.topology, s.scheduler, table, s.topology.seed, s.base_dir);
  FLConfig fl = *s.fl;
  fl.rounds = 4;
  FLOrchestrator orch(engine, policy, s.topology, fl, s.topology.seed);
  sched.install(engine);
  orch.start();
  engine.run();
  REQUIRE(orch.rounds().size() == 4);
  for (int i = 0; i < engine.num_flows(); ++i) {
    const Flow& f = engine.flow(i);
    const std::string& label = f.label;  // "upload/w1/round3"
    const int round = std::stoi(label.substr(label.rfind("round") + 5));
    if (round > 1) {
      const double prev_complete = orch.rounds()[round - 2].sim_time_s;
      CHECK(f.start_t >= prev_complete);
    }
  }
}

TEST_CASE("per-worker compute times shift the straggler") {
  nlohmann::json j = nlohmann::json::parse(testutil::slurp(testutil::scenario_path("fl_oracle_pair.json")));
  j["fl"]["compute_time"] = {{"dist", "per_worker"},
                             {"values", {{"w1", 1.0}, {"w2", 30.0}}}};
  const Scenario s = scenario_from_json(j, testutil::scenario_dir());
  RunSpec spec;
  spec.rounds = 1;
  const RunResult r = run_experiment(s, spec);
  CHECK(r.rounds[0].straggler == "w2");
  CHECK(r.rounds[0].sim_time_s > 30.0);
}

TEST_CASE("fl config validation") {
  FLConfig c;
  c.rounds = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FLConfig{};
  c.local_iters = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FLConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FLConfig{};
  c.centers["w1"] = {1.0, 2.0};  // dim mismatch vs model_dim 10
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
