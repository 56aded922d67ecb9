#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "meshfl/netsim.hpp"
#include "meshfl/routing.hpp"
#include "meshfl/scenario.hpp"
#include "meshfl/util.hpp"

using namespace meshfl;

namespace {

// Engine over an n-router chain with every radio link preset to rate_mbps.
struct ChainRig {
  Scenario scenario;
  Engine engine;
  ShortestPathRouting policy;

  ChainRig(int n, double rate_mbps, double loss = 0.0, int chunk_size = 1500,
           std::uint64_t seed = 1, int queue_capacity = 100)
      : scenario(make_scenario(n, chunk_size, queue_capacity)),
        engine(scenario.topology, scenario.netsim, seed),
        policy(engine) {
    engine.set_policy(&policy);
    set_rates(rate_mbps, loss);
  }

  static Scenario make_scenario(int n, int chunk_size, int queue_capacity) {
    nlohmann::json j = testutil::chain_json(n);
    j["netsim"] = {{"chunk_size_bytes", chunk_size}, {"queue_capacity", queue_capacity}};
    return scenario_from_json(j, "");
  }

  void set_rates(double rate_mbps, double loss = 0.0) {
    std::vector<Engine::LinkStateUpdate> updates;
    for (int i = 0; i < engine.num_dlinks(); ++i)
      updates.push_back({i, rate_mbps, loss, rate_mbps > 0.0 ? 4 : -1});
    engine.apply_link_states(updates, engine.now());
  }
};

}  // namespace

TEST_CASE("start_flow splits into ceil(size/chunk_size) chunks") {
  ChainRig rig(2, 39.0);
  const FlowId f = rig.engine.start_flow(0, 1, 5'800'000, 0.0, true, "model");
  CHECK(rig.engine.flow(f).num_chunks == 3867);
  const FlowId tiny = rig.engine.start_flow(0, 1, 1, 0.0, true, "tiny");
  CHECK(rig.engine.flow(tiny).num_chunks == 1);
  CHECK_THROWS_AS(rig.engine.start_flow(0, 0, 10, 0.0, true, "self"), RuntimeFault);
  CHECK_THROWS_AS(rig.engine.start_flow(0, 1, 0, 0.0, true, "empty"), RuntimeFault);
}

TEST_CASE("transmit: 1500 B at 39 Mbps takes 307.7 us") {
  ChainRig rig(2, 39.0);
  const FlowId f = rig.engine.start_flow(0, 1, 1500, 0.0, true, "");
  rig.engine.run();
  CHECK(rig.engine.end_to_end_delay(f) ==
        doctest::Approx(1500.0 * 8.0 / 39e6).epsilon(1e-12));
  REQUIRE(rig.engine.delay_samples().size() == 1);
  CHECK(rig.engine.delay_samples()[0].delay_s == doctest::Approx(307.7e-6).epsilon(1e-3));
}

TEST_CASE("5.8 MB single hop at 39 Mbps completes in ~1.19 s") {
  ChainRig rig(2, 39.0);
  const FlowId f = rig.engine.start_flow(0, 1, 5'800'000, 0.0, true, "");
  rig.engine.run();
  CHECK(rig.engine.end_to_end_delay(f) == doctest::Approx(5.8e6 * 8.0 / 39e6).epsilon(0.001));
}

TEST_CASE("5.8 MB over a 3-hop chain: serialization plus two pipeline-fill terms") {
  ChainRig rig(4, 39.0);
  const FlowId f = rig.engine.start_flow(0, 3, 5'800'000, 0.0, true, "");
  rig.engine.run();
  const double expect = 5.8e6 * 8.0 / 39e6 + 2.0 * 1500.0 * 8.0 / 39e6;
  CHECK(rig.engine.end_to_end_delay(f) == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("FIFO serialization: back-to-back chunks complete tx-delay apart") {
  ChainRig rig(2, 39.0);
  const FlowId f = rig.engine.start_flow(0, 1, 3000, 0.0, true, "");
  rig.engine.run();
  const auto& chunks = rig.engine.flow(f).chunks;
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[1].delivered_t - chunks[0].delivered_t ==
        doctest::Approx(1500.0 * 8.0 / 39e6).epsilon(1e-12));
}

TEST_CASE("run_until with an empty queue returns immediately at t_end") {
  ChainRig rig(2, 39.0);
  rig.engine.run_until(123.0);
  CHECK(rig.engine.now() == 123.0);
}

TEST_CASE("same-time events execute in insertion sequence order") {
  ChainRig rig(2, 39.0);
  std::vector<int> order;
  rig.engine.schedule(1.0, EventKind::round_timer, [&] { order.push_back(1); });
  rig.engine.schedule(1.0, EventKind::round_timer, [&] { order.push_back(2); });
  rig.engine.schedule(0.5, EventKind::round_timer, [&] { order.push_back(0); });
  rig.engine.run();
  CHECK(order == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(rig.engine.schedule(0.1, EventKind::round_timer, [] {}), RuntimeFault);
}

TEST_CASE("fixed seed and config give byte-identical event logs") {
  auto run_once = [] {
    ChainRig rig(3, 39.0, 0.2, 1500, 77);
    rig.engine.start_flow(0, 2, 200'000, 0.0, true, "a");
    rig.engine.start_flow(2, 0, 100'000, 0.5, true, "b");
    rig.engine.run();
    std::string all;
    for (const auto& line : rig.engine.event_log()) all += line + "\n";
    return all;
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("telemetry consistency: chunk end-to-end equals the hop_log sum") {
  ChainRig rig(4, 39.0, 0.1, 1500, 5);
  const FlowId f = rig.engine.start_flow(0, 3, 150'000, 0.0, true, "");
  rig.engine.run();
  REQUIRE(rig.engine.flow(f).complete());
  for (const auto& c : rig.engine.flow(f).chunks) {
    REQUIRE(c.state == ChunkState::delivered);
    double hop_sum = 0.0;
    for (const auto& h : c.hop_log) hop_sum += h.delay();
    CHECK(std::abs((c.delivered_t - c.injected_t) - hop_sum) < 1e-9);
  }
}

TEST_CASE("conservation: injected = delivered + dead + in flight") {
  ChainRig rig(3, 39.0, 0.4, 1500, 11);
  rig.engine.start_flow(0, 2, 60'000, 0.0, /*reliable=*/false, "lossy");
  rig.engine.run();
  const auto& c = rig.engine.counters();
  CHECK(c.chunks_injected ==
        c.chunks_delivered + c.chunks_dead + rig.engine.chunks_in_flight());
  CHECK(c.losses > 0);
  // unreliable flow dies on its first lost chunk
  CHECK(rig.engine.flow(0).failed);
  CHECK_THROWS_AS(rig.engine.end_to_end_delay(0), RuntimeFault);
}

TEST_CASE("reliable flows retransmit through loss and still complete") {
  ChainRig rig(3, 39.0, 0.3, 1500, 13);
  const FlowId f = rig.engine.start_flow(0, 2, 150'000, 0.0, true, "");
  rig.engine.run();
  CHECK(rig.engine.flow(f).complete());
  CHECK(rig.engine.counters().retransmissions > 0);
  CHECK(rig.engine.counters().losses == rig.engine.counters().retransmissions);
}

TEST_CASE("queue overflow drops the tail") {
  ChainRig rig(3, 0.5, 0.0, 1500, 1, /*queue_capacity=*/2);
  // window 8 > capacity 2 at the slow first hop
  rig.engine.start_flow(0, 2, 30'000, 0.0, /*reliable=*/false, "burst");
  rig.engine.run();
  CHECK(rig.engine.counters().drops_overflow > 0);
}

TEST_CASE("rate 0 holds queued chunks until the next link-state update") {
  ChainRig rig(2, 39.0);
  const FlowId f = rig.engine.start_flow(0, 1, 15'000, 0.0, true, "");
  rig.engine.schedule(1e-4, EventKind::scheduler_tick, [&] { rig.set_rates(0.0); });
  rig.engine.schedule(0.25, EventKind::scheduler_tick, [&] { rig.set_rates(39.0); });
  rig.engine.run();
  REQUIRE(rig.engine.flow(f).complete());
  // the flow needed the link back up, so it finishes after 0.25 s
  CHECK(rig.engine.end_to_end_delay(f) > 0.25);
  // chunks already queued on the downed link were held, not dropped
  CHECK(rig.engine.counters().drops_overflow == 0);
  CHECK(rig.engine.counters().losses == 0);
}

TEST_CASE("unreachable destination drops with a no_route event") {
  ChainRig rig(3, 39.0);
  rig.set_rates(0.0);  // everything down
  rig.engine.start_flow(0, 2, 1500, 0.0, /*reliable=*/false, "");
  rig.engine.run();
  CHECK(rig.engine.counters().drops_no_route == 1);
  bool saw_drop = false;
  for (const auto& line : rig.engine.event_log())
    if (line.find("chunk_drop") != std::string::npos &&
        line.find("no_route") != std::string::npos)
      saw_drop = true;
  CHECK(saw_drop);
}

TEST_CASE("flow-table entries suppress routing-module queries within a tick") {
  ChainRig rig(3, 39.0);
  const FlowId f = rig.engine.start_flow(0, 2, 6000, 0.0, true, "");  // 4 chunks
  rig.engine.run();
  REQUIRE(rig.engine.flow(f).complete());
  // decisions happen at r0 and r1; the first chunk misses, the rest hit
  CHECK(rig.engine.counters().policy_queries == 2);
  CHECK(rig.engine.counters().flow_table_hits == 6);
}

TEST_CASE("host attachment links are ideal: zero-delay hops at either end") {
  Scenario s = load_scenario(testutil::scenario_path("mcs_micro.json"));
  Engine engine(s.topology, s.netsim, 1);
  ShortestPathRouting policy(engine);
  engine.set_policy(&policy);
  std::vector<Engine::LinkStateUpdate> updates{{0, 39.0, 0.0, 4}, {1, 39.0, 0.0, 4}};
  engine.apply_link_states(updates, 0.0);
  const FlowId f = engine.start_flow(engine.node_index("w1"), engine.node_index("srv"), 5'800'000,
                                     0.0, true, "upload");
  engine.run();
  REQUIRE(engine.flow(f).complete());
  // mesh serialization only; the two ideal hops add nothing
  CHECK(engine.end_to_end_delay(f) == doctest::Approx(5.8e6 * 8.0 / 39e6).epsilon(0.001));
}

TEST_CASE("end_to_end_delay of an incomplete flow is an error") {
  ChainRig rig(2, 39.0);
  const FlowId f = rig.engine.start_flow(0, 1, 1500, 10.0, true, "later");
  rig.engine.run_until(5.0);
  CHECK_THROWS_AS(rig.engine.end_to_end_delay(f), RuntimeFault);
}

TEST_CASE("randomized stress: invariants hold on arbitrary rings with chords") {
  // Deterministic generator drives topology, rates, loss, and workload; every
  // run must satisfy conservation, telemetry consistency, time-ordering, and
  // reproducibility.
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    RngStream gen(1000 + trial, "stress/gen");
    const int n = 3 + static_cast<int>(gen.uniform() * 5);

    nlohmann::json nodes = nlohmann::json::array();
    nlohmann::json links = nlohmann::json::array();
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);  // ring
    const int chords = static_cast<int>(gen.uniform() * n);
    for (int k = 0; k < chords; ++k) {
      const int a = static_cast<int>(gen.uniform() * n);
      const int b = static_cast<int>(gen.uniform() * n);
      if (a == b) continue;
      const auto e = std::minmax(a, b);
      if (std::find(edges.begin(), edges.end(), std::make_pair(e.first, e.second)) ==
          edges.end())
        edges.emplace_back(e.first, e.second);
    }
    std::vector<nlohmann::json> ifaces(n, nlohmann::json::array());
    for (std::size_t li = 0; li < edges.size(); ++li) {
      const std::string ia = "l" + std::to_string(li) + "a";
      const std::string ib = "l" + std::to_string(li) + "b";
      ifaces[edges[li].first].push_back({{"iface_id", ia}, {"band", "5GHz"}, {"channel", 36}});
      ifaces[edges[li].second].push_back({{"iface_id", ib}, {"band", "5GHz"}, {"channel", 36}});
      links.push_back({"n" + std::to_string(edges[li].first), ia,
                       "n" + std::to_string(edges[li].second), ib});
    }
    for (int i = 0; i < n; ++i) {
      const double angle = 2.0 * 3.141592653589793 * i / n;
      nodes.push_back({{"id", "n" + std::to_string(i)},
                       {"role", "router"},
                       {"position", {40.0 * std::cos(angle), 40.0 * std::sin(angle)}},
                       {"interfaces", ifaces[i]}});
    }
    nlohmann::json j = {{"seed", trial},
                        {"nodes", nodes},
                        {"links", links},
                        {"channel_model", {{"name", "log_distance"}}},
                        {"netsim", {{"chunk_size_bytes", 1500}, {"queue_capacity", 20}}}};
    const Scenario s = scenario_from_json(j, "");

    auto run_once = [&](std::string* log_out) {
      Engine engine(s.topology, s.netsim, trial);
      ShortestPathRouting policy(engine);
      engine.set_policy(&policy);
      RngStream cfg(2000 + trial, "stress/cfg");
      std::vector<Engine::LinkStateUpdate> ups;
      for (int i = 0; i < engine.num_dlinks(); ++i) {
        const double pick = cfg.uniform();
        const double rate = pick < 0.15 ? 0.0 : (pick < 0.5 ? 6.5 : 39.0);
        const double loss = cfg.uniform() < 0.3 ? 0.3 : 0.0;
        ups.push_back({i, rate, loss, rate > 0.0 ? 4 : -1});
      }
      engine.apply_link_states(ups, 0.0);
      const int flows = 3 + static_cast<int>(cfg.uniform() * 4);
      for (int f = 0; f < flows; ++f) {
        const int src = static_cast<int>(cfg.uniform() * n);
        int dst = static_cast<int>(cfg.uniform() * n);
        if (dst == src) dst = (dst + 1) % n;
        const long bytes = 5000 + static_cast<long>(cfg.uniform() * 95000);
        engine.start_flow(src, dst, bytes, cfg.uniform(), cfg.uniform() < 0.7, "f");
      }
      engine.run();

      const auto& c = engine.counters();
      CHECK(c.chunks_injected ==
            c.chunks_delivered + c.chunks_dead + engine.chunks_in_flight());
      for (int f = 0; f < engine.num_flows(); ++f) {
        for (const auto& chunk : engine.flow(f).chunks) {
          if (chunk.state != ChunkState::delivered) continue;
          double hop_sum = 0.0;
          for (const auto& h : chunk.hop_log) hop_sum += h.delay();
          CHECK(std::abs((chunk.delivered_t - chunk.injected_t) - hop_sum) < 1e-9);
        }
      }
      // event log times never go backwards
      double prev_t = -1.0;
      for (const auto& line : engine.event_log()) {
        const auto ev = nlohmann::json::parse(line);
        if (!ev.contains("t")) continue;
        CHECK(ev["t"].get<double>() >= prev_t);
        prev_t = ev["t"].get<double>();
      }
      if (log_out)
        for (const auto& line : engine.event_log()) *log_out += line + "\n";
    };
    std::string log_a, log_b;
    run_once(&log_a);
    run_once(&log_b);
    CHECK(log_a == log_b);
  }
}

TEST_CASE("netsim config validation") {
  NetsimConfig c;
  c.chunk_size_bytes = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = NetsimConfig{};
  c.chunk_size_bytes = 100'000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = NetsimConfig{};
  c.flow_window_chunks = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
