#include "meshfl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>

#include "meshfl/util.hpp"

namespace meshfl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct PolicyToken {
  std::string name;
  std::string snapshot;  // marl_frozen=<path>
};

PolicyToken parse_policy_token(const std::string& token) {
  const auto eq = token.find('=');
  if (eq == std::string::npos) return {token, ""};
  return {token.substr(0, eq), token.substr(eq + 1)};
}

std::string write_text(const std::string& dir, const std::string& name, const std::string& body) {
  const std::string path = dir + "/" + name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFault("cannot open for writing: " + path);
  out << body;
  if (!out) throw RuntimeFault("write failed: " + path);
  return name;
}

std::string delays_csv(const Engine& engine) {
  std::string body = "t,node,next_hop,flow_src,flow_dst,delay_s\n";
  for (const auto& s : engine.delay_samples()) {
    body += fmt_double(s.t);
    body += ',';
    body += engine.node_id(s.node);
    body += ',';
    body += engine.node_id(s.next_hop);
    body += ',';
    body += engine.node_id(s.flow_src);
    body += ',';
    body += engine.node_id(s.flow_dst);
    body += ',';
    body += fmt_double(s.delay_s);
    body += '\n';
  }
  return body;
}

std::string timeline_csv(const std::vector<std::vector<LinkState>>& timeline) {
  std::string body = "t,link,snr_db,mcs_index,nominal_rate_mbps,effective_rate_mbps,loss\n";
  for (const auto& tick : timeline) {
    for (const auto& ls : tick) {
      body += fmt_double(ls.updated_at);
      body += ',';
      body += ls.link;
      body += ',';
      body += fmt_double(ls.snr_db);
      body += ',';
      body += std::to_string(ls.mcs_index);
      body += ',';
      body += fmt_double(ls.nominal_rate_mbps);
      body += ',';
      body += fmt_double(ls.effective_rate_mbps);
      body += ',';
      body += fmt_double(ls.loss);
      body += '\n';
    }
  }
  return body;
}

std::string events_jsonl(const Engine& engine) {
  std::string body;
  for (const auto& line : engine.event_log()) {
    body += line;
    body += '\n';
  }
  return body;
}

McsTable load_mcs_table(const Scenario& scenario) {
  if (scenario.scheduler.mcs_table_path.empty()) return McsTable::default_table();
  return McsTable::load_csv(resolve_path(scenario, scenario.scheduler.mcs_table_path));
}

}  // namespace

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFault("cannot hash missing file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "fnv1a64:" + to_hex(fnv1a64(data));
}

void write_manifest(const std::string& dir, const std::vector<std::string>& files) {
  json artifacts = json::object();
  for (const auto& f : files) artifacts[f] = hash_file(dir + "/" + f);
  json manifest = {{"artifacts", artifacts}};
  std::ofstream out(dir + "/manifest.json", std::ios::binary);
  if (!out) throw RuntimeFault("cannot write manifest in " + dir);
  out << manifest.dump(1) << '\n';
}

RunResult run_experiment(const Scenario& scenario, const RunSpec& spec) {
  const std::uint64_t seed = spec.seed.value_or(scenario.topology.seed);

  PolicyToken token = parse_policy_token(
      spec.policy.empty() ? scenario.routing.policy : spec.policy);
  if (token.name != "shortest_path" && token.name != "marl_online" && token.name != "marl_frozen")
    throw ConfigError("unknown policy \"" + token.name + "\"");
  // marl_frozen requires a snapshot; marl_online accepts one as a warm start.
  std::string snapshot_path = token.snapshot;
  if (snapshot_path.empty() && !scenario.routing.snapshot_path.empty() &&
      token.name != "shortest_path")
    snapshot_path = resolve_path(scenario, scenario.routing.snapshot_path);
  if (token.name == "marl_frozen" && snapshot_path.empty())
    throw ConfigError("marl_frozen needs a snapshot (marl_frozen=<path> or routing.snapshot)");

  const McsTable table = load_mcs_table(scenario);
  Engine engine(scenario.topology, scenario.netsim, seed);
  LinkScheduler scheduler(scenario.topology, scenario.scheduler, table, seed, scenario.base_dir);

  std::unique_ptr<RoutingPolicy> policy;
  MarlRouting* marl = nullptr;
  if (token.name == "shortest_path") {
    policy = std::make_unique<ShortestPathRouting>(engine);
  } else {
    PolicyConfig pc = scenario.routing.params;
    pc.mode =
        token.name == "marl_frozen" ? PolicyConfig::Mode::frozen : PolicyConfig::Mode::online;
    auto m = std::make_unique<MarlRouting>(engine, pc, seed);
    marl = m.get();
    policy = std::move(m);
  }
  engine.set_policy(policy.get());

  if (marl && !snapshot_path.empty()) {
    std::ifstream in(snapshot_path);
    if (!in) throw ConfigError("cannot open Q-table snapshot: " + snapshot_path);
    json snap;
    try {
      snap = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("Q-table snapshot " + snapshot_path + " is not valid JSON: " + e.what());
    }
    marl->import_snapshot(snap);
  }

  scheduler.install(engine);

  std::unique_ptr<FLOrchestrator> orchestrator;
  if (scenario.fl) {
    FLConfig fl = *scenario.fl;
    if (spec.rounds) fl.rounds = *spec.rounds;
    orchestrator = std::make_unique<FLOrchestrator>(engine, *policy, scenario.topology, fl, seed);
    orchestrator->start();
    engine.run();
    if (orchestrator->aborted()) throw RuntimeFault(orchestrator->abort_reason());
  } else {
    engine.run_until(scenario.horizon_s);
  }

  RunResult result;
  if (orchestrator) result.rounds = orchestrator->rounds();
  result.link_timeline = scheduler.timeline();
  result.counters = engine.counters();
  result.policy_name = token.name;
  result.seed = seed;
  result.trace_exhausted = scheduler.trace_exhausted();
  if (marl) {
    result.reward_events = marl->reward_events();
    result.q_updates_applied = marl->updates_applied();
    result.q_updates_skipped = marl->updates_skipped();
    result.qtables = marl->export_snapshot();
  }

  if (!spec.out_dir.empty()) {
    fs::create_directories(spec.out_dir);
    std::vector<std::string> files;
    if (orchestrator) {
      FLOrchestrator::write_rounds_csv(result.rounds, spec.out_dir + "/rounds.csv");
      files.push_back("rounds.csv");
    }
    files.push_back(write_text(spec.out_dir, "delays.csv", delays_csv(engine)));
    files.push_back(write_text(spec.out_dir, "links_timeline.csv", timeline_csv(result.link_timeline)));
    files.push_back(write_text(spec.out_dir, "events.jsonl", events_jsonl(engine)));
    if (marl)
      files.push_back(write_text(spec.out_dir, "qtables.json", result.qtables.dump(1) + "\n"));
    std::sort(files.begin(), files.end());
    write_manifest(spec.out_dir, files);
    files.push_back("manifest.json");
    result.artifacts = files;
  }
  return result;
}

RunResult run_trace_generate(const Scenario& scenario, const RunSpec& spec) {
  const std::uint64_t seed = spec.seed.value_or(scenario.topology.seed);
  const McsTable table = load_mcs_table(scenario);
  LinkScheduler scheduler(scenario.topology, scenario.scheduler, table, seed, scenario.base_dir);

  RunResult result;
  result.policy_name = "trace_generate";
  result.seed = seed;
  if (spec.out_dir.empty()) throw ConfigError("trace generation needs an output directory");
  fs::create_directories(spec.out_dir);
  std::vector<std::string> iface_keys;
  {
    // Writers flush and close before the manifest hashes their files.
    TraceSink sink(scenario.topology, spec.out_dir + "/traces");
    result.link_timeline = scheduler.run(scenario.horizon_s, &sink);
    iface_keys = sink.files();
  }

  std::vector<std::string> files;
  files.push_back(write_text(spec.out_dir, "links_timeline.csv", timeline_csv(result.link_timeline)));
  for (const auto& key : iface_keys) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '.', '_');
    files.push_back("traces/" + name + ".csv");
  }
  std::sort(files.begin(), files.end());
  write_manifest(spec.out_dir, files);
  files.push_back("manifest.json");
  result.artifacts = files;
  return result;
}

CompareResult run_compare(const Scenario& scenario, const CompareSpec& spec) {
  if (spec.policies.empty()) throw ConfigError("compare needs at least one policy");
  if (spec.seeds.empty()) throw ConfigError("compare needs at least one seed");
  if (spec.jobs < 1) throw ConfigError("compare needs jobs >= 1");
  if (spec.out_dir.empty()) throw ConfigError("compare needs an output directory");
  fs::create_directories(spec.out_dir);

  // Stable per-policy directory names, deduplicated by occurrence.
  std::vector<std::string> policy_dirs;
  std::map<std::string, int> seen;
  for (const auto& p : spec.policies) {
    const std::string base = parse_policy_token(p).name;
    const int k = seen[base]++;
    policy_dirs.push_back(k == 0 ? base : base + "_" + std::to_string(k + 1));
  }

  CompareResult result;
  for (std::size_t pi = 0; pi < spec.policies.size(); ++pi) {
    for (const auto seed : spec.seeds) {
      CompareCell cell;
      cell.policy = spec.policies[pi];
      cell.seed = seed;
      result.cells.push_back(std::move(cell));
    }
  }

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= result.cells.size()) return;
      CompareCell& cell = result.cells[i];
      const std::size_t pi = i / spec.seeds.size();
      RunSpec rs;
      rs.policy = cell.policy;
      rs.seed = cell.seed;
      rs.out_dir = spec.out_dir + "/" + policy_dirs[pi] + "/seed_" + std::to_string(cell.seed);
      try {
        RunResult r = run_experiment(scenario, rs);
        double prev = 0.0;
        for (const auto& round : r.rounds) {
          cell.round_times.push_back(round.sim_time_s - prev);
          prev = round.sim_time_s;
          cell.losses.push_back(round.loss);
          cell.round_clock.push_back(round.sim_time_s);
        }
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
        log_error("compare cell " + cell.policy + " seed " + std::to_string(cell.seed) +
                  " failed: " + cell.error);
      }
    }
  };
  if (spec.jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    const int n = std::min<int>(spec.jobs, static_cast<int>(result.cells.size()));
    pool.reserve(n);
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  // summary.csv: one row per policy, pooled over seeds and rounds.
  std::string summary = "policy,seeds_ok,seeds_failed,rounds,mean_time_per_round_s,"
                        "var_time_per_round_s,mean_final_loss\n";
  for (std::size_t pi = 0; pi < spec.policies.size(); ++pi) {
    std::vector<double> times;
    std::vector<double> final_losses;
    int ok = 0, failed = 0;
    for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
      const CompareCell& cell = result.cells[pi * spec.seeds.size() + si];
      if (!cell.ok) {
        ++failed;
        continue;
      }
      ++ok;
      times.insert(times.end(), cell.round_times.begin(), cell.round_times.end());
      if (!cell.losses.empty()) final_losses.push_back(cell.losses.back());
    }
    double mean = 0.0, var = 0.0, mean_loss = 0.0;
    if (!times.empty()) {
      for (double t : times) mean += t;
      mean /= static_cast<double>(times.size());
      for (double t : times) var += (t - mean) * (t - mean);
      var /= static_cast<double>(times.size());
    }
    if (!final_losses.empty()) {
      for (double l : final_losses) mean_loss += l;
      mean_loss /= static_cast<double>(final_losses.size());
    }
    summary += policy_dirs[pi] + "," + std::to_string(ok) + "," + std::to_string(failed) + "," +
               std::to_string(times.size()) + "," + fmt_double(mean) + "," + fmt_double(var) +
               "," + fmt_double(mean_loss) + "\n";
  }
  std::vector<std::string> files;
  files.push_back(write_text(spec.out_dir, "summary.csv", summary));
  result.summary_path = spec.out_dir + "/summary.csv";

  // Column-oriented plot data: per-round times and losses, one column per
  // (policy, seed); loss-vs-time as gnuplot-style blocks.
  std::size_t max_rounds = 0;
  for (const auto& cell : result.cells) max_rounds = std::max(max_rounds, cell.round_times.size());
  auto column_file = [&](auto getter) {
    std::string body = "# round";
    for (std::size_t pi = 0; pi < spec.policies.size(); ++pi)
      for (const auto seed : spec.seeds)
        body += " " + policy_dirs[pi] + "_s" + std::to_string(seed);
    body += "\n";
    for (std::size_t r = 0; r < max_rounds; ++r) {
      body += std::to_string(r + 1);
      for (const auto& cell : result.cells) {
        const std::vector<double>& v = getter(cell);
        body += " ";
        body += r < v.size() && cell.ok ? fmt_double(v[r]) : "nan";
      }
      body += "\n";
    }
    return body;
  };
  files.push_back(write_text(spec.out_dir, "plot_time_per_round.dat",
                             column_file([](const CompareCell& c) -> const std::vector<double>& {
                               return c.round_times;
                             })));
  files.push_back(write_text(spec.out_dir, "plot_loss_vs_round.dat",
                             column_file([](const CompareCell& c) -> const std::vector<double>& {
                               return c.losses;
                             })));
  std::string lvt;
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const CompareCell& cell = result.cells[i];
    lvt += "# " + policy_dirs[i / spec.seeds.size()] + " seed " + std::to_string(cell.seed) +
           (cell.ok ? "" : " (failed)") + "\n";
    for (std::size_t r = 0; r < cell.round_clock.size(); ++r)
      lvt += fmt_double(cell.round_clock[r]) + " " + fmt_double(cell.losses[r]) + "\n";
    lvt += "\n\n";
  }
  files.push_back(write_text(spec.out_dir, "plot_loss_vs_time.dat", lvt));
  std::sort(files.begin(), files.end());
  write_manifest(spec.out_dir, files);
  return result;
}

}  // namespace meshfl
