#include "meshfl/scenario.hpp"

#include <filesystem>
#include <fstream>

#include "meshfl/util.hpp"

namespace meshfl {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config error at " + path + ": " + what);
}

double num(const json& j, const char* key, double dft, const std::string& path) {
  if (!j.contains(key)) return dft;
  if (!j[key].is_number()) fail(path + "/" + key, "expected number");
  return j[key].get<double>();
}

long integer(const json& j, const char* key, long dft, const std::string& path) {
  if (!j.contains(key)) return dft;
  if (!j[key].is_number_integer()) fail(path + "/" + key, "expected integer");
  return j[key].get<long>();
}

std::string str(const json& j, const char* key, const std::string& dft, const std::string& path) {
  if (!j.contains(key)) return dft;
  if (!j[key].is_string()) fail(path + "/" + key, "expected string");
  return j[key].get<std::string>();
}

SchedulerConfig parse_scheduler(const json& j) {
  SchedulerConfig c;
  c.period_s = num(j, "period_s", c.period_s, "/scheduler");
  c.mcs_table_path = str(j, "mcs_table", "", "/scheduler");
  const std::string field = str(j, "replay_field", "rssi", "/scheduler");
  if (field == "rssi") {
    c.replay_field = SchedulerConfig::ReplayField::rssi;
  } else if (field == "mcs") {
    c.replay_field = SchedulerConfig::ReplayField::mcs;
  } else {
    fail("/scheduler/replay_field", "expected one of {rssi, mcs}, got \"" + field + "\"");
  }
  const std::string src = str(j, "replay_rate_source", "trace_rate", "/scheduler");
  if (src == "trace_rate") {
    c.replay_rate_source = SchedulerConfig::ReplayRateSource::trace_rate;
  } else if (src == "mcs_table") {
    c.replay_rate_source = SchedulerConfig::ReplayRateSource::mcs_table;
  } else {
    fail("/scheduler/replay_rate_source",
         "expected one of {trace_rate, mcs_table}, got \"" + src + "\"");
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    fail("/scheduler", e.what());
  }
  return c;
}

NetsimConfig parse_netsim(const json& j) {
  NetsimConfig c;
  c.chunk_size_bytes = static_cast<int>(integer(j, "chunk_size_bytes", c.chunk_size_bytes, "/netsim"));
  c.queue_capacity = static_cast<int>(integer(j, "queue_capacity", c.queue_capacity, "/netsim"));
  c.propagation_delay_s = num(j, "propagation_delay_s", c.propagation_delay_s, "/netsim");
  c.flow_window_chunks =
      static_cast<int>(integer(j, "flow_window_chunks", c.flow_window_chunks, "/netsim"));
  c.retransmit_delay_s = num(j, "retransmit_delay_s", c.retransmit_delay_s, "/netsim");
  c.max_retransmits = static_cast<int>(integer(j, "max_retransmits", c.max_retransmits, "/netsim"));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    fail("/netsim", e.what());
  }
  return c;
}

RoutingChoice parse_routing(const json& j) {
  RoutingChoice r;
  r.policy = str(j, "policy", r.policy, "/routing");
  if (r.policy != "shortest_path" && r.policy != "marl_online" && r.policy != "marl_frozen")
    fail("/routing/policy",
         "expected one of {shortest_path, marl_online, marl_frozen}, got \"" + r.policy + "\"");
  PolicyConfig& p = r.params;
  p.alpha = num(j, "alpha", p.alpha, "/routing");
  p.gamma = num(j, "gamma", p.gamma, "/routing");
  p.initial_q = num(j, "initial_q", p.initial_q, "/routing");
  p.loop_penalty_s = num(j, "loop_penalty_s", p.loop_penalty_s, "/routing");
  if (j.contains("greedy_frozen")) {
    if (!j["greedy_frozen"].is_boolean()) fail("/routing/greedy_frozen", "expected boolean");
    p.greedy_frozen = j["greedy_frozen"].get<bool>();
  }
  if (j.contains("temperature")) {
    const json& t = j["temperature"];
    if (t.is_number()) {
      p.tau_initial = p.tau_final = t.get<double>();
    } else if (t.is_object()) {
      p.tau_initial = num(t, "initial", p.tau_initial, "/routing/temperature");
      p.tau_final = num(t, "final", p.tau_final, "/routing/temperature");
      p.tau_switch_round =
          static_cast<int>(integer(t, "switch_round", p.tau_switch_round, "/routing/temperature"));
    } else {
      fail("/routing/temperature", "expected number or {initial, final, switch_round}");
    }
  }
  if (j.contains("reward_granularity")) {
    const std::string g = str(j, "reward_granularity", "chunk", "/routing");
    if (g != "chunk")
      fail("/routing/reward_granularity", "only \"chunk\" is implemented, got \"" + g + "\"");
  }
  r.snapshot_path = str(j, "snapshot", "", "/routing");
  p.mode = r.policy == "marl_frozen" ? PolicyConfig::Mode::frozen : PolicyConfig::Mode::online;
  try {
    p.validate();
  } catch (const ConfigError& e) {
    fail("/routing", e.what());
  }
  return r;
}

FLConfig parse_fl(const json& j) {
  FLConfig c;
  c.rounds = static_cast<int>(integer(j, "rounds", c.rounds, "/fl"));
  c.local_iters = static_cast<int>(integer(j, "local_iters", c.local_iters, "/fl"));
  c.learning_rate = num(j, "learning_rate", c.learning_rate, "/fl");
  c.model_size_bytes = integer(j, "model_size_bytes", c.model_size_bytes, "/fl");
  const std::string agg = str(j, "aggregation", "uniform", "/fl");
  if (agg == "uniform") {
    c.aggregation = FLConfig::Aggregation::uniform;
  } else if (agg == "weighted") {
    c.aggregation = FLConfig::Aggregation::weighted;
  } else {
    fail("/fl/aggregation", "expected one of {uniform, weighted}, got \"" + agg + "\"");
  }
  c.batch_noise_sigma = num(j, "batch_noise_sigma", c.batch_noise_sigma, "/fl");
  c.model_dim = static_cast<int>(integer(j, "model_dim", c.model_dim, "/fl"));
  if (j.contains("compute_time")) {
    const json& ct = j["compute_time"];
    const std::string dist = str(ct, "dist", "constant", "/fl/compute_time");
    if (dist == "constant") {
      c.compute.dist = ComputeTimeConfig::Dist::constant;
      c.compute.seconds = num(ct, "seconds", c.compute.seconds, "/fl/compute_time");
    } else if (dist == "gaussian") {
      c.compute.dist = ComputeTimeConfig::Dist::gaussian;
      c.compute.mean = num(ct, "mean", c.compute.mean, "/fl/compute_time");
      c.compute.sigma = num(ct, "sigma", c.compute.sigma, "/fl/compute_time");
    } else if (dist == "per_worker") {
      c.compute.dist = ComputeTimeConfig::Dist::per_worker;
      if (!ct.contains("values") || !ct["values"].is_object())
        fail("/fl/compute_time/values", "expected object {worker: seconds}");
      for (const auto& [w, v] : ct["values"].items()) {
        if (!v.is_number()) fail("/fl/compute_time/values/" + w, "expected number");
        c.compute.per_worker[w] = v.get<double>();
      }
    } else {
      fail("/fl/compute_time/dist",
           "expected one of {constant, gaussian, per_worker}, got \"" + dist + "\"");
    }
  }
  if (j.contains("centers")) {
    if (!j["centers"].is_object()) fail("/fl/centers", "expected object {worker: [..]}");
    for (const auto& [w, v] : j["centers"].items()) {
      if (!v.is_array()) fail("/fl/centers/" + w, "expected array");
      Vec c_k;
      for (const auto& x : v) {
        if (!x.is_number()) fail("/fl/centers/" + w, "expected numbers");
        c_k.push_back(x.get<double>());
      }
      c.centers[w] = std::move(c_k);
    }
  }
  if (j.contains("weights")) {
    if (!j["weights"].is_object()) fail("/fl/weights", "expected object {worker: weight}");
    for (const auto& [w, v] : j["weights"].items()) {
      if (!v.is_number()) fail("/fl/weights/" + w, "expected number");
      c.weights[w] = v.get<double>();
    }
  }
  if (j.contains("init_model")) {
    if (!j["init_model"].is_array()) fail("/fl/init_model", "expected array");
    for (const auto& x : j["init_model"]) c.init_model.push_back(x.get<double>());
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    fail("/fl", e.what());
  }
  return c;
}

}  // namespace

Scenario scenario_from_json(const json& j, const std::string& base_dir) {
  Scenario s;
  s.base_dir = base_dir;
  s.topology = topology_from_json(j);
  if (j.contains("scheduler")) s.scheduler = parse_scheduler(j["scheduler"]);
  if (j.contains("netsim")) s.netsim = parse_netsim(j["netsim"]);
  if (j.contains("routing")) s.routing = parse_routing(j["routing"]);
  if (j.contains("fl")) s.fl = parse_fl(j["fl"]);
  if (j.contains("horizon_s")) {
    if (!j["horizon_s"].is_number()) fail("/horizon_s", "expected number");
    s.horizon_s = j["horizon_s"].get<double>();
    if (!(s.horizon_s > 0.0)) fail("/horizon_s", "must be > 0");
  }

  if (s.fl) {
    // The workload needs its cast: at least one worker and exactly one
    // aggregator (checked again at run time, but validation should say so).
    int workers = 0, aggs = 0;
    for (const auto& n : s.topology.nodes) {
      workers += n.role == NodeRole::worker;
      aggs += n.role == NodeRole::aggregator;
    }
    if (workers < 1) throw ConfigError("fl section present but topology has no worker nodes");
    if (aggs != 1)
      throw ConfigError("fl section present but topology has " + std::to_string(aggs) +
                        " aggregator nodes (need exactly 1)");
    for (const auto& [w, c] : s.fl->centers) {
      const NodeSpec* n = s.topology.find_node(w);
      if (!n || n->role != NodeRole::worker)
        throw ConfigError("fl.centers names \"" + w + "\", which is not a worker node");
    }
  }
  if (s.routing.policy == "marl_frozen" && s.routing.snapshot_path.empty())
    throw ConfigError("routing.policy marl_frozen needs routing.snapshot (or --policy marl_frozen=<path>)");
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario file " + path + " is not valid JSON: " + e.what());
  }
  const std::string base = std::filesystem::path(path).parent_path().string();
  Scenario s = scenario_from_json(j, base);

  // Referenced files must exist up front (trace files, MCS table, snapshot).
  for (const auto& n : s.topology.nodes) {
    for (const auto& r : n.interfaces) {
      if (r.trace_file.empty()) continue;
      const std::string resolved = resolve_path(s, r.trace_file);
      if (!std::filesystem::exists(resolved))
        throw ConfigError("trace file for interface " + n.id + "." + r.iface_id +
                          " not found: " + resolved);
    }
  }
  if (!s.scheduler.mcs_table_path.empty() &&
      !std::filesystem::exists(resolve_path(s, s.scheduler.mcs_table_path)))
    throw ConfigError("mcs_table file not found: " + resolve_path(s, s.scheduler.mcs_table_path));
  if (!s.routing.snapshot_path.empty() &&
      !std::filesystem::exists(resolve_path(s, s.routing.snapshot_path)))
    throw ConfigError("routing.snapshot file not found: " +
                      resolve_path(s, s.routing.snapshot_path));
  return s;
}

std::string resolve_path(const Scenario& s, const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute() || s.base_dir.empty()) return p.string();
  return (std::filesystem::path(s.base_dir) / p).string();
}

}  // namespace meshfl
