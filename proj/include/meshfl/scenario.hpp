#ifndef MESHFL_SCENARIO_HPP
#define MESHFL_SCENARIO_HPP

#include <optional>
#include <string>

#include "json.hpp"
#include "meshfl/flworkload.hpp"
#include "meshfl/link_scheduler.hpp"
#include "meshfl/netsim.hpp"
#include "meshfl/routing.hpp"
#include "meshfl/topology.hpp"

namespace meshfl {

struct RoutingChoice {
  std::string policy = "shortest_path";  // shortest_path | marl_online | marl_frozen
  PolicyConfig params;
  std::string snapshot_path;  // marl_frozen warm start
};

// One scenario file carries the topology plus the optional scheduler /
// netsim / fl / routing sections; missing sections take the documented
// defaults.
struct Scenario {
  Topology topology;
  SchedulerConfig scheduler;
  NetsimConfig netsim;
  RoutingChoice routing;
  std::optional<FLConfig> fl;
  double horizon_s = 50.0;  // trace generation / scheduler-only runs
  std::string base_dir;     // directory of the scenario file; relative paths resolve here
};

Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir);
Scenario load_scenario(const std::string& path);

// Resolves a possibly-relative path against the scenario's base directory.
std::string resolve_path(const Scenario& s, const std::string& path);

}  // namespace meshfl

#endif
