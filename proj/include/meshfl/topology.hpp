#ifndef MESHFL_TOPOLOGY_HPP
#define MESHFL_TOPOLOGY_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "meshfl/channel.hpp"

namespace meshfl {

enum class NodeRole { router, worker, aggregator };

std::string to_string(NodeRole role);

struct RadioSpec {
  std::string iface_id;
  std::string band = "5GHz";  // "2.4GHz" | "5GHz"
  int channel = 36;
  int channel_width_mhz = 20;
  double tx_power_dbm = 15.0;
  std::string trace_file;  // non-empty = replay-driven interface

  bool operator==(const RadioSpec&) const = default;
};

struct NodeSpec {
  std::string id;
  NodeRole role = NodeRole::router;
  bool has_position = false;
  double x = 0.0;
  double y = 0.0;
  std::vector<RadioSpec> interfaces;
  std::string attached_router;  // worker/aggregator host attachment

  bool operator==(const NodeSpec&) const = default;
};

struct LinkSpec {
  std::string node_a, iface_a, node_b, iface_b;
  bool operator==(const LinkSpec&) const = default;
};

// Immutable world model shared read-only by every other module.
struct Topology {
  std::vector<NodeSpec> nodes;  // input order preserved
  std::vector<LinkSpec> links;
  ChannelModelConfig channel_model;
  InterferenceModelConfig interference_model;
  std::uint64_t seed = 0;

  const NodeSpec* find_node(const std::string& id) const;
  const RadioSpec* find_iface(const std::string& node_id, const std::string& iface_id) const;
  bool is_router(const std::string& id) const;
  std::vector<std::string> node_ids_sorted() const;
  double distance_m(const std::string& a, const std::string& b) const;
};

// Parses and validates a scenario's topology section (the whole JSON text may
// carry extra sections; they are ignored here). Schema violations and
// invariant violations throw ConfigError naming the JSON path or the
// offending entities.
Topology parse_config(const std::string& raw_json);
Topology topology_from_json(const nlohmann::json& j);

// Inverse of parsing; round-trips through topology_from_json to an equal value.
nlohmann::json topology_to_json(const Topology& topo);

struct AdjacencyEntry {
  std::string neighbor;
  std::string local_iface;   // empty for host attachment links
  std::string remote_iface;
  bool operator==(const AdjacencyEntry&) const = default;
};

// node -> neighbors sorted by (neighbor id, local iface). Includes the
// implicit host attachment links (worker/aggregator <-> attached router).
using Adjacency = std::map<std::string, std::vector<AdjacencyEntry>>;

Adjacency build_adjacency(const Topology& topo);

bool operator==(const Topology& a, const Topology& b);

}  // namespace meshfl

#endif
