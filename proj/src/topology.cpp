#include "meshfl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "meshfl/util.hpp"

namespace meshfl {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config error at " + path + ": " + what);
}

const json& require_key(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected object");
  auto it = j.find(key);
  if (it == j.end()) fail(path + "/" + key, "missing required field");
  return *it;
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected string");
  return j.get<std::string>();
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected integer");
  return j.get<int>();
}

NodeRole parse_role(const std::string& s, const std::string& path) {
  if (s == "router") return NodeRole::router;
  if (s == "worker") return NodeRole::worker;
  if (s == "aggregator") return NodeRole::aggregator;
  fail(path, "expected one of {router, worker, aggregator}, got \"" + s + "\"");
}

bool channel_valid(const std::string& band, int ch) {
  if (band == "2.4GHz") return ch >= 1 && ch <= 13;
  static const std::set<int> five_ghz = {36,  40,  44,  48,  52,  56,  60,  64,  100,
                                         104, 108, 112, 116, 120, 124, 128, 132, 136,
                                         140, 144, 149, 153, 157, 161, 165};
  return five_ghz.count(ch) > 0;
}

RadioSpec parse_radio(const json& j, const std::string& path) {
  RadioSpec r;
  r.iface_id = as_string(require_key(j, "iface_id", path), path + "/iface_id");
  if (j.contains("band")) {
    r.band = as_string(j["band"], path + "/band");
    if (r.band != "2.4GHz" && r.band != "5GHz")
      fail(path + "/band", "expected one of {2.4GHz, 5GHz}, got \"" + r.band + "\"");
  }
  if (j.contains("channel")) r.channel = as_int(j["channel"], path + "/channel");
  if (!channel_valid(r.band, r.channel))
    fail(path + "/channel",
         "channel " + std::to_string(r.channel) + " invalid for band " + r.band);
  if (j.contains("width_mhz")) r.channel_width_mhz = as_int(j["width_mhz"], path + "/width_mhz");
  if (r.channel_width_mhz <= 0) fail(path + "/width_mhz", "must be positive");
  if (j.contains("tx_power_dbm")) r.tx_power_dbm = as_number(j["tx_power_dbm"], path + "/tx_power_dbm");
  if (r.tx_power_dbm < 0.0 || r.tx_power_dbm > 30.0)
    fail(path + "/tx_power_dbm", "must be in [0, 30]");
  if (j.contains("trace_file")) r.trace_file = as_string(j["trace_file"], path + "/trace_file");
  return r;
}

NodeSpec parse_node(const json& j, const std::string& path) {
  NodeSpec n;
  n.id = as_string(require_key(j, "id", path), path + "/id");
  if (n.id.empty()) fail(path + "/id", "node id must be non-empty");
  n.role = parse_role(as_string(require_key(j, "role", path), path + "/role"), path + "/role");
  if (j.contains("position")) {
    const json& p = j["position"];
    if (!p.is_array() || p.size() != 2) fail(path + "/position", "expected [x, y]");
    n.x = as_number(p[0], path + "/position/0");
    n.y = as_number(p[1], path + "/position/1");
    if (!std::isfinite(n.x) || !std::isfinite(n.y))
      fail(path + "/position", "coordinates must be finite");
    n.has_position = true;
  }
  if (j.contains("interfaces")) {
    const json& ifs = j["interfaces"];
    if (!ifs.is_array()) fail(path + "/interfaces", "expected array");
    for (std::size_t i = 0; i < ifs.size(); ++i)
      n.interfaces.push_back(parse_radio(ifs[i], path + "/interfaces/" + std::to_string(i)));
  }
  if (j.contains("attached_router"))
    n.attached_router = as_string(j["attached_router"], path + "/attached_router");
  return n;
}

ChannelModelConfig parse_channel_model(const json& j, const std::string& path) {
  ChannelModelConfig c;
  std::string name = as_string(require_key(j, "name", path), path + "/name");
  if (name == "log_distance") {
    c.kind = ChannelModelKind::log_distance;
  } else if (name == "log_normal_shadowing") {
    c.kind = ChannelModelKind::log_normal_shadowing;
  } else if (name == "trace_replay") {
    c.kind = ChannelModelKind::trace_replay;
  } else {
    fail(path + "/name",
         "expected one of {log_distance, log_normal_shadowing, trace_replay}, got \"" + name + "\"");
  }
  if (j.contains("ref_loss_db")) c.ref_loss_db = as_number(j["ref_loss_db"], path + "/ref_loss_db");
  if (j.contains("ref_distance_m"))
    c.ref_distance_m = as_number(j["ref_distance_m"], path + "/ref_distance_m");
  if (j.contains("exponent")) c.exponent = as_number(j["exponent"], path + "/exponent");
  if (j.contains("shadow_sigma_db"))
    c.shadow_sigma_db = as_number(j["shadow_sigma_db"], path + "/shadow_sigma_db");
  if (j.contains("noise_floor_dbm"))
    c.noise_floor_dbm = as_number(j["noise_floor_dbm"], path + "/noise_floor_dbm");
  if (j.contains("loss_ramp_db")) c.loss_ramp_db = as_number(j["loss_ramp_db"], path + "/loss_ramp_db");
  if (j.contains("shadowing_mode")) {
    std::string m = as_string(j["shadowing_mode"], path + "/shadowing_mode");
    if (m == "per_tick") {
      c.shadowing_mode = ShadowingMode::per_tick;
    } else if (m == "static") {
      c.shadowing_mode = ShadowingMode::static_offset;
    } else {
      fail(path + "/shadowing_mode", "expected one of {per_tick, static}, got \"" + m + "\"");
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return c;
}

InterferenceModelConfig parse_interference_model(const json& j, const std::string& path) {
  InterferenceModelConfig c;
  std::string name = as_string(require_key(j, "name", path), path + "/name");
  if (name == "none") {
    c.kind = InterferenceModelConfig::Kind::none;
  } else if (name == "airtime_fair") {
    c.kind = InterferenceModelConfig::Kind::airtime_fair;
  } else {
    fail(path + "/name", "expected one of {none, airtime_fair}, got \"" + name + "\"");
  }
  if (j.contains("range_scale")) c.range_scale = as_number(j["range_scale"], path + "/range_scale");
  if (j.contains("range_m")) c.range_m = as_number(j["range_m"], path + "/range_m");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return c;
}

// Invariant checks that need the whole topology assembled.
void validate_topology(const Topology& topo) {
  std::set<std::string> ids;
  for (const auto& n : topo.nodes) {
    if (!ids.insert(n.id).second)
      throw ConfigError("topology invalid: duplicate node id \"" + n.id + "\"");
    std::set<std::string> ifaces;
    for (const auto& r : n.interfaces)
      if (!ifaces.insert(r.iface_id).second)
        throw ConfigError("topology invalid: node \"" + n.id + "\" has duplicate interface \"" +
                          r.iface_id + "\"");
  }

  for (const auto& n : topo.nodes) {
    if (n.role == NodeRole::router) {
      if (!n.attached_router.empty())
        throw ConfigError("topology invalid: router \"" + n.id + "\" cannot have attached_router");
      continue;
    }
    // Hosts need exactly one attachment point: an attached router or one radio.
    const bool attached = !n.attached_router.empty();
    const bool own_radio = !n.interfaces.empty();
    if (attached && own_radio)
      throw ConfigError("topology invalid: " + to_string(n.role) + " \"" + n.id +
                        "\" has both attached_router and its own radio; exactly one is allowed");
    if (!attached && !own_radio)
      throw ConfigError("topology invalid: " + to_string(n.role) + " \"" + n.id +
                        "\" has no attachment point (needs attached_router or one radio)");
    if (own_radio && n.interfaces.size() != 1)
      throw ConfigError("topology invalid: " + to_string(n.role) + " \"" + n.id +
                        "\" must have exactly one radio, has " +
                        std::to_string(n.interfaces.size()));
    if (attached) {
      const NodeSpec* r = topo.find_node(n.attached_router);
      if (!r)
        throw ConfigError("topology invalid: node \"" + n.id + "\" attached to unknown router \"" +
                          n.attached_router + "\"");
      if (r->role != NodeRole::router)
        throw ConfigError("topology invalid: node \"" + n.id + "\" attached to \"" +
                          n.attached_router + "\", which is not a router");
    }
  }

  std::set<std::pair<std::string, std::string>> seen_pairs;
  for (std::size_t i = 0; i < topo.links.size(); ++i) {
    const LinkSpec& l = topo.links[i];
    const std::string label = "links[" + std::to_string(i) + "]";
    if (l.node_a == l.node_b)
      throw ConfigError("topology invalid: " + label + " connects node \"" + l.node_a +
                        "\" to itself");
    const RadioSpec* ra = topo.find_iface(l.node_a, l.iface_a);
    const RadioSpec* rb = topo.find_iface(l.node_b, l.iface_b);
    if (!ra)
      throw ConfigError("topology invalid: " + label + " references unknown endpoint " +
                        l.node_a + "." + l.iface_a);
    if (!rb)
      throw ConfigError("topology invalid: " + label + " references unknown endpoint " +
                        l.node_b + "." + l.iface_b);
    if (ra->band != rb->band || ra->channel != rb->channel)
      throw ConfigError("topology invalid: linked interfaces " + l.node_a + "." + l.iface_a +
                        " and " + l.node_b + "." + l.iface_b + " do not share band/channel (" +
                        ra->band + " ch " + std::to_string(ra->channel) + " vs " + rb->band +
                        " ch " + std::to_string(rb->channel) + ")");
    auto key = std::make_pair(l.node_a + "." + l.iface_a, l.node_b + "." + l.iface_b);
    if (key.first > key.second) std::swap(key.first, key.second);
    if (!seen_pairs.insert(key).second)
      throw ConfigError("topology invalid: duplicate link between " + key.first + " and " +
                        key.second);
  }

  // Analytic channel models need geometry for every radio-linked node.
  if (topo.channel_model.kind != ChannelModelKind::trace_replay) {
    std::set<std::string> linked;
    for (const auto& l : topo.links) {
      linked.insert(l.node_a);
      linked.insert(l.node_b);
    }
    for (const auto& id : linked) {
      const NodeSpec* n = topo.find_node(id);
      if (n && !n->has_position)
        throw ConfigError("topology invalid: node \"" + id +
                          "\" is radio-linked but has no position (required by the " +
                          std::string(topo.channel_model.kind == ChannelModelKind::log_distance
                                          ? "log_distance"
                                          : "log_normal_shadowing") +
                          " model)");
    }
  } else {
    // Pure replay: every linked interface must carry a trace.
    for (const auto& l : topo.links) {
      for (auto [node, iface] : {std::pair{l.node_a, l.iface_a}, std::pair{l.node_b, l.iface_b}}) {
        const RadioSpec* r = topo.find_iface(node, iface);
        if (r && r->trace_file.empty())
          throw ConfigError("topology invalid: trace_replay model but interface " + node + "." +
                            iface + " has no trace_file");
      }
    }
  }

  // Mesh backbone connectivity over router nodes.
  std::vector<std::string> routers;
  for (const auto& n : topo.nodes)
    if (n.role == NodeRole::router) routers.push_back(n.id);
  if (routers.size() > 1) {
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& l : topo.links) {
      if (topo.is_router(l.node_a) && topo.is_router(l.node_b)) {
        adj[l.node_a].push_back(l.node_b);
        adj[l.node_b].push_back(l.node_a);
      }
    }
    std::set<std::string> visited;
    std::vector<std::string> stack{routers.front()};
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      if (!visited.insert(cur).second) continue;
      for (const auto& nb : adj[cur]) stack.push_back(nb);
    }
    if (visited.size() != routers.size()) {
      std::string missing;
      for (const auto& r : routers)
        if (!visited.count(r)) missing += (missing.empty() ? "" : ", ") + r;
      throw ConfigError("topology invalid: router mesh is disconnected; unreachable from \"" +
                        routers.front() + "\": " + missing);
    }
  }

  // Replayed interfaces must be unambiguous: one link per traced interface.
  std::map<std::string, int> links_per_iface;
  for (const auto& l : topo.links) {
    links_per_iface[l.node_a + "." + l.iface_a]++;
    links_per_iface[l.node_b + "." + l.iface_b]++;
  }
  for (const auto& n : topo.nodes)
    for (const auto& r : n.interfaces)
      if (!r.trace_file.empty() && links_per_iface[n.id + "." + r.iface_id] > 1)
        throw ConfigError("topology invalid: interface " + n.id + "." + r.iface_id +
                          " has a trace_file but " +
                          std::to_string(links_per_iface[n.id + "." + r.iface_id]) +
                          " links; trace replay needs exactly one link per interface");
}

}  // namespace

std::string to_string(NodeRole role) {
  switch (role) {
    case NodeRole::router: return "router";
    case NodeRole::worker: return "worker";
    case NodeRole::aggregator: return "aggregator";
  }
  return "?";
}

const NodeSpec* Topology::find_node(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

const RadioSpec* Topology::find_iface(const std::string& node_id,
                                      const std::string& iface_id) const {
  const NodeSpec* n = find_node(node_id);
  if (!n) return nullptr;
  for (const auto& r : n->interfaces)
    if (r.iface_id == iface_id) return &r;
  return nullptr;
}

bool Topology::is_router(const std::string& id) const {
  const NodeSpec* n = find_node(id);
  return n && n->role == NodeRole::router;
}

std::vector<std::string> Topology::node_ids_sorted() const {
  std::vector<std::string> ids;
  ids.reserve(nodes.size());
  for (const auto& n : nodes) ids.push_back(n.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

double Topology::distance_m(const std::string& a, const std::string& b) const {
  const NodeSpec* na = find_node(a);
  const NodeSpec* nb = find_node(b);
  if (!na || !nb || !na->has_position || !nb->has_position)
    throw RuntimeFault("distance requested between nodes without positions: " + a + ", " + b);
  const double dx = na->x - nb->x;
  const double dy = na->y - nb->y;
  return std::sqrt(dx * dx + dy * dy);
}

Topology topology_from_json(const json& j) {
  Topology topo;
  const std::string root = "";
  const json& nodes = require_key(j, "nodes", root.empty() ? "/" : root);
  if (!nodes.is_array() || nodes.empty()) fail("/nodes", "expected non-empty array");
  for (std::size_t i = 0; i < nodes.size(); ++i)
    topo.nodes.push_back(parse_node(nodes[i], "/nodes/" + std::to_string(i)));

  if (j.contains("links")) {
    const json& links = j["links"];
    if (!links.is_array()) fail("/links", "expected array");
    for (std::size_t i = 0; i < links.size(); ++i) {
      const json& l = links[i];
      const std::string path = "/links/" + std::to_string(i);
      if (!l.is_array() || l.size() != 4) fail(path, "expected [nodeA, ifaceA, nodeB, ifaceB]");
      topo.links.push_back(LinkSpec{as_string(l[0], path + "/0"), as_string(l[1], path + "/1"),
                                    as_string(l[2], path + "/2"), as_string(l[3], path + "/3")});
    }
  }

  if (j.contains("channel_model"))
    topo.channel_model = parse_channel_model(j["channel_model"], "/channel_model");
  if (j.contains("interference_model"))
    topo.interference_model = parse_interference_model(j["interference_model"], "/interference_model");
  if (j.contains("seed")) {
    const json& s = j["seed"];
    const bool ok = s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0);
    if (!ok) fail("/seed", "expected unsigned integer");
    topo.seed = s.is_number_unsigned() ? s.get<std::uint64_t>()
                                       : static_cast<std::uint64_t>(s.get<long long>());
  }

  validate_topology(topo);
  return topo;
}

Topology parse_config(const std::string& raw_json) {
  json j;
  try {
    j = json::parse(raw_json);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return topology_from_json(j);
}

json topology_to_json(const Topology& topo) {
  json j;
  j["seed"] = topo.seed;
  json nodes = json::array();
  for (const auto& n : topo.nodes) {
    json jn;
    jn["id"] = n.id;
    jn["role"] = to_string(n.role);
    if (n.has_position) jn["position"] = {n.x, n.y};
    if (!n.interfaces.empty()) {
      json ifs = json::array();
      for (const auto& r : n.interfaces) {
        json jr;
        jr["iface_id"] = r.iface_id;
        jr["band"] = r.band;
        jr["channel"] = r.channel;
        jr["width_mhz"] = r.channel_width_mhz;
        jr["tx_power_dbm"] = r.tx_power_dbm;
        if (!r.trace_file.empty()) jr["trace_file"] = r.trace_file;
        ifs.push_back(jr);
      }
      jn["interfaces"] = ifs;
    }
    if (!n.attached_router.empty()) jn["attached_router"] = n.attached_router;
    nodes.push_back(jn);
  }
  j["nodes"] = nodes;
  json links = json::array();
  for (const auto& l : topo.links) links.push_back({l.node_a, l.iface_a, l.node_b, l.iface_b});
  j["links"] = links;

  json cm;
  switch (topo.channel_model.kind) {
    case ChannelModelKind::log_distance: cm["name"] = "log_distance"; break;
    case ChannelModelKind::log_normal_shadowing: cm["name"] = "log_normal_shadowing"; break;
    case ChannelModelKind::trace_replay: cm["name"] = "trace_replay"; break;
  }
  cm["ref_loss_db"] = topo.channel_model.ref_loss_db;
  cm["ref_distance_m"] = topo.channel_model.ref_distance_m;
  cm["exponent"] = topo.channel_model.exponent;
  cm["shadow_sigma_db"] = topo.channel_model.shadow_sigma_db;
  cm["noise_floor_dbm"] = topo.channel_model.noise_floor_dbm;
  cm["loss_ramp_db"] = topo.channel_model.loss_ramp_db;
  cm["shadowing_mode"] =
      topo.channel_model.shadowing_mode == ShadowingMode::per_tick ? "per_tick" : "static";
  j["channel_model"] = cm;

  json im;
  im["name"] =
      topo.interference_model.kind == InterferenceModelConfig::Kind::none ? "none" : "airtime_fair";
  im["range_scale"] = topo.interference_model.range_scale;
  if (topo.interference_model.range_m >= 0.0) im["range_m"] = topo.interference_model.range_m;
  j["interference_model"] = im;
  return j;
}

Adjacency build_adjacency(const Topology& topo) {
  Adjacency adj;
  for (const auto& n : topo.nodes) adj[n.id];  // every node present, even isolated
  for (const auto& l : topo.links) {
    adj[l.node_a].push_back({l.node_b, l.iface_a, l.iface_b});
    adj[l.node_b].push_back({l.node_a, l.iface_b, l.iface_a});
  }
  for (const auto& n : topo.nodes) {
    if (!n.attached_router.empty()) {
      adj[n.id].push_back({n.attached_router, "", ""});
      adj[n.attached_router].push_back({n.id, "", ""});
    }
  }
  for (auto& [id, entries] : adj) {
    std::sort(entries.begin(), entries.end(), [](const AdjacencyEntry& a, const AdjacencyEntry& b) {
      return std::tie(a.neighbor, a.local_iface) < std::tie(b.neighbor, b.local_iface);
    });
  }
  return adj;
}

bool operator==(const Topology& a, const Topology& b) {
  return a.nodes == b.nodes && a.links == b.links && a.seed == b.seed &&
         a.channel_model.kind == b.channel_model.kind &&
         a.channel_model.ref_loss_db == b.channel_model.ref_loss_db &&
         a.channel_model.ref_distance_m == b.channel_model.ref_distance_m &&
         a.channel_model.exponent == b.channel_model.exponent &&
         a.channel_model.shadow_sigma_db == b.channel_model.shadow_sigma_db &&
         a.channel_model.noise_floor_dbm == b.channel_model.noise_floor_dbm &&
         a.channel_model.loss_ramp_db == b.channel_model.loss_ramp_db &&
         a.channel_model.shadowing_mode == b.channel_model.shadowing_mode &&
         a.interference_model.kind == b.interference_model.kind &&
         a.interference_model.range_scale == b.interference_model.range_scale &&
         a.interference_model.range_m == b.interference_model.range_m;
}

}  // namespace meshfl
