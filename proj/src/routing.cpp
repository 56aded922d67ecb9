#include "meshfl/routing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "meshfl/util.hpp"

namespace meshfl {

void PolicyConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in (0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (!(tau_initial > 0.0)) throw ConfigError("tau_initial must be > 0");
  if (!(tau_final > 0.0)) throw ConfigError("tau_final must be > 0");
  if (tau_switch_round < 0) throw ConfigError("tau_switch_round must be >= 0");
  if (loop_penalty_s < 0.0) throw ConfigError("loop_penalty_s must be >= 0");
}

std::vector<double> softmax_probs(const std::vector<double>& q_values, double tau) {
  if (q_values.empty()) throw RuntimeFault("softmax over empty action set");
  if (!(tau > 0.0)) throw RuntimeFault("softmax temperature must be > 0");
  const double q_max = *std::max_element(q_values.begin(), q_values.end());
  std::vector<double> p(q_values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < q_values.size(); ++i) {
    p[i] = std::exp((q_values[i] - q_max) / tau);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

int softmax_select(const std::vector<double>& q_values, double tau, RngStream& rng) {
  const std::vector<double> p = softmax_probs(q_values, tau);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;  // u landed on accumulated rounding
}

double sarsa_updated_q(double q, double alpha, double gamma, double reward, double q_next) {
  return (1.0 - alpha) * q + alpha * (reward + gamma * q_next);
}

// --- shortest path ----------------------------------------------------------

const std::vector<int>& ShortestPathRouting::dist_to(NodeIdx dst) {
  auto it = dist_cache_.find(dst);
  if (it != dist_cache_.end()) return it->second;

  // BFS from dst over reversed live links. Hosts other than dst never relay,
  // so their neighbors are not expanded through them.
  std::vector<int> dist(engine_.num_nodes(), std::numeric_limits<int>::max());
  dist[dst] = 0;
  std::vector<NodeIdx> frontier{dst};
  while (!frontier.empty()) {
    std::vector<NodeIdx> next_frontier;
    for (NodeIdx u : frontier) {
      if (u != dst && !engine_.is_router(u)) continue;
      // Links are symmetric pairs, so scanning u's out-links finds every
      // in-neighbor v with a live v->u link.
      for (DLinkIdx li : engine_.out_links(u)) {
        const DirectedLink& dl = engine_.dlink(li);
        const NodeIdx v = dl.to;
        if (dist[v] != std::numeric_limits<int>::max()) continue;
        // v -> u must be live for v to use u as a hop.
        bool live = false;
        for (DLinkIdx rv : engine_.out_links(v)) {
          const DirectedLink& r = engine_.dlink(rv);
          if (r.to == u && engine_.link_up(rv)) {
            live = true;
            break;
          }
        }
        if (!live) continue;
        dist[v] = dist[u] + 1;
        next_frontier.push_back(v);
      }
    }
    std::sort(next_frontier.begin(), next_frontier.end());
    next_frontier.erase(std::unique(next_frontier.begin(), next_frontier.end()),
                        next_frontier.end());
    frontier = std::move(next_frontier);
  }
  return dist_cache_.emplace(dst, std::move(dist)).first->second;
}

NodeIdx ShortestPathRouting::shortest_path_next_hop(NodeIdx at, NodeIdx dst) {
  const std::vector<int>& dist = dist_to(dst);
  NodeIdx best = -1;
  int best_dist = std::numeric_limits<int>::max();
  for (NodeIdx nb : engine_.live_neighbors(at)) {
    if (nb != dst && !engine_.is_router(nb)) continue;  // no transit through hosts
    if (dist[nb] == std::numeric_limits<int>::max()) continue;
    if (dist[nb] < best_dist) {  // ties resolve to the smallest id (index order)
      best_dist = dist[nb];
      best = nb;
    }
  }
  return best;
}

RoutingPolicy::Decision ShortestPathRouting::next_hop(NodeIdx at, NodeIdx /*flow_src*/,
                                                      NodeIdx flow_dst, bool /*loop_arrival*/) {
  const NodeIdx next = shortest_path_next_hop(at, flow_dst);
  return {next, next >= 0};
}

// --- multi-agent Q-routing ---------------------------------------------------

MarlRouting::MarlRouting(Engine& engine, PolicyConfig cfg, std::uint64_t master_seed)
    : engine_(engine), cfg_(cfg), fallback_(engine), master_seed_(master_seed) {
  cfg_.validate();
  for (NodeIdx n = 0; n < engine_.num_nodes(); ++n) {
    if (!engine_.is_router(n)) continue;
    tables_[n];
    agent_rng_.emplace(n, RngStream(master_seed, "agent/" + engine_.node_id(n)));
  }
}

double MarlRouting::current_tau() const {
  if (cfg_.mode == PolicyConfig::Mode::frozen) return cfg_.tau_final;
  return round_ <= cfg_.tau_switch_round ? cfg_.tau_initial : cfg_.tau_final;
}

std::vector<NodeIdx> MarlRouting::action_space(NodeIdx agent, AgentState s) const {
  // Router neighbors plus the destination itself when directly adjacent;
  // other hosts are never useful next hops.
  std::vector<NodeIdx> actions;
  for (NodeIdx nb : engine_.topo_neighbors(agent))
    if (engine_.is_router(nb) || nb == s.flow_dst) actions.push_back(nb);
  return actions;
}

MarlRouting::StateActions& MarlRouting::ensure_state(NodeIdx agent, AgentState s) {
  auto& table = tables_[agent];
  auto it = table.find(s);
  if (it != table.end()) return it->second;
  StateActions sa;
  for (NodeIdx a : action_space(agent, s)) sa[a] = QEntry{cfg_.initial_q, 0};
  return table.emplace(s, std::move(sa)).first->second;
}

double MarlRouting::q_value(NodeIdx agent, AgentState s, NodeIdx action) {
  StateActions& sa = ensure_state(agent, s);
  auto it = sa.find(action);
  if (it == sa.end()) {
    // Action outside the static space (e.g. a fallback hop toward a host):
    // track it like any other so bootstrap reads stay well-defined.
    it = sa.emplace(action, QEntry{cfg_.initial_q, 0}).first;
  }
  return it->second.q;
}

RoutingPolicy::Decision MarlRouting::next_hop(NodeIdx at, NodeIdx flow_src, NodeIdx flow_dst,
                                              bool loop_arrival) {
  const AgentState s{flow_src, flow_dst};

  if (!engine_.is_router(at)) {
    // Hosts are not agents; forced out through their attachment.
    const NodeIdx router = engine_.attachment_router(at);
    if (router >= 0) return {router, false};
    return {fallback_.shortest_path_next_hop(at, flow_dst), false};
  }

  // Destination attached to this router: deliver over the ideal link.
  const NodeIdx dst_router = engine_.attachment_router(flow_dst);
  if (dst_router == at) return {flow_dst, false};

  // Looping chunks escape via the deterministic shortest-path hop.
  if (loop_arrival) return {fallback_.shortest_path_next_hop(at, flow_dst), false};

  StateActions& sa = ensure_state(at, s);
  std::vector<NodeIdx> actions;
  std::vector<double> q;
  for (NodeIdx nb : engine_.live_neighbors(at)) {
    if (!engine_.is_router(nb) && nb != flow_dst) continue;
    auto it = sa.find(nb);
    const double qv = it != sa.end() ? it->second.q : cfg_.initial_q;
    actions.push_back(nb);
    q.push_back(qv);
  }
  if (actions.empty()) return {-1, false};

  int pick;
  if (cfg_.mode == PolicyConfig::Mode::frozen && cfg_.greedy_frozen) {
    pick = 0;
    for (std::size_t i = 1; i < q.size(); ++i)
      if (q[i] > q[pick]) pick = static_cast<int>(i);
  } else {
    pick = softmax_select(q, current_tau(), agent_rng_.at(at));
  }
  return {actions[pick], false};
}

void MarlRouting::apply_update(NodeIdx agent, AgentState s, NodeIdx action, double reward,
                               double q_next) {
  StateActions& sa = ensure_state(agent, s);
  auto it = sa.find(action);
  if (it == sa.end()) it = sa.emplace(action, QEntry{cfg_.initial_q, 0}).first;
  it->second.q = sarsa_updated_q(it->second.q, cfg_.alpha, cfg_.gamma, reward, q_next);
  ++it->second.visits;
  ++updates_applied_;
}

void MarlRouting::on_hop(NodeIdx from, NodeIdx flow_src, NodeIdx flow_dst, NodeIdx to,
                         double delay_s, bool loop_arrival, bool terminal, NodeIdx next_action) {
  if (!engine_.is_router(from)) return;  // host egress hops carry no agent
  const AgentState s{flow_src, flow_dst};
  ++reward_events_;
  if (cfg_.mode == PolicyConfig::Mode::frozen) {
    ++updates_skipped_;
    return;
  }
  double reward = -delay_s;
  if (loop_arrival) reward -= cfg_.loop_penalty_s;
  double q_next = 0.0;  // terminal: the chunk left the network
  if (!terminal) {
    if (next_action < 0) return;  // downstream had no route; nothing to bootstrap
    q_next = q_value(to, s, next_action);
  }
  apply_update(from, s, to, reward, q_next);
}

nlohmann::json MarlRouting::export_snapshot() const {
  nlohmann::json agents = nlohmann::json::object();
  for (const auto& [agent, table] : tables_) {
    nlohmann::json states = nlohmann::json::object();
    for (const auto& [state, actions] : table) {
      nlohmann::json acts = nlohmann::json::object();
      for (const auto& [action, entry] : actions) {
        acts[engine_.node_id(action)] = {{"q", entry.q}, {"visits", entry.visits}};
      }
      states[engine_.node_id(state.flow_src) + "->" + engine_.node_id(state.flow_dst)] = acts;
    }
    agents[engine_.node_id(agent)] = {{"states", states}};
  }
  return {{"version", 1}, {"agents", agents}};
}

void MarlRouting::import_snapshot(const nlohmann::json& snapshot) {
  if (!snapshot.is_object() || !snapshot.contains("agents"))
    throw ConfigError("Q-table snapshot: missing \"agents\"");
  std::vector<std::string> missing;
  auto lookup = [&](const std::string& id) -> NodeIdx {
    try {
      return engine_.node_index(id);
    } catch (const RuntimeFault&) {
      missing.push_back(id);
      return -1;
    }
  };

  std::map<NodeIdx, std::map<AgentState, StateActions>> imported;
  for (const auto& [agent_id, agent_j] : snapshot["agents"].items()) {
    const NodeIdx agent = lookup(agent_id);
    if (!agent_j.contains("states") || !agent_j["states"].is_object())
      throw ConfigError("Q-table snapshot: agent \"" + agent_id + "\" missing \"states\"");
    std::map<AgentState, StateActions> table;
    for (const auto& [state_key, acts_j] : agent_j["states"].items()) {
      // state keys look like "src->dst"
      const auto arrow = state_key.find("->");
      if (arrow == std::string::npos)
        throw ConfigError("Q-table snapshot: bad state key \"" + state_key + "\"");
      const NodeIdx src = lookup(state_key.substr(0, arrow));
      const NodeIdx dst = lookup(state_key.substr(arrow + 2));
      StateActions sa;
      for (const auto& [action_id, entry_j] : acts_j.items()) {
        const NodeIdx action = lookup(action_id);
        if (agent >= 0 && action >= 0) {
          // The action must still be a neighbor of the agent.
          const auto nbs = engine_.topo_neighbors(agent);
          if (std::find(nbs.begin(), nbs.end(), action) == nbs.end())
            missing.push_back(engine_.node_id(agent) + " -> " + action_id + " (not adjacent)");
        }
        QEntry e;
        e.q = entry_j.value("q", 0.0);
        e.visits = entry_j.value("visits", std::uint64_t{0});
        if (action >= 0) sa[action] = e;
      }
      if (agent >= 0 && src >= 0 && dst >= 0) table[AgentState{src, dst}] = std::move(sa);
    }
    if (agent >= 0) imported[agent] = std::move(table);
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ConfigError("Q-table snapshot does not fit this topology; unknown or mismatched: " +
                      list);
  }
  for (auto& [agent, table] : imported) tables_[agent] = std::move(table);
}

std::uint64_t MarlRouting::tables_hash() const { return fnv1a64(export_snapshot().dump()); }

const std::map<AgentState, MarlRouting::StateActions>* MarlRouting::agent_table(
    NodeIdx agent) const {
  auto it = tables_.find(agent);
  return it == tables_.end() ? nullptr : &it->second;
}

}  // namespace meshfl
