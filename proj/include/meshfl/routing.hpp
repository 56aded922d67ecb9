#ifndef MESHFL_ROUTING_HPP
#define MESHFL_ROUTING_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "meshfl/netsim.hpp"
#include "meshfl/rng.hpp"

namespace meshfl {

// Observed state of an incoming chunk: the flow's endpoints.
struct AgentState {
  NodeIdx flow_src = -1;
  NodeIdx flow_dst = -1;
  auto operator<=>(const AgentState&) const = default;
};

struct PolicyConfig {
  enum class Mode { online, frozen };
  Mode mode = Mode::online;
  double alpha = 0.1;   // learning rate, (0, 1]
  double gamma = 1.0;   // discount, (0, 1]
  double initial_q = 0.0;
  // Temperature schedule: tau_initial for FL rounds 1..tau_switch_round, then
  // tau_final. Frozen agents exploit at tau_final from the start.
  double tau_initial = 1.0;
  double tau_final = 0.3;
  int tau_switch_round = 10;
  double loop_penalty_s = 0.1;
  bool greedy_frozen = false;  // frozen argmax instead of frozen softmax
  void validate() const;
};

// Boltzmann probabilities with max-subtraction; sums to 1.
std::vector<double> softmax_probs(const std::vector<double>& q_values, double tau);
// Samples an index from `q_values` at temperature tau; one uniform draw.
int softmax_select(const std::vector<double>& q_values, double tau, RngStream& rng);

// One SARSA-style backup: (1-alpha)*q + alpha*(reward + gamma*q_next).
double sarsa_updated_q(double q, double alpha, double gamma, double reward, double q_next);

// Decision/learning interface the engine consults. Implementations own all
// per-agent state; everything runs inside the engine's event loop.
class RoutingPolicy {
 public:
  virtual ~RoutingPolicy() = default;

  struct Decision {
    NodeIdx next = -1;    // -1 = no route
    bool install = false; // cache in the node's flow table until next tick
  };
  // Next hop for a chunk of flow (src, dst) sitting at `at`. `loop_arrival`
  // means the chunk has visited `at` before on this attempt.
  virtual Decision next_hop(NodeIdx at, NodeIdx flow_src, NodeIdx flow_dst, bool loop_arrival) = 0;

  // Per-hop feedback after the chunk reached `to`: the transmitter `from`
  // observed `delay_s` (queueing + transmission). `next_action` is the hop
  // `to` chose for the same chunk (-1 if none), `terminal` when `to` is the
  // flow destination.
  virtual void on_hop(NodeIdx from, NodeIdx flow_src, NodeIdx flow_dst, NodeIdx to,
                      double delay_s, bool loop_arrival, bool terminal, NodeIdx next_action) = 0;

  virtual void on_links_updated() {}
  virtual void set_round(int /*round*/) {}
  virtual std::string name() const = 0;
};

// Minimum-hop-count routing over currently-up links (the batman-adv
// analogue). Hosts never carry transit traffic; ties break toward the
// lexicographically smallest neighbor id. Decisions are cached in flow
// tables and flushed at every scheduler tick.
class ShortestPathRouting : public RoutingPolicy {
 public:
  explicit ShortestPathRouting(Engine& engine) : engine_(engine) {}

  Decision next_hop(NodeIdx at, NodeIdx flow_src, NodeIdx flow_dst, bool loop_arrival) override;
  void on_hop(NodeIdx, NodeIdx, NodeIdx, NodeIdx, double, bool, bool, NodeIdx) override {}
  void on_links_updated() override { dist_cache_.clear(); }
  std::string name() const override { return "shortest_path"; }

  // Exposed for direct use (and for the MA-RL loop fallback).
  NodeIdx shortest_path_next_hop(NodeIdx at, NodeIdx dst);

 private:
  const std::vector<int>& dist_to(NodeIdx dst);
  Engine& engine_;
  std::map<NodeIdx, std::vector<int>> dist_cache_;  // dst -> hop counts
};

// Multi-agent tabular Q-routing: every router is an agent; actions are
// next-hop neighbors; rewards are negative per-hop delays; SARSA-style
// on-policy updates with softmax action selection.
class MarlRouting : public RoutingPolicy {
 public:
  MarlRouting(Engine& engine, PolicyConfig cfg, std::uint64_t master_seed);

  Decision next_hop(NodeIdx at, NodeIdx flow_src, NodeIdx flow_dst, bool loop_arrival) override;
  void on_hop(NodeIdx from, NodeIdx flow_src, NodeIdx flow_dst, NodeIdx to, double delay_s,
              bool loop_arrival, bool terminal, NodeIdx next_action) override;
  void on_links_updated() override { fallback_.on_links_updated(); }
  void set_round(int round) override { round_ = round; }
  std::string name() const override {
    return cfg_.mode == PolicyConfig::Mode::frozen ? "marl_frozen" : "marl_online";
  }

  double current_tau() const;
  double q_value(NodeIdx agent, AgentState s, NodeIdx action);  // creates state lazily

  // Q-table snapshot, portable across runs and topologies:
  // {version, agents: {node: {states: {"src->dst": {neighbor: {q, visits}}}}}}.
  nlohmann::json export_snapshot() const;
  // Replaces all tables. Snapshot nodes/neighbors must exist in the engine's
  // topology; mismatches are listed in the error.
  void import_snapshot(const nlohmann::json& snapshot);
  std::uint64_t tables_hash() const;  // FNV-1a over the canonical snapshot text

  std::uint64_t reward_events() const { return reward_events_; }
  std::uint64_t updates_applied() const { return updates_applied_; }
  std::uint64_t updates_skipped() const { return updates_skipped_; }

  // Direct table access for tests and tools.
  struct QEntry {
    double q = 0.0;
    std::uint64_t visits = 0;
  };
  using StateActions = std::map<NodeIdx, QEntry>;
  const std::map<AgentState, StateActions>* agent_table(NodeIdx agent) const;

 private:
  StateActions& ensure_state(NodeIdx agent, AgentState s);
  std::vector<NodeIdx> action_space(NodeIdx agent, AgentState s) const;  // static topology
  void apply_update(NodeIdx agent, AgentState s, NodeIdx action, double reward, double q_next);

  Engine& engine_;
  PolicyConfig cfg_;
  int round_ = 0;
  ShortestPathRouting fallback_;
  std::map<NodeIdx, std::map<AgentState, StateActions>> tables_;
  std::map<NodeIdx, RngStream> agent_rng_;
  std::uint64_t master_seed_;
  std::uint64_t reward_events_ = 0;
  std::uint64_t updates_applied_ = 0;
  std::uint64_t updates_skipped_ = 0;
};

}  // namespace meshfl

#endif
