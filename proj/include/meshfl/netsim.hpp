#ifndef MESHFL_NETSIM_HPP
#define MESHFL_NETSIM_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "json.hpp"
#include "meshfl/rng.hpp"
#include "meshfl/topology.hpp"

namespace meshfl {

class RoutingPolicy;

struct NetsimConfig {
  int chunk_size_bytes = 1500;      // MTU analogue; up to 64 KiB for desk-scale runs
  int queue_capacity = 100;         // chunks per directed link
  double propagation_delay_s = 0.0;
  int flow_window_chunks = 8;       // reliable-overlay in-flight cap per flow
  double retransmit_delay_s = 0.1;  // stand-in for one RTT of loss recovery
  int max_retransmits = 100;
  void validate() const;
};

using NodeIdx = int;
using DLinkIdx = int;
using FlowId = int;

enum class EventKind {
  chunk_arrival,
  chunk_tx_complete,
  scheduler_tick,
  flow_start,
  flow_complete,
  round_timer,
};

struct HopRecord {
  NodeIdx node = -1;  // transmitter
  NodeIdx next = -1;
  double enqueue_t = 0.0;
  double dequeue_t = 0.0;
  double tx_delay = 0.0;  // serialization + propagation
  double delay() const { return (dequeue_t - enqueue_t) + tx_delay; }
};

enum class ChunkState { pending, in_network, delivered, dead };

struct Chunk {
  FlowId flow = -1;
  int index = 0;
  long size_bytes = 0;
  int attempts = 0;                // retransmissions so far
  ChunkState state = ChunkState::pending;
  double injected_t = 0.0;         // current attempt
  double delivered_t = -1.0;
  std::vector<NodeIdx> visited;    // loop detection, current attempt
  std::vector<HopRecord> hop_log;  // current attempt
};

struct Flow {
  FlowId id = -1;
  NodeIdx src = -1, dst = -1;
  long size_bytes = 0;
  int num_chunks = 0;
  bool reliable = false;  // FL overlay retransmits; raw flows fail on first loss
  int window = 8;
  double start_t = 0.0;
  double complete_t = -1.0;
  bool failed = false;
  int next_inject = 0;
  int delivered = 0;
  std::string label;
  std::vector<Chunk> chunks;

  bool complete() const { return complete_t >= 0.0; }
};

struct DirectedLink {
  NodeIdx from = -1, to = -1;
  std::string from_iface, to_iface;  // empty on host attachment links
  bool ideal = false;                // attachment: infinite rate, zero loss
  int radio_link = -1;               // index into Topology::links; -1 for ideal
  std::string label;                 // "a.if->b.if" or "a->b"

  // runtime, owned by the engine / written by the scheduler
  double rate_mbps = 0.0;
  double loss = 0.0;
  int mcs = -1;
  bool transmitting = false;
  std::deque<std::pair<FlowId, int>> fifo;
  std::uint64_t window_bytes = 0;  // bytes that began transmission this scheduler window
};

struct DelaySample {
  double t;  // arrival time
  NodeIdx node, next_hop;
  NodeIdx flow_src, flow_dst;
  double delay_s;
};

struct EngineCounters {
  std::uint64_t chunks_injected = 0;  // unique chunks entering the network
  std::uint64_t chunks_delivered = 0;
  std::uint64_t chunks_dead = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t losses = 0;  // Bernoulli channel losses
  std::uint64_t drops_overflow = 0;
  std::uint64_t drops_no_route = 0;
  std::uint64_t policy_queries = 0;
  std::uint64_t flow_table_hits = 0;
};

// Single-threaded deterministic discrete-event engine: simulated clock, event
// queue ordered by (time, sequence), per-node flow tables, per-directed-link
// FIFO transmitters, and per-hop delay telemetry. All mutable simulation
// state lives here; parallelism only ever happens across engines.
class Engine {
 public:
  Engine(const Topology& topo, const NetsimConfig& cfg, std::uint64_t master_seed);

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  void set_policy(RoutingPolicy* policy) { policy_ = policy; }
  RoutingPolicy* policy() const { return policy_; }

  // --- address book -------------------------------------------------------
  int num_nodes() const { return static_cast<int>(node_ids_.size()); }
  NodeIdx node_index(const std::string& id) const;  // throws on unknown id
  const std::string& node_id(NodeIdx n) const { return node_ids_[n]; }
  bool is_router(NodeIdx n) const { return node_is_router_[n]; }
  NodeIdx attachment_router(NodeIdx host) const { return attachment_router_[host]; }

  int num_dlinks() const { return static_cast<int>(dlinks_.size()); }
  const DirectedLink& dlink(DLinkIdx i) const { return dlinks_[i]; }
  const std::vector<DLinkIdx>& out_links(NodeIdx n) const { return out_links_[n]; }
  bool link_up(DLinkIdx i) const {
    return dlinks_[i].ideal || dlinks_[i].rate_mbps > 0.0;
  }
  // Live out-neighbors, ascending node index (== lexicographic id order).
  std::vector<NodeIdx> live_neighbors(NodeIdx n) const;
  // All out-neighbors in the static topology, ascending node index.
  std::vector<NodeIdx> topo_neighbors(NodeIdx n) const;
  static DLinkIdx radio_dlink(int link_idx, int direction) { return 2 * link_idx + direction; }
  bool radio_link_carried(int link_idx) const;

  struct LinkStateUpdate {
    DLinkIdx dlink;
    double effective_rate_mbps;
    double loss;
    int mcs;
  };
  // Atomic per-tick publication: sets rates, flushes flow tables, resets the
  // traffic windows, notifies the policy, and restarts any waiting queues.
  void apply_link_states(const std::vector<LinkStateUpdate>& updates, double t);

  // --- flows ---------------------------------------------------------------
  FlowId start_flow(NodeIdx src, NodeIdx dst, long size_bytes, double t, bool reliable,
                    std::string label);
  const Flow& flow(FlowId f) const { return flows_[f]; }
  int num_flows() const { return static_cast<int>(flows_.size()); }
  double end_to_end_delay(FlowId f) const;  // throws while incomplete/failed
  void on_flow_complete(std::function<void(const Flow&)> cb) { flow_complete_cb_ = std::move(cb); }
  void on_flow_failed(std::function<void(const Flow&)> cb) { flow_failed_cb_ = std::move(cb); }

  // --- event loop ----------------------------------------------------------
  double now() const { return clock_; }
  void schedule(double t, EventKind kind, std::function<void()> fn);
  // Processes events with time <= t_end, then advances the clock to t_end.
  void run_until(double t_end);
  // Processes events until the queue drains or request_stop() is called.
  void run();
  void request_stop() { stop_requested_ = true; }

  // --- telemetry -----------------------------------------------------------
  const std::vector<DelaySample>& delay_samples() const { return delay_samples_; }
  const std::vector<std::string>& event_log() const { return event_log_; }
  void log_event(std::string_view kind, nlohmann::json fields);
  EngineCounters& counters() { return counters_; }
  const EngineCounters& counters() const { return counters_; }
  std::uint64_t chunks_in_flight() const;

  const NetsimConfig& config() const { return cfg_; }

 private:
  struct Event {
    double t;
    std::uint64_t seq;
    EventKind kind;
    std::function<void()> fn;
  };
  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };

  void inject_chunk(Flow& f, int chunk_idx);
  void forward_chunk(NodeIdx at, Flow& f, Chunk& c, bool loop_arrival);
  NodeIdx decide_next_hop(NodeIdx at, Flow& f, bool loop_arrival);
  void enqueue_chunk(NodeIdx at, NodeIdx next, Flow& f, Chunk& c);
  void try_start_tx(DLinkIdx dl);
  void on_tx_complete(DLinkIdx dl, FlowId fid, int chunk_idx, bool lost);
  void arrive(DLinkIdx dl, FlowId fid, int chunk_idx);
  void deliver(Flow& f, Chunk& c);
  void chunk_gone(Flow& f, Chunk& c, const std::string& reason);
  void fail_flow(Flow& f, const std::string& reason);
  void complete_flow(Flow& f);
  DLinkIdx pick_dlink(NodeIdx from, NodeIdx to) const;

  const Topology& topo_;
  NetsimConfig cfg_;
  std::uint64_t master_seed_;
  RoutingPolicy* policy_ = nullptr;

  std::vector<std::string> node_ids_;  // sorted; index == NodeIdx
  std::map<std::string, NodeIdx> node_index_;
  std::vector<bool> node_is_router_;
  std::vector<NodeIdx> attachment_router_;
  std::vector<DirectedLink> dlinks_;
  std::vector<std::vector<DLinkIdx>> out_links_;
  std::vector<std::map<std::pair<NodeIdx, NodeIdx>, NodeIdx>> flow_tables_;
  std::vector<RngStream> chunk_loss_rng_;  // per directed link

  // deque: flow-completion callbacks may start new flows while references to
  // the completing flow are still on the stack.
  std::deque<Flow> flows_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
  double clock_ = 0.0;
  std::uint64_t next_seq_ = 0;
  bool stop_requested_ = false;

  std::vector<DelaySample> delay_samples_;
  std::vector<std::string> event_log_;
  EngineCounters counters_;
  std::function<void(const Flow&)> flow_complete_cb_;
  std::function<void(const Flow&)> flow_failed_cb_;
};

}  // namespace meshfl

#endif
