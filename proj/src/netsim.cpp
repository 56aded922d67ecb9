#include "meshfl/netsim.hpp"

#include <algorithm>
#include <cmath>

#include "meshfl/routing.hpp"
#include "meshfl/util.hpp"

namespace meshfl {

void NetsimConfig::validate() const {
  if (chunk_size_bytes < 1 || chunk_size_bytes > 65536)
    throw ConfigError("chunk_size_bytes must be in [1, 65536]");
  if (queue_capacity < 1) throw ConfigError("queue_capacity must be >= 1");
  if (propagation_delay_s < 0.0) throw ConfigError("propagation_delay_s must be >= 0");
  if (flow_window_chunks < 1) throw ConfigError("flow_window_chunks must be >= 1");
  if (retransmit_delay_s < 0.0) throw ConfigError("retransmit_delay_s must be >= 0");
  if (max_retransmits < 0) throw ConfigError("max_retransmits must be >= 0");
}

Engine::Engine(const Topology& topo, const NetsimConfig& cfg, std::uint64_t master_seed)
    : topo_(topo), cfg_(cfg), master_seed_(master_seed) {
  cfg_.validate();

  node_ids_ = topo.node_ids_sorted();
  for (NodeIdx i = 0; i < static_cast<int>(node_ids_.size()); ++i) node_index_[node_ids_[i]] = i;
  node_is_router_.resize(node_ids_.size());
  attachment_router_.assign(node_ids_.size(), -1);
  for (const auto& n : topo.nodes) {
    node_is_router_[node_index_[n.id]] = n.role == NodeRole::router;
    if (!n.attached_router.empty())
      attachment_router_[node_index_[n.id]] = node_index_[n.attached_router];
  }

  // Radio links first (2*i = a->b, 2*i+1 = b->a, matching the scheduler's
  // indexing), then the implicit host attachment links.
  for (std::size_t i = 0; i < topo.links.size(); ++i) {
    const LinkSpec& l = topo.links[i];
    DirectedLink ab;
    ab.from = node_index_[l.node_a];
    ab.to = node_index_[l.node_b];
    ab.from_iface = l.iface_a;
    ab.to_iface = l.iface_b;
    ab.radio_link = static_cast<int>(i);
    ab.label = l.node_a + "." + l.iface_a + "->" + l.node_b + "." + l.iface_b;
    DirectedLink ba;
    ba.from = ab.to;
    ba.to = ab.from;
    ba.from_iface = l.iface_b;
    ba.to_iface = l.iface_a;
    ba.radio_link = static_cast<int>(i);
    ba.label = l.node_b + "." + l.iface_b + "->" + l.node_a + "." + l.iface_a;
    dlinks_.push_back(std::move(ab));
    dlinks_.push_back(std::move(ba));
  }
  for (const auto& n : topo.nodes) {
    if (n.attached_router.empty()) continue;
    const NodeIdx host = node_index_[n.id];
    const NodeIdx router = node_index_[n.attached_router];
    DirectedLink up;
    up.from = host;
    up.to = router;
    up.ideal = true;
    up.label = n.id + "->" + n.attached_router;
    DirectedLink down;
    down.from = router;
    down.to = host;
    down.ideal = true;
    down.label = n.attached_router + "->" + n.id;
    dlinks_.push_back(std::move(up));
    dlinks_.push_back(std::move(down));
  }

  out_links_.resize(node_ids_.size());
  for (DLinkIdx i = 0; i < static_cast<int>(dlinks_.size()); ++i)
    out_links_[dlinks_[i].from].push_back(i);
  for (auto& v : out_links_) {
    std::sort(v.begin(), v.end(), [this](DLinkIdx a, DLinkIdx b) {
      if (dlinks_[a].to != dlinks_[b].to) return dlinks_[a].to < dlinks_[b].to;
      return a < b;
    });
  }

  flow_tables_.resize(node_ids_.size());
  chunk_loss_rng_.reserve(dlinks_.size());
  for (const auto& dl : dlinks_)
    chunk_loss_rng_.emplace_back(master_seed_, "chunk_loss/" + dl.label);
}

NodeIdx Engine::node_index(const std::string& id) const {
  auto it = node_index_.find(id);
  if (it == node_index_.end()) throw RuntimeFault("unknown node id \"" + id + "\"");
  return it->second;
}

std::vector<NodeIdx> Engine::live_neighbors(NodeIdx n) const {
  std::vector<NodeIdx> out;
  for (DLinkIdx i : out_links_[n]) {
    if (!link_up(i)) continue;
    if (out.empty() || out.back() != dlinks_[i].to) out.push_back(dlinks_[i].to);
  }
  return out;
}

std::vector<NodeIdx> Engine::topo_neighbors(NodeIdx n) const {
  std::vector<NodeIdx> out;
  for (DLinkIdx i : out_links_[n])
    if (out.empty() || out.back() != dlinks_[i].to) out.push_back(dlinks_[i].to);
  return out;
}

bool Engine::radio_link_carried(int link_idx) const {
  return dlinks_[radio_dlink(link_idx, 0)].window_bytes +
             dlinks_[radio_dlink(link_idx, 1)].window_bytes >
         0;
}

void Engine::apply_link_states(const std::vector<LinkStateUpdate>& updates, double t) {
  int down = 0;
  for (const auto& u : updates) {
    DirectedLink& dl = dlinks_[u.dlink];
    dl.rate_mbps = u.effective_rate_mbps;
    dl.loss = u.loss;
    dl.mcs = u.mcs;
    if (u.mcs < 0) ++down;
  }
  for (auto& dl : dlinks_) dl.window_bytes = 0;
  for (auto& ft : flow_tables_) ft.clear();
  if (policy_) policy_->on_links_updated();
  log_event("scheduler_tick", {{"t", t}, {"links", updates.size()}, {"down", down}});
  // Links that regained a positive rate resume draining their queues.
  for (DLinkIdx i = 0; i < static_cast<int>(dlinks_.size()); ++i) try_start_tx(i);
}

FlowId Engine::start_flow(NodeIdx src, NodeIdx dst, long size_bytes, double t, bool reliable,
                          std::string label) {
  if (src == dst) throw RuntimeFault("flow source equals destination: " + node_ids_[src]);
  if (src < 0 || src >= num_nodes() || dst < 0 || dst >= num_nodes())
    throw RuntimeFault("flow endpoints out of range");
  if (size_bytes <= 0) throw RuntimeFault("flow size must be positive");

  Flow f;
  f.id = static_cast<FlowId>(flows_.size());
  f.src = src;
  f.dst = dst;
  f.size_bytes = size_bytes;
  f.num_chunks = static_cast<int>((size_bytes + cfg_.chunk_size_bytes - 1) / cfg_.chunk_size_bytes);
  f.reliable = reliable;
  f.window = cfg_.flow_window_chunks;
  f.start_t = t;
  f.label = std::move(label);
  f.chunks.resize(f.num_chunks);
  long remaining = size_bytes;
  for (int i = 0; i < f.num_chunks; ++i) {
    f.chunks[i].flow = f.id;
    f.chunks[i].index = i;
    f.chunks[i].size_bytes = std::min<long>(remaining, cfg_.chunk_size_bytes);
    remaining -= f.chunks[i].size_bytes;
  }
  flows_.push_back(std::move(f));
  const FlowId fid = flows_.back().id;

  schedule(t, EventKind::flow_start, [this, fid] {
    Flow& flow = flows_[fid];
    log_event("flow_start", {{"t", clock_},
                             {"flow", flow.id},
                             {"src", node_ids_[flow.src]},
                             {"dst", node_ids_[flow.dst]},
                             {"bytes", flow.size_bytes},
                             {"chunks", flow.num_chunks},
                             {"label", flow.label}});
    const int initial = std::min(flow.window, flow.num_chunks);
    for (int i = 0; i < initial && !flow.failed; ++i) inject_chunk(flow, flow.next_inject++);
  });
  return fid;
}

void Engine::inject_chunk(Flow& f, int chunk_idx) {
  Chunk& c = f.chunks[chunk_idx];
  c.state = ChunkState::in_network;
  c.injected_t = clock_;
  c.visited.clear();
  c.visited.push_back(f.src);
  c.hop_log.clear();
  ++counters_.chunks_injected;
  forward_chunk(f.src, f, c, false);
}

NodeIdx Engine::decide_next_hop(NodeIdx at, Flow& f, bool loop_arrival) {
  auto& table = flow_tables_[at];
  const auto key = std::make_pair(f.src, f.dst);
  auto it = table.find(key);
  if (it != table.end()) {
    ++counters_.flow_table_hits;
    return it->second;
  }
  if (!policy_) throw RuntimeFault("engine has no routing policy");
  ++counters_.policy_queries;
  RoutingPolicy::Decision d = policy_->next_hop(at, f.src, f.dst, loop_arrival);
  if (d.next >= 0 && d.install) table[key] = d.next;
  return d.next;
}

void Engine::forward_chunk(NodeIdx at, Flow& f, Chunk& c, bool loop_arrival) {
  const NodeIdx next = decide_next_hop(at, f, loop_arrival);
  if (next < 0) {
    ++counters_.drops_no_route;
    log_event("chunk_drop", {{"t", clock_},
                             {"flow", f.id},
                             {"chunk", c.index},
                             {"at", node_ids_[at]},
                             {"reason", "no_route"}});
    chunk_gone(f, c, "no_route");
    return;
  }
  enqueue_chunk(at, next, f, c);
}

DLinkIdx Engine::pick_dlink(NodeIdx from, NodeIdx to) const {
  // Parallel links between a node pair: prefer the fastest live one, ties to
  // the lowest index.
  DLinkIdx best = -1;
  for (DLinkIdx i : out_links_[from]) {
    const DirectedLink& dl = dlinks_[i];
    if (dl.to != to || !link_up(i)) continue;
    if (dl.ideal) return i;
    if (best < 0 || dl.rate_mbps > dlinks_[best].rate_mbps) best = i;
  }
  return best;
}

void Engine::enqueue_chunk(NodeIdx at, NodeIdx next, Flow& f, Chunk& c) {
  const DLinkIdx li = pick_dlink(at, next);
  if (li < 0) {
    ++counters_.drops_no_route;
    log_event("chunk_drop", {{"t", clock_},
                             {"flow", f.id},
                             {"chunk", c.index},
                             {"at", node_ids_[at]},
                             {"reason", "link_down"}});
    chunk_gone(f, c, "link_down");
    return;
  }
  DirectedLink& dl = dlinks_[li];
  if (!dl.ideal && static_cast<int>(dl.fifo.size()) >= cfg_.queue_capacity) {
    ++counters_.drops_overflow;
    log_event("chunk_drop", {{"t", clock_},
                             {"flow", f.id},
                             {"chunk", c.index},
                             {"at", node_ids_[at]},
                             {"link", dl.label},
                             {"reason", "queue_overflow"}});
    chunk_gone(f, c, "queue_overflow");
    return;
  }
  HopRecord hop;
  hop.node = at;
  hop.next = next;
  hop.enqueue_t = clock_;
  c.hop_log.push_back(hop);
  dl.fifo.emplace_back(f.id, c.index);
  try_start_tx(li);
}

void Engine::try_start_tx(DLinkIdx li) {
  DirectedLink& dl = dlinks_[li];
  if (dl.transmitting || dl.fifo.empty()) return;
  if (!dl.ideal && dl.rate_mbps <= 0.0) return;  // held until the next tick

  auto [fid, chunk_idx] = dl.fifo.front();
  dl.fifo.pop_front();
  Flow& f = flows_[fid];
  Chunk& c = f.chunks[chunk_idx];
  HopRecord& hop = c.hop_log.back();
  hop.dequeue_t = clock_;
  const double serialization =
      dl.ideal ? 0.0 : static_cast<double>(c.size_bytes) * 8.0 / (dl.rate_mbps * 1e6);
  const double prop = dl.ideal ? 0.0 : cfg_.propagation_delay_s;
  hop.tx_delay = serialization + prop;
  bool lost = false;
  if (!dl.ideal) {
    dl.window_bytes += static_cast<std::uint64_t>(c.size_bytes);
    if (dl.loss > 0.0) lost = chunk_loss_rng_[li].uniform() < dl.loss;
  }
  dl.transmitting = true;
  schedule(clock_ + serialization, EventKind::chunk_tx_complete,
           [this, li, fid, chunk_idx, lost] { on_tx_complete(li, fid, chunk_idx, lost); });
}

void Engine::on_tx_complete(DLinkIdx li, FlowId fid, int chunk_idx, bool lost) {
  DirectedLink& dl = dlinks_[li];
  dl.transmitting = false;
  try_start_tx(li);  // FIFO: the next chunk starts back-to-back

  Flow& f = flows_[fid];
  Chunk& c = f.chunks[chunk_idx];
  if (lost) {
    ++counters_.losses;
    log_event("chunk_loss", {{"t", clock_},
                             {"flow", f.id},
                             {"chunk", c.index},
                             {"link", dl.label}});
    chunk_gone(f, c, "channel_loss");
    return;
  }
  const double prop = dl.ideal ? 0.0 : cfg_.propagation_delay_s;
  if (prop > 0.0) {
    schedule(clock_ + prop, EventKind::chunk_arrival,
             [this, li, fid, chunk_idx] { arrive(li, fid, chunk_idx); });
  } else {
    arrive(li, fid, chunk_idx);
  }
}

void Engine::arrive(DLinkIdx li, FlowId fid, int chunk_idx) {
  const DirectedLink& dl = dlinks_[li];
  Flow& f = flows_[fid];
  Chunk& c = f.chunks[chunk_idx];
  const NodeIdx here = dl.to;
  const HopRecord& hop = c.hop_log.back();
  const double hop_delay = hop.delay();
  delay_samples_.push_back({clock_, hop.node, here, f.src, f.dst, hop_delay});

  const bool loop_arrival = std::find(c.visited.begin(), c.visited.end(), here) != c.visited.end();
  if (!loop_arrival) c.visited.push_back(here);
  const bool terminal = here == f.dst;

  if (terminal) {
    if (policy_) policy_->on_hop(hop.node, f.src, f.dst, here, hop_delay, false, true, -1);
    deliver(f, c);
    return;
  }

  // The downstream decision is made on arrival; its choice feeds the
  // upstream agent's bootstrap before the chunk moves on.
  const NodeIdx next = decide_next_hop(here, f, loop_arrival);
  if (policy_)
    policy_->on_hop(hop.node, f.src, f.dst, here, hop_delay, loop_arrival, false, next);
  if (next < 0) {
    ++counters_.drops_no_route;
    log_event("chunk_drop", {{"t", clock_},
                             {"flow", f.id},
                             {"chunk", c.index},
                             {"at", node_ids_[here]},
                             {"reason", "no_route"}});
    chunk_gone(f, c, "no_route");
    return;
  }
  enqueue_chunk(here, next, f, c);
}

void Engine::deliver(Flow& f, Chunk& c) {
  if (c.state != ChunkState::in_network) return;
  c.state = ChunkState::delivered;
  c.delivered_t = clock_;
  ++counters_.chunks_delivered;
  ++f.delivered;
  if (!f.failed && f.next_inject < f.num_chunks) inject_chunk(f, f.next_inject++);
  if (f.delivered == f.num_chunks && !f.failed) complete_flow(f);
}

void Engine::chunk_gone(Flow& f, Chunk& c, const std::string& reason) {
  if (!f.reliable) {
    c.state = ChunkState::dead;
    ++counters_.chunks_dead;
    fail_flow(f, "chunk " + std::to_string(c.index) + " lost (" + reason + ")");
    return;
  }
  if (c.attempts >= cfg_.max_retransmits) {
    c.state = ChunkState::dead;
    ++counters_.chunks_dead;
    fail_flow(f, "chunk " + std::to_string(c.index) + " exceeded " +
                     std::to_string(cfg_.max_retransmits) + " retransmits (" + reason + ")");
    return;
  }
  ++c.attempts;
  ++counters_.retransmissions;
  const FlowId fid = f.id;
  const int idx = c.index;
  schedule(clock_ + cfg_.retransmit_delay_s, EventKind::chunk_arrival, [this, fid, idx] {
    Flow& flow = flows_[fid];
    if (flow.failed) return;
    Chunk& chunk = flow.chunks[idx];
    chunk.injected_t = clock_;
    chunk.visited.clear();
    chunk.visited.push_back(flow.src);
    chunk.hop_log.clear();
    forward_chunk(flow.src, flow, chunk, false);
  });
}

void Engine::fail_flow(Flow& f, const std::string& reason) {
  if (f.failed) return;
  f.failed = true;
  log_event("flow_failed", {{"t", clock_},
                            {"flow", f.id},
                            {"src", node_ids_[f.src]},
                            {"dst", node_ids_[f.dst]},
                            {"reason", reason},
                            {"label", f.label}});
  if (flow_failed_cb_) flow_failed_cb_(f);
}

void Engine::complete_flow(Flow& f) {
  f.complete_t = clock_;
  log_event("flow_complete", {{"t", clock_},
                              {"flow", f.id},
                              {"src", node_ids_[f.src]},
                              {"dst", node_ids_[f.dst]},
                              {"bytes", f.size_bytes},
                              {"e2e_s", f.complete_t - f.start_t},
                              {"label", f.label}});
  if (flow_complete_cb_) flow_complete_cb_(f);
}

double Engine::end_to_end_delay(FlowId fid) const {
  const Flow& f = flows_[fid];
  if (f.failed) throw RuntimeFault("flow " + std::to_string(fid) + " failed; no end-to-end delay");
  if (!f.complete())
    throw RuntimeFault("flow " + std::to_string(fid) + " incomplete; no end-to-end delay");
  return f.complete_t - f.start_t;
}

void Engine::schedule(double t, EventKind kind, std::function<void()> fn) {
  if (t < clock_)
    throw RuntimeFault("event scheduled in the past (t=" + fmt_double(t) +
                       " < now=" + fmt_double(clock_) + ")");
  queue_.push(Event{t, next_seq_++, kind, std::move(fn)});
}

void Engine::run_until(double t_end) {
  while (!queue_.empty() && !stop_requested_ && queue_.top().t <= t_end) {
    Event ev = queue_.top();
    queue_.pop();
    clock_ = ev.t;
    ev.fn();
  }
  if (!stop_requested_ && clock_ < t_end) clock_ = t_end;
}

void Engine::run() {
  while (!queue_.empty() && !stop_requested_) {
    Event ev = queue_.top();
    queue_.pop();
    clock_ = ev.t;
    ev.fn();
  }
}

void Engine::log_event(std::string_view kind, nlohmann::json fields) {
  fields["kind"] = std::string(kind);
  event_log_.push_back(fields.dump());
}

std::uint64_t Engine::chunks_in_flight() const {
  return counters_.chunks_injected - counters_.chunks_delivered - counters_.chunks_dead;
}

}  // namespace meshfl
