#ifndef MESHFL_LINK_SCHEDULER_HPP
#define MESHFL_LINK_SCHEDULER_HPP

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "meshfl/channel.hpp"
#include "meshfl/mcs.hpp"
#include "meshfl/netsim.hpp"
#include "meshfl/topology.hpp"

namespace meshfl {

struct SchedulerConfig {
  double period_s = 5.0;
  std::string mcs_table_path;  // empty = built-in default table
  // Which trace column drives MCS selection on replayed interfaces.
  enum class ReplayField { rssi, mcs };
  ReplayField replay_field = ReplayField::rssi;
  // Where a replayed link's shaped rate comes from: the recorded
  // traffic_rate column (exact round-trip with generated traces) or a fresh
  // MCS-table lookup (for traces whose rate column is telemetry, not
  // capacity).
  enum class ReplayRateSource { trace_rate, mcs_table };
  ReplayRateSource replay_rate_source = ReplayRateSource::trace_rate;
  void validate() const;
};

// One directed link's condition as of a scheduler tick.
struct LinkState {
  std::string link;  // "a.ifa->b.ifb"
  DLinkIdx dlink = -1;
  double rssi_dbm = -200.0;
  double snr_db = -200.0;
  int mcs_index = -1;  // -1 = down
  double nominal_rate_mbps = 0.0;
  double effective_rate_mbps = 0.0;
  double loss = 1.0;
  double updated_at = 0.0;
};

// Writes per-interface trace CSVs during generation runs.
class TraceSink {
 public:
  // Creates `<node>_<iface>.csv` files under out_dir for every radio
  // interface in the topology. Requires one link per interface.
  TraceSink(const Topology& topo, const std::string& out_dir);
  void write(const std::string& node, const std::string& iface, double t, const LinkState& ls);
  std::vector<std::string> files() const;

 private:
  std::map<std::string, TraceWriter> writers_;  // key "node.iface"
};

// The simulator's traffic-control analogue. Every period_s of simulated
// time it recomputes each link's MCS and effective rate from the channel
// model (or trace records) and publishes the whole batch to the engine in
// one atomic step.
class LinkScheduler {
 public:
  LinkScheduler(const Topology& topo, const SchedulerConfig& cfg, const McsTable& table,
                std::uint64_t master_seed, const std::string& trace_base_dir = "");

  // Computes one tick at time t. When engine is non-null the states are
  // pushed to it; trace-replay interfaces read their traces, everything else
  // follows the analytic model.
  std::vector<LinkState> tick(double t, Engine* engine);

  // Schedules the recurring tick (t = 0, period, 2*period, ...) on the engine.
  void install(Engine& engine);

  // Standalone timeline over t = 0, period, ..., <= horizon_s; used for
  // trace generation where no traffic flows.
  std::vector<std::vector<LinkState>> run(double horizon_s, TraceSink* sink = nullptr);

  void set_sink(TraceSink* sink) { sink_ = sink; }
  const std::vector<std::vector<LinkState>>& timeline() const { return timeline_; }
  const McsTable& mcs_table() const { return table_; }
  double interference_range_m() const { return interference_range_m_; }
  bool trace_exhausted() const { return !exhausted_warned_.empty(); }

 private:
  const Topology& topo_;
  SchedulerConfig cfg_;
  McsTable table_;
  std::uint64_t master_seed_;
  TraceSink* sink_ = nullptr;

  std::vector<RngStream> shadow_rng_;        // per undirected link
  std::vector<double> static_shadow_db_;     // static_offset mode
  std::map<std::string, Trace> traces_;      // "node.iface" -> trace
  std::set<std::string> exhausted_warned_;
  std::vector<std::vector<LinkState>> timeline_;
  double interference_range_m_ = 0.0;
  // Pairwise co-channel interference, computed once from geometry.
  std::vector<std::vector<int>> interferers_;
};

}  // namespace meshfl

#endif
