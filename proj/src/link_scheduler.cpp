#include "meshfl/link_scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>

#include "meshfl/util.hpp"

namespace meshfl {

void SchedulerConfig::validate() const {
  if (!(period_s > 0.0)) throw ConfigError("scheduler period_s must be > 0");
}

TraceSink::TraceSink(const Topology& topo, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::map<std::string, int> links_per_iface;
  for (const auto& l : topo.links) {
    links_per_iface[l.node_a + "." + l.iface_a]++;
    links_per_iface[l.node_b + "." + l.iface_b]++;
  }
  for (const auto& n : topo.nodes) {
    for (const auto& r : n.interfaces) {
      const std::string key = n.id + "." + r.iface_id;
      if (links_per_iface[key] == 0) continue;  // unlinked radio: nothing to record
      if (links_per_iface[key] > 1)
        throw ConfigError("trace generation requires one link per interface; " + key + " has " +
                          std::to_string(links_per_iface[key]));
      writers_.emplace(key, TraceWriter(out_dir + "/" + n.id + "_" + r.iface_id + ".csv", key));
    }
  }
}

void TraceSink::write(const std::string& node, const std::string& iface, double t,
                      const LinkState& ls) {
  auto it = writers_.find(node + "." + iface);
  if (it == writers_.end()) return;
  it->second.write_row(t, ls.mcs_index, ls.rssi_dbm, ls.loss, ls.effective_rate_mbps);
}

std::vector<std::string> TraceSink::files() const {
  std::vector<std::string> out;
  for (const auto& [key, w] : writers_) out.push_back(key);
  return out;
}

LinkScheduler::LinkScheduler(const Topology& topo, const SchedulerConfig& cfg,
                             const McsTable& table, std::uint64_t master_seed,
                             const std::string& trace_base_dir)
    : topo_(topo), cfg_(cfg), table_(table), master_seed_(master_seed) {
  cfg_.validate();

  for (const auto& l : topo.links) {
    const std::string canon = l.node_a + "." + l.iface_a + "--" + l.node_b + "." + l.iface_b;
    shadow_rng_.emplace_back(master_seed, "link_shadow/" + canon);
  }
  static_shadow_db_.assign(topo.links.size(), 0.0);
  if (topo.channel_model.shadowing_mode == ShadowingMode::static_offset &&
      topo.channel_model.kind == ChannelModelKind::log_normal_shadowing) {
    for (std::size_t i = 0; i < topo.links.size(); ++i)
      static_shadow_db_[i] = shadow_rng_[i].gaussian(0.0, topo.channel_model.shadow_sigma_db);
  }

  // Load per-interface traces for replay-driven interfaces.
  for (const auto& n : topo.nodes) {
    for (const auto& r : n.interfaces) {
      if (r.trace_file.empty()) continue;
      std::filesystem::path p(r.trace_file);
      if (p.is_relative() && !trace_base_dir.empty())
        p = std::filesystem::path(trace_base_dir) / p;
      traces_.emplace(n.id + "." + r.iface_id, Trace::load_csv(p.string()));
    }
  }

  // Interference range: scale times the MCS0 communication range implied by
  // the analytic model at the strongest transmit power.
  const auto& cm = topo.channel_model;
  const auto& im = topo.interference_model;
  if (im.range_m >= 0.0) {
    interference_range_m_ = im.range_m;
  } else {
    double tx_max = 15.0;
    for (const auto& n : topo.nodes)
      for (const auto& r : n.interfaces) tx_max = std::max(tx_max, r.tx_power_dbm);
    const double margin = tx_max - cm.noise_floor_dbm - table_.mcs0_min_snr_db() - cm.ref_loss_db;
    const double d_comm = cm.ref_distance_m * std::pow(10.0, margin / (10.0 * cm.exponent));
    interference_range_m_ = im.range_scale * d_comm;
  }

  // Pairwise co-channel interferer sets (static geometry).
  const std::size_t n_links = topo.links.size();
  interferers_.assign(n_links, {});
  auto endpoints_have_positions = [&](const LinkSpec& l) {
    const NodeSpec* a = topo.find_node(l.node_a);
    const NodeSpec* b = topo.find_node(l.node_b);
    return a && b && a->has_position && b->has_position;
  };
  for (std::size_t i = 0; i < n_links; ++i) {
    const RadioSpec* ri = topo.find_iface(topo.links[i].node_a, topo.links[i].iface_a);
    for (std::size_t j = 0; j < n_links; ++j) {
      if (i == j) continue;
      const RadioSpec* rj = topo.find_iface(topo.links[j].node_a, topo.links[j].iface_a);
      if (ri->band != rj->band || ri->channel != rj->channel) continue;
      if (!endpoints_have_positions(topo.links[i]) || !endpoints_have_positions(topo.links[j]))
        continue;
      double min_d = std::numeric_limits<double>::max();
      for (const std::string& a : {topo.links[i].node_a, topo.links[i].node_b})
        for (const std::string& b : {topo.links[j].node_a, topo.links[j].node_b})
          min_d = std::min(min_d, topo.distance_m(a, b));
      if (min_d <= interference_range_m_) interferers_[i].push_back(static_cast<int>(j));
    }
  }
}

std::vector<LinkState> LinkScheduler::tick(double t, Engine* engine) {
  const auto& cm = topo_.channel_model;
  const std::size_t n_links = topo_.links.size();

  // Contenders per undirected link, from last window's carried traffic.
  std::vector<bool> carried(n_links, false);
  if (engine) {
    for (std::size_t i = 0; i < n_links; ++i)
      carried[i] = engine->radio_link_carried(static_cast<int>(i));
  }
  std::vector<int> contenders(n_links, 1);
  if (topo_.interference_model.kind == InterferenceModelConfig::Kind::airtime_fair) {
    for (std::size_t i = 0; i < n_links; ++i)
      for (int j : interferers_[i])
        if (carried[j]) ++contenders[i];
  }

  std::vector<LinkState> states;
  states.reserve(2 * n_links);
  for (std::size_t i = 0; i < n_links; ++i) {
    const LinkSpec& l = topo_.links[i];

    // One shadowing draw per link per tick, shared by both directions
    // (channel reciprocity).
    double shadow_db = 0.0;
    if (cm.kind == ChannelModelKind::log_normal_shadowing) {
      shadow_db = cm.shadowing_mode == ShadowingMode::per_tick
                      ? shadow_rng_[i].gaussian(0.0, cm.shadow_sigma_db)
                      : static_shadow_db_[i];
    }

    for (int dir = 0; dir < 2; ++dir) {
      const std::string& from_node = dir == 0 ? l.node_a : l.node_b;
      const std::string& from_iface = dir == 0 ? l.iface_a : l.iface_b;
      const std::string& to_node = dir == 0 ? l.node_b : l.node_a;
      const std::string& to_iface = dir == 0 ? l.iface_b : l.iface_a;
      const RadioSpec* egress = topo_.find_iface(from_node, from_iface);

      LinkState ls;
      ls.link = from_node + "." + from_iface + "->" + to_node + "." + to_iface;
      ls.dlink = Engine::radio_dlink(static_cast<int>(i), dir);
      ls.updated_at = t;

      auto trace_it = traces_.find(from_node + "." + from_iface);
      if (trace_it != traces_.end()) {
        const Trace::Sample sample = trace_it->second.at(t);
        if (sample.exhausted && !exhausted_warned_.count(from_node + "." + from_iface)) {
          exhausted_warned_.insert(from_node + "." + from_iface);
          log_warn("trace exhausted for interface " + from_node + "." + from_iface +
                   " at t=" + fmt_double(t) + "; holding last record");
          if (engine)
            engine->log_event("warning", {{"t", t},
                                          {"what", "trace_exhausted"},
                                          {"iface", from_node + "." + from_iface}});
        }
        const TraceRecord& rec = *sample.record;
        ls.rssi_dbm = rec.rssi_dbm;
        ls.snr_db = rec.rssi_dbm - cm.noise_floor_dbm;
        ls.mcs_index = cfg_.replay_field == SchedulerConfig::ReplayField::mcs
                           ? rec.mcs_index
                           : table_.select_mcs(ls.snr_db);
        try {
          ls.nominal_rate_mbps = table_.rate_for_mcs(ls.mcs_index);
        } catch (const RuntimeFault& e) {
          throw RuntimeFault("interface " + from_node + "." + from_iface + " at t=" +
                             fmt_double(t) + ": " + e.what());
        }
        ls.loss = rec.loss;
        if (ls.mcs_index < 0) {
          ls.effective_rate_mbps = 0.0;
        } else if (cfg_.replay_rate_source == SchedulerConfig::ReplayRateSource::trace_rate) {
          // The recorded rate is the shaped bandwidth; a zero means the
          // window carried no capacity, i.e. the link is down.
          ls.effective_rate_mbps = std::min(rec.traffic_rate_mbps, ls.nominal_rate_mbps);
          if (ls.effective_rate_mbps <= 0.0) {
            ls.effective_rate_mbps = 0.0;
            ls.mcs_index = -1;
          }
        } else {
          ls.effective_rate_mbps = ls.nominal_rate_mbps;
        }
      } else {
        const double d = topo_.distance_m(l.node_a, l.node_b);
        const double clamped = std::max(d, cm.ref_distance_m);
        double pl = cm.ref_loss_db +
                    10.0 * cm.exponent * std::log10(clamped / cm.ref_distance_m) + shadow_db;
        ls.rssi_dbm = egress->tx_power_dbm - pl;
        ls.snr_db = ls.rssi_dbm - cm.noise_floor_dbm;
        ls.mcs_index = table_.select_mcs(ls.snr_db);
        ls.nominal_rate_mbps = table_.rate_for_mcs(ls.mcs_index);
        ls.loss = loss_from_snr(ls.snr_db, table_.mcs0_min_snr_db(), cm.loss_ramp_db);
        ls.effective_rate_mbps =
            ls.mcs_index < 0 ? 0.0 : effective_rate(ls.nominal_rate_mbps, contenders[i]);
      }
      states.push_back(ls);
    }
  }

  if (engine) {
    std::vector<Engine::LinkStateUpdate> updates;
    updates.reserve(states.size());
    for (const auto& ls : states)
      updates.push_back({ls.dlink, ls.effective_rate_mbps, ls.loss, ls.mcs_index});
    engine->apply_link_states(updates, t);
  }
  if (sink_) {
    for (const auto& ls : states) {
      // Egress interface key is the front of the label ("node.iface->...").
      const auto arrow = ls.link.find("->");
      const std::string from = ls.link.substr(0, arrow);
      const auto dot = from.find('.');
      sink_->write(from.substr(0, dot), from.substr(dot + 1), t, ls);
    }
  }
  timeline_.push_back(states);
  return states;
}

void LinkScheduler::install(Engine& engine) {
  // Recurring tick at t = k * period; each tick schedules the next, and the
  // run stops when the workload requests it.
  auto tick_fn = std::make_shared<std::function<void(std::uint64_t)>>();
  *tick_fn = [this, &engine, tick_fn](std::uint64_t k) {
    tick(static_cast<double>(k) * cfg_.period_s, &engine);
    engine.schedule(static_cast<double>(k + 1) * cfg_.period_s, EventKind::scheduler_tick,
                    [tick_fn, k] { (*tick_fn)(k + 1); });
  };
  engine.schedule(0.0, EventKind::scheduler_tick, [tick_fn] { (*tick_fn)(0); });
}

std::vector<std::vector<LinkState>> LinkScheduler::run(double horizon_s, TraceSink* sink) {
  if (!(horizon_s > 0.0)) throw RuntimeFault("scheduler horizon must be > 0");
  TraceSink* prev = sink_;
  if (sink) sink_ = sink;
  timeline_.clear();
  const long ticks = static_cast<long>(std::floor(horizon_s / cfg_.period_s + 1e-9));
  for (long k = 0; k <= ticks; ++k) tick(static_cast<double>(k) * cfg_.period_s, nullptr);
  sink_ = prev;
  return timeline_;
}

}  // namespace meshfl
