#ifndef MESHFL_CHANNEL_HPP
#define MESHFL_CHANNEL_HPP

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "meshfl/rng.hpp"

namespace meshfl {

enum class ChannelModelKind { log_distance, log_normal_shadowing, trace_replay };

// per_tick redraws the shadowing term every scheduler tick (fast-fading
// proxy); static_offset draws one offset per link and keeps it for the run.
enum class ShadowingMode { per_tick, static_offset };

struct ChannelModelConfig {
  ChannelModelKind kind = ChannelModelKind::log_distance;
  double ref_loss_db = 40.0;
  double ref_distance_m = 1.0;
  double exponent = 3.0;          // path-loss exponent, (1, 6]
  double shadow_sigma_db = 4.0;   // log-normal shadowing only
  double noise_floor_dbm = -91.0;
  ShadowingMode shadowing_mode = ShadowingMode::per_tick;
  double loss_ramp_db = 3.0;      // lossy band width above the MCS0 threshold

  void validate() const;  // throws ConfigError
};

struct InterferenceModelConfig {
  enum class Kind { none, airtime_fair };
  Kind kind = Kind::airtime_fair;
  double range_scale = 2.0;  // interference range = scale * MCS0 comm range
  double range_m = -1.0;     // >= 0 overrides the derived range

  void validate() const;
};

// One row of a per-interface trace CSV.
struct TraceRecord {
  double time_s = 0.0;
  int mcs_index = -1;  // -1 = link down
  double rssi_dbm = -95.0;
  double loss = 1.0;  // frame loss fraction
  double traffic_rate_mbps = 0.0;
};

struct LinkCondition {
  double rssi_dbm = -200.0;
  double snr_db = -200.0;
  double loss = 1.0;
};

// Free-space-style deterministic loss plus optional shadowing draw.
// trace_replay configs have no analytic loss; asking for one is an error.
double path_loss_db(const ChannelModelConfig& model, double distance_m, RngStream* rng);

// rssi = tx - path_loss, snr = rssi - noise floor, loss from the SNR step
// curve anchored at mcs0_min_snr_db. Distances below ref_distance_m are
// clamped to it.
LinkCondition link_condition(const ChannelModelConfig& model, double distance_m,
                             double tx_power_dbm, double mcs0_min_snr_db, RngStream* rng);

// loss = 1 below the MCS0 threshold, 0 at/above threshold + ramp, linear in
// between.
double loss_from_snr(double snr_db, double mcs0_min_snr_db, double ramp_db);

// Fair airtime sharing: each of `contenders` co-channel links that carried
// traffic in the previous scheduler window gets an equal share.
double effective_rate(double nominal_rate_mbps, int contenders);

// Loaded per-interface trace with zero-order-hold lookup.
class Trace {
 public:
  // CSV with header `time_s,mcs_index,rssi_dbm,loss,traffic_rate_mbps`.
  // Throws ConfigError naming the file and line on malformed rows, empty
  // traces, or non-increasing timestamps.
  static Trace load_csv(const std::string& path);
  static Trace from_records(std::vector<TraceRecord> records);  // validates

  struct Sample {
    const TraceRecord* record;
    bool exhausted;  // t was past the last record; value held
  };
  Sample at(double t) const;

  const std::vector<TraceRecord>& records() const { return records_; }

 private:
  std::vector<TraceRecord> records_;
};

// Appends trace rows for one interface; one writer per file.
class TraceWriter {
 public:
  TraceWriter(const std::string& path, std::string iface_label);
  ~TraceWriter();
  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;
  TraceWriter(TraceWriter&& other) noexcept;

  void write_row(double t, int mcs_index, double rssi_dbm, double loss,
                 double traffic_rate_mbps);
  const std::string& iface_label() const { return iface_label_; }

 private:
  std::FILE* file_ = nullptr;
  std::string iface_label_;
  std::string path_;
};

extern const char* const kTraceCsvHeader;  // "time_s,mcs_index,rssi_dbm,loss,traffic_rate_mbps"

}  // namespace meshfl

#endif
