#include "meshfl/channel.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>

#include "meshfl/util.hpp"

namespace meshfl {

const char* const kTraceCsvHeader = "time_s,mcs_index,rssi_dbm,loss,traffic_rate_mbps";

void ChannelModelConfig::validate() const {
  if (!(exponent > 1.0 && exponent <= 6.0))
    throw ConfigError("exponent must be in (1, 6], got " + fmt_double(exponent));
  if (shadow_sigma_db < 0.0)
    throw ConfigError("shadow_sigma_db must be >= 0, got " + fmt_double(shadow_sigma_db));
  if (ref_distance_m <= 0.0)
    throw ConfigError("ref_distance_m must be > 0, got " + fmt_double(ref_distance_m));
  if (loss_ramp_db <= 0.0)
    throw ConfigError("loss_ramp_db must be > 0, got " + fmt_double(loss_ramp_db));
}

void InterferenceModelConfig::validate() const {
  if (kind == Kind::airtime_fair && range_scale <= 0.0 && range_m < 0.0)
    throw ConfigError("airtime_fair needs range_scale > 0 or an explicit range_m");
}

double path_loss_db(const ChannelModelConfig& model, double distance_m, RngStream* rng) {
  if (model.kind == ChannelModelKind::trace_replay)
    throw RuntimeFault("path loss undefined for trace_replay; use trace replay conditions");
  if (distance_m <= 0.0)
    throw RuntimeFault("path loss requested for non-positive distance " + fmt_double(distance_m));
  double loss = model.ref_loss_db +
                10.0 * model.exponent * std::log10(distance_m / model.ref_distance_m);
  if (model.kind == ChannelModelKind::log_normal_shadowing) {
    if (!rng) throw RuntimeFault("log_normal_shadowing needs an RNG stream");
    loss += rng->gaussian(0.0, model.shadow_sigma_db);
  }
  if (!std::isfinite(loss)) throw RuntimeFault("non-finite path loss computed");
  return loss;
}

double loss_from_snr(double snr_db, double mcs0_min_snr_db, double ramp_db) {
  const double l = (mcs0_min_snr_db + ramp_db - snr_db) / ramp_db;
  return std::clamp(l, 0.0, 1.0);
}

LinkCondition link_condition(const ChannelModelConfig& model, double distance_m,
                             double tx_power_dbm, double mcs0_min_snr_db, RngStream* rng) {
  // Co-located nodes carry reference-distance loss rather than log10(0).
  const double d = std::max(distance_m, model.ref_distance_m);
  LinkCondition c;
  c.rssi_dbm = tx_power_dbm - path_loss_db(model, d, rng);
  c.snr_db = c.rssi_dbm - model.noise_floor_dbm;
  c.loss = loss_from_snr(c.snr_db, mcs0_min_snr_db, model.loss_ramp_db);
  return c;
}

double effective_rate(double nominal_rate_mbps, int contenders) {
  if (contenders < 1)
    throw RuntimeFault("effective_rate needs contenders >= 1, got " + std::to_string(contenders));
  return nominal_rate_mbps / static_cast<double>(contenders);
}

Trace Trace::from_records(std::vector<TraceRecord> records) {
  if (records.empty()) throw ConfigError("trace has no records");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const TraceRecord& r = records[i];
    if (i > 0 && !(r.time_s > records[i - 1].time_s))
      throw ConfigError("trace times must be strictly increasing (record " + std::to_string(i) +
                        ")");
    if (r.loss < 0.0 || r.loss > 1.0)
      throw ConfigError("trace loss out of [0,1] (record " + std::to_string(i) + ")");
    if (r.mcs_index < -1) throw ConfigError("trace mcs_index < -1 (record " + std::to_string(i) + ")");
    if (r.traffic_rate_mbps < 0.0)
      throw ConfigError("trace traffic_rate_mbps < 0 (record " + std::to_string(i) + ")");
  }
  Trace t;
  t.records_ = std::move(records);
  return t;
}

Trace Trace::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trace file is empty: " + path);
  // Tolerate trailing \r from foreign-edited CSVs.
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceCsvHeader)
    throw ConfigError("trace file " + path + " line 1: expected header \"" +
                      std::string(kTraceCsvHeader) + "\"");
  std::vector<TraceRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split(line, ',');
    if (cols.size() != 5)
      throw ConfigError("trace file " + path + " line " + std::to_string(line_no) +
                        ": expected 5 columns, got " + std::to_string(cols.size()));
    TraceRecord r;
    try {
      r.time_s = std::stod(cols[0]);
      r.mcs_index = std::stoi(cols[1]);
      r.rssi_dbm = std::stod(cols[2]);
      r.loss = std::stod(cols[3]);
      r.traffic_rate_mbps = std::stod(cols[4]);
    } catch (const std::exception&) {
      throw ConfigError("trace file " + path + " line " + std::to_string(line_no) +
                        ": malformed number");
    }
    records.push_back(r);
  }
  try {
    return from_records(std::move(records));
  } catch (const ConfigError& e) {
    throw ConfigError("trace file " + path + ": " + e.what());
  }
}

Trace::Sample Trace::at(double t) const {
  // Zero-order hold: last record with time_s <= t, clamped at both ends.
  const TraceRecord probe{t, 0, 0.0, 0.0, 0.0};
  auto it = std::upper_bound(records_.begin(), records_.end(), probe,
                             [](const TraceRecord& a, const TraceRecord& b) {
                               return a.time_s < b.time_s;
                             });
  if (it == records_.begin()) return {&records_.front(), false};
  const TraceRecord* rec = &*(it - 1);
  const bool exhausted = (it == records_.end()) && (t > records_.back().time_s);
  return {rec, exhausted};
}

TraceWriter::TraceWriter(const std::string& path, std::string iface_label)
    : iface_label_(std::move(iface_label)), path_(path) {
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_)
    throw RuntimeFault("cannot open trace output for interface " + iface_label_ + ": " + path +
                       " (" + std::strerror(errno) + ")");
  std::fputs(kTraceCsvHeader, file_);
  std::fputc('\n', file_);
}

TraceWriter::TraceWriter(TraceWriter&& other) noexcept
    : file_(other.file_), iface_label_(std::move(other.iface_label_)),
      path_(std::move(other.path_)) {
  other.file_ = nullptr;
}

TraceWriter::~TraceWriter() {
  if (file_) std::fclose(file_);
}

void TraceWriter::write_row(double t, int mcs_index, double rssi_dbm, double loss,
                            double traffic_rate_mbps) {
  if (!file_) throw RuntimeFault("trace writer for interface " + iface_label_ + " is closed");
  const std::string row = fmt_double(t) + "," + std::to_string(mcs_index) + "," +
                          fmt_double(rssi_dbm) + "," + fmt_double(loss) + "," +
                          fmt_double(traffic_rate_mbps) + "\n";
  if (std::fputs(row.c_str(), file_) == EOF || std::fflush(file_) != 0)
    throw RuntimeFault("trace write failed for interface " + iface_label_);
}

}  // namespace meshfl
