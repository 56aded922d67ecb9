#ifndef MESHFL_MCS_HPP
#define MESHFL_MCS_HPP

#include <string>
#include <vector>

namespace meshfl {

struct McsEntry {
  int mcs_index;
  double min_snr_db;
  double rate_mbps;
};

// SNR -> MCS -> PHY rate table. The built-in default covers 802.11ac,
// 20 MHz, one spatial stream, long guard interval (MCS 0-8).
class McsTable {
 public:
  static const McsTable& default_table();

  // CSV `mcs_index,min_snr_db,rate_mbps` with header.
  static McsTable load_csv(const std::string& path);
  static McsTable from_entries(std::vector<McsEntry> entries);  // validates

  // Highest MCS whose min_snr_db <= snr_db (threshold inclusive); -1 when
  // snr is below every threshold (link down).
  int select_mcs(double snr_db) const;

  // Rate for an index in the table; -1 maps to 0. Anything else is an error.
  double rate_for_mcs(int mcs_index) const;

  double mcs0_min_snr_db() const { return entries_.front().min_snr_db; }
  const std::vector<McsEntry>& entries() const { return entries_; }

 private:
  std::vector<McsEntry> entries_;  // ascending mcs_index
};

}  // namespace meshfl

#endif
