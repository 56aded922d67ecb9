#include "meshfl/mcs.hpp"

#include <fstream>

#include "meshfl/util.hpp"

namespace meshfl {

const McsTable& McsTable::default_table() {
  static const McsTable table = McsTable::from_entries({
      {0, 5.0, 6.5},
      {1, 8.0, 13.0},
      {2, 11.0, 19.5},
      {3, 14.0, 26.0},
      {4, 18.0, 39.0},
      {5, 22.0, 52.0},
      {6, 24.0, 58.5},
      {7, 26.0, 65.0},
      {8, 29.0, 78.0},
  });
  return table;
}

McsTable McsTable::from_entries(std::vector<McsEntry> entries) {
  if (entries.empty()) throw ConfigError("MCS table has no entries");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].rate_mbps <= 0.0)
      throw ConfigError("MCS table rate must be > 0 (row " + std::to_string(i) + ")");
    if (i > 0) {
      if (entries[i].mcs_index <= entries[i - 1].mcs_index)
        throw ConfigError("MCS table indices must be strictly increasing (row " +
                          std::to_string(i) + ")");
      if (!(entries[i].min_snr_db > entries[i - 1].min_snr_db))
        throw ConfigError("MCS table min_snr_db must be strictly increasing (row " +
                          std::to_string(i) + ")");
      if (!(entries[i].rate_mbps > entries[i - 1].rate_mbps))
        throw ConfigError("MCS table rate_mbps must be strictly increasing (row " +
                          std::to_string(i) + ")");
    }
  }
  McsTable t;
  t.entries_ = std::move(entries);
  return t;
}

McsTable McsTable::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open MCS table file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("MCS table file is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "mcs_index,min_snr_db,rate_mbps")
    throw ConfigError("MCS table file " + path +
                      " line 1: expected header \"mcs_index,min_snr_db,rate_mbps\"");
  std::vector<McsEntry> entries;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split(line, ',');
    if (cols.size() != 3)
      throw ConfigError("MCS table file " + path + " line " + std::to_string(line_no) +
                        ": expected 3 columns");
    try {
      entries.push_back({std::stoi(cols[0]), std::stod(cols[1]), std::stod(cols[2])});
    } catch (const std::exception&) {
      throw ConfigError("MCS table file " + path + " line " + std::to_string(line_no) +
                        ": malformed number");
    }
  }
  try {
    return from_entries(std::move(entries));
  } catch (const ConfigError& e) {
    throw ConfigError("MCS table file " + path + ": " + e.what());
  }
}

int McsTable::select_mcs(double snr_db) const {
  int best = -1;
  for (const auto& e : entries_) {
    if (e.min_snr_db <= snr_db)
      best = e.mcs_index;
    else
      break;
  }
  return best;
}

double McsTable::rate_for_mcs(int mcs_index) const {
  if (mcs_index == -1) return 0.0;
  for (const auto& e : entries_)
    if (e.mcs_index == mcs_index) return e.rate_mbps;
  throw RuntimeFault("MCS index " + std::to_string(mcs_index) + " not in table");
}

}  // namespace meshfl
