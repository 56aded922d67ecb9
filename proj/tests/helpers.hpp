#ifndef MESHFL_TESTS_HELPERS_HPP
#define MESHFL_TESTS_HELPERS_HPP

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "meshfl/scenario.hpp"
#include "meshfl/topology.hpp"

namespace testutil {

inline std::string scenario_dir() { return MESHFL_SCENARIO_DIR; }

inline std::string scenario_path(const std::string& name) {
  return scenario_dir() + "/" + name;
}

// Unique-ish temp dir per test binary run.
inline std::string fresh_tmp_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("meshfl_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void spit(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

// A linear chain of routers r0 - r1 - ... - r(n-1), 30 m apart, one radio per
// link end, all on channel 36.
inline nlohmann::json chain_json(int n) {
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    nlohmann::json ifs = nlohmann::json::array();
    if (i > 0) ifs.push_back({{"iface_id", "ww"}, {"band", "5GHz"}, {"channel", 36}});
    if (i + 1 < n) ifs.push_back({{"iface_id", "we"}, {"band", "5GHz"}, {"channel", 36}});
    nodes.push_back({{"id", "r" + std::to_string(i)},
                     {"role", "router"},
                     {"position", {30.0 * i, 0.0}},
                     {"interfaces", ifs}});
  }
  nlohmann::json links = nlohmann::json::array();
  for (int i = 0; i + 1 < n; ++i)
    links.push_back({"r" + std::to_string(i), "we", "r" + std::to_string(i + 1), "ww"});
  return {{"seed", 1},
          {"nodes", nodes},
          {"links", links},
          {"channel_model",
           {{"name", "log_distance"}, {"ref_loss_db", 40.0}, {"exponent", 3.0}}}};
}

inline meshfl::Scenario chain_scenario(int n, int chunk_size = 1500) {
  nlohmann::json j = chain_json(n);
  j["netsim"] = {{"chunk_size_bytes", chunk_size}};
  return meshfl::scenario_from_json(j, "");
}

}  // namespace testutil

#endif
