#ifndef MESHFL_EXPERIMENT_HPP
#define MESHFL_EXPERIMENT_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "meshfl/scenario.hpp"

namespace meshfl {

// Per-run knobs on top of the scenario file (CLI overrides).
struct RunSpec {
  std::string policy;  // empty = scenario's; "marl_frozen=<path>" accepted
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  std::string out_dir;  // empty = no artifacts written
};

struct RunResult {
  std::vector<FLRoundLog> rounds;
  std::vector<std::vector<LinkState>> link_timeline;
  EngineCounters counters;
  std::uint64_t reward_events = 0;
  std::uint64_t q_updates_applied = 0;
  std::uint64_t q_updates_skipped = 0;
  nlohmann::json qtables;  // null unless a MA-RL policy ran
  bool trace_exhausted = false;
  std::string policy_name;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;  // files written under out_dir
};

// Runs one simulation instance: builds the engine, scheduler, routing policy
// and (when the scenario has an fl section) the FL orchestrator, runs to
// completion, and writes the artifact set (rounds.csv, delays.csv,
// qtables.json, events.jsonl, links_timeline.csv, manifest.json) when
// out_dir is set.
RunResult run_experiment(const Scenario& scenario, const RunSpec& spec);

// Trace generation: scheduler-only run over scenario.horizon_s writing one
// CSV per radio interface under out_dir/traces plus the link timeline.
RunResult run_trace_generate(const Scenario& scenario, const RunSpec& spec);

struct CompareSpec {
  std::vector<std::string> policies;  // tokens as accepted by RunSpec::policy
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  std::string out_dir;
};

struct CompareCell {
  std::string policy;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<double> round_times;  // per-round wall-clock deltas
  std::vector<double> losses;
  std::vector<double> round_clock;  // completion times
};

struct CompareResult {
  std::vector<CompareCell> cells;  // policy-major, seed-minor order
  std::string summary_path;
};

// Runs every (policy, seed) combination, optionally across jobs worker
// threads (instances share nothing, so the artifacts are identical for any
// job count), then writes summary.csv and plot-data files under out_dir.
CompareResult run_compare(const Scenario& scenario, const CompareSpec& spec);

// Hash manifest helpers (FNV-1a 64 over file bytes).
std::string hash_file(const std::string& path);
void write_manifest(const std::string& dir, const std::vector<std::string>& files);

}  // namespace meshfl

#endif
