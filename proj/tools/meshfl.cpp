// meshfl command-line harness: validate scenarios, run single experiments,
// compare routing policies across seeds, and generate/replay link traces.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "meshfl/experiment.hpp"
#include "meshfl/scenario.hpp"
#include "meshfl/util.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string policy;
  std::optional<int> rounds;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_out) {
  cmd->add_option("--config", o.config, "scenario JSON file")->required();
  auto* out = cmd->add_option("--out", o.out, "output directory for artifacts");
  if (needs_out) out->required();
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&o](std::uint64_t s) { o.seed = s; }, "master seed override");
  cmd->add_option("--policy", o.policy,
                  "routing policy: shortest_path | marl_online | marl_frozen=<snapshot>");
  cmd->add_option_function<int>(
      "--rounds", [&o](int r) { o.rounds = r; }, "FL rounds override");
}

int cmd_validate(const CommonOpts& o) {
  const meshfl::Scenario s = meshfl::load_scenario(o.config);
  int routers = 0, workers = 0, aggregators = 0, traced = 0;
  for (const auto& n : s.topology.nodes) {
    routers += n.role == meshfl::NodeRole::router;
    workers += n.role == meshfl::NodeRole::worker;
    aggregators += n.role == meshfl::NodeRole::aggregator;
    for (const auto& r : n.interfaces) traced += !r.trace_file.empty();
  }
  std::printf("OK: %s\n", o.config.c_str());
  std::printf("  nodes: %zu (%d routers, %d workers, %d aggregators)\n", s.topology.nodes.size(),
              routers, workers, aggregators);
  std::printf("  links: %zu (%d replay-driven interfaces)\n", s.topology.links.size(), traced);
  std::printf("  routing: %s\n", s.routing.policy.c_str());
  if (s.fl)
    std::printf("  fl: %d rounds, %d workers, model %ld bytes\n", s.fl->rounds, workers,
                s.fl->model_size_bytes);
  else
    std::printf("  fl: none (scheduler-only horizon %s s)\n",
                meshfl::fmt_double(s.horizon_s).c_str());
  return kExitOk;
}

int cmd_run(const CommonOpts& o) {
  meshfl::Scenario s = meshfl::load_scenario(o.config);
  meshfl::RunSpec spec;
  spec.policy = o.policy;
  spec.seed = o.seed;
  spec.rounds = o.rounds;
  spec.out_dir = o.out;
  const meshfl::RunResult r = meshfl::run_experiment(s, spec);
  std::printf("run complete: policy=%s seed=%llu\n", r.policy_name.c_str(),
              static_cast<unsigned long long>(r.seed));
  if (!r.rounds.empty()) {
    const auto& last = r.rounds.back();
    std::printf("  rounds: %zu, final loss %s, total sim time %s s\n", r.rounds.size(),
                meshfl::fmt_double(last.loss).c_str(), meshfl::fmt_double(last.sim_time_s).c_str());
  }
  if (r.policy_name != "shortest_path")
    std::printf("  q-updates: %llu applied, %llu skipped (%llu reward events)\n",
                static_cast<unsigned long long>(r.q_updates_applied),
                static_cast<unsigned long long>(r.q_updates_skipped),
                static_cast<unsigned long long>(r.reward_events));
  if (!o.out.empty()) {
    std::printf("  artifacts in %s:\n", o.out.c_str());
    for (const auto& f : r.artifacts) std::printf("    %s\n", f.c_str());
  }
  return kExitOk;
}

int cmd_compare(const CommonOpts& o, const std::string& policies_csv,
                const std::string& seeds_csv, int jobs) {
  meshfl::Scenario s = meshfl::load_scenario(o.config);
  meshfl::CompareSpec spec;
  spec.out_dir = o.out;
  spec.jobs = jobs;
  for (const auto& p : meshfl::split(policies_csv, ','))
    if (!p.empty()) spec.policies.push_back(p);
  if (seeds_csv.empty()) {
    spec.seeds.push_back(o.seed.value_or(s.topology.seed));
  } else {
    for (const auto& t : meshfl::split(seeds_csv, ','))
      if (!t.empty()) spec.seeds.push_back(std::stoull(t));
  }
  const meshfl::CompareResult r = meshfl::run_compare(s, spec);
  int failed = 0;
  for (const auto& c : r.cells) failed += !c.ok;
  std::printf("compare complete: %zu runs (%d failed), summary at %s\n", r.cells.size(), failed,
              r.summary_path.c_str());
  return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_trace_generate(const CommonOpts& o) {
  meshfl::Scenario s = meshfl::load_scenario(o.config);
  meshfl::RunSpec spec;
  spec.seed = o.seed;
  spec.out_dir = o.out;
  const meshfl::RunResult r = meshfl::run_trace_generate(s, spec);
  std::printf("trace generation complete: %zu ticks over %s s horizon\n", r.link_timeline.size(),
              meshfl::fmt_double(s.horizon_s).c_str());
  for (const auto& f : r.artifacts) std::printf("  %s\n", f.c_str());
  return kExitOk;
}

int cmd_trace_replay(const CommonOpts& o, const std::string& traces_dir) {
  meshfl::Scenario s = meshfl::load_scenario(o.config);
  if (!traces_dir.empty()) {
    // Bind generated traces by filename convention <node>_<iface>.csv.
    for (auto& n : s.topology.nodes) {
      for (auto& r : n.interfaces) {
        const std::string candidate = traces_dir + "/" + n.id + "_" + r.iface_id + ".csv";
        if (std::filesystem::exists(candidate)) r.trace_file = candidate;
      }
    }
  }
  int traced = 0;
  for (const auto& n : s.topology.nodes)
    for (const auto& r : n.interfaces) traced += !r.trace_file.empty();
  if (traced == 0)
    throw meshfl::ConfigError("trace replay needs at least one interface with a trace_file");
  meshfl::RunSpec spec;
  spec.policy = o.policy;
  spec.seed = o.seed;
  spec.rounds = o.rounds;
  spec.out_dir = o.out;
  const meshfl::RunResult r = meshfl::run_experiment(s, spec);
  std::printf("trace replay complete: %zu ticks, %s\n", r.link_timeline.size(),
              r.trace_exhausted ? "trace(s) exhausted (held last record)" : "traces covered the run");
  for (const auto& f : r.artifacts) std::printf("  %s\n", f.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshfl: discrete-event simulator for federated learning over wireless mesh networks"};
  app.require_subcommand(1);

  CommonOpts validate_o, run_o, compare_o, gen_o, replay_o;
  std::string policies_csv = "shortest_path,marl_online";
  std::string seeds_csv;
  int jobs = 1;

  CLI::App* validate = app.add_subcommand("validate", "parse and validate a scenario file");
  validate->add_option("--config", validate_o.config, "scenario JSON file")->required();

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_common(run, run_o, true);

  CLI::App* compare = app.add_subcommand("compare", "run a policy/seed comparison suite");
  add_common(compare, compare_o, true);
  compare->add_option("--policies", policies_csv, "comma-separated policy list");
  compare->add_option("--seeds", seeds_csv, "comma-separated seed list");
  compare->add_option("--jobs", jobs, "parallel simulation instances")->check(CLI::PositiveNumber);

  CLI::App* trace = app.add_subcommand("trace", "trace generation and replay");
  trace->require_subcommand(1);
  CLI::App* generate = trace->add_subcommand("generate", "record per-interface trace CSVs");
  add_common(generate, gen_o, true);
  CLI::App* replay = trace->add_subcommand("replay", "run with trace-driven interfaces");
  add_common(replay, replay_o, true);
  std::string traces_dir;
  replay->add_option("--traces", traces_dir,
                     "directory of generated <node>_<iface>.csv traces to bind");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(validate)) return cmd_validate(validate_o);
    if (app.got_subcommand(run)) return cmd_run(run_o);
    if (app.got_subcommand(compare)) return cmd_compare(compare_o, policies_csv, seeds_csv, jobs);
    if (app.got_subcommand(trace)) {
      if (trace->got_subcommand(generate)) return cmd_trace_generate(gen_o);
      if (trace->got_subcommand(replay)) return cmd_trace_replay(replay_o, traces_dir);
    }
  } catch (const meshfl::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
