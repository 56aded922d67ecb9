#ifndef MESHFL_FLWORKLOAD_HPP
#define MESHFL_FLWORKLOAD_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meshfl/netsim.hpp"
#include "meshfl/rng.hpp"
#include "meshfl/routing.hpp"
#include "meshfl/topology.hpp"

namespace meshfl {

using Vec = std::vector<double>;

struct ComputeTimeConfig {
  enum class Dist { constant, gaussian, per_worker };
  Dist dist = Dist::constant;
  double seconds = 5.0;  // constant
  double mean = 5.0;     // gaussian
  double sigma = 0.0;
  std::map<std::string, double> per_worker;
};

struct FLConfig {
  int rounds = 20;
  int local_iters = 10;        // H
  double learning_rate = 0.1;  // eta
  long model_size_bytes = 5'800'000;
  enum class Aggregation { uniform, weighted };
  Aggregation aggregation = Aggregation::uniform;
  double batch_noise_sigma = 0.0;
  int model_dim = 10;
  ComputeTimeConfig compute;
  std::map<std::string, Vec> centers;      // optional explicit worker centers
  std::map<std::string, double> weights;   // optional m_k (default 1)
  Vec init_model;                          // optional w0 (default zeros)
  void validate() const;
};

// Synthetic local objective F_k(w) = 1/2 * ||w - c_k||^2; its gradient is
// w - c_k, which gives local SGD a closed form the tests pin against.
struct WorkerObjective {
  std::string worker;
  Vec center;
  double weight = 1.0;
  double loss(const Vec& w) const;
  Vec gradient(const Vec& w) const;
};

// H steps of w <- w - eta * (grad + xi), xi ~ N(0, sigma^2 I) drawn from the
// worker's stream. With sigma = 0 this equals c + (1-eta)^H * (w - c).
Vec local_sgd(const WorkerObjective& objective, Vec w, int iters, double eta, double noise_sigma,
              RngStream* rng);

Vec fedavg(const std::vector<std::pair<Vec, double>>& weighted_models,
           FLConfig::Aggregation mode);

struct FLRoundLog {
  int round = 0;              // 1-based
  double loss = 0.0;          // (1/K) sum_k F_k(w) on the post-aggregation model
  double sim_time_s = 0.0;    // wall clock at round completion
  Vec model;                  // post-aggregation global model
  std::string straggler;      // worker with max upload+download delay
  double upload_max_s = 0.0;
  double download_max_s = 0.0;
  std::map<std::string, double> upload_s;
  std::map<std::string, double> download_s;
};

// Synchronous FL over the simulated network: per round, every worker runs
// local SGD (compute time on its clock), uploads the model to the
// aggregator as a reliable flow, the aggregator averages and unicasts the
// global model back, and the round closes when the last download lands.
class FLOrchestrator {
 public:
  FLOrchestrator(Engine& engine, RoutingPolicy& policy, const Topology& topo, const FLConfig& cfg,
                 std::uint64_t master_seed);

  // Schedules round 1 at t = 0; the engine's run() drives everything and the
  // orchestrator requests a stop once the last round's downloads finish.
  void start();

  const std::vector<FLRoundLog>& rounds() const { return rounds_; }
  const Vec& global_model() const { return model_; }
  bool aborted() const { return aborted_; }
  const std::string& abort_reason() const { return abort_reason_; }

  static void write_rounds_csv(const std::vector<FLRoundLog>& rounds, const std::string& path);

 private:
  void begin_round(double t);
  void on_upload_complete(const Flow& flow);
  void on_download_complete(const Flow& flow);
  void finish_round();
  double compute_time(const std::string& worker);
  void abort_round(const std::string& reason);

  Engine& engine_;
  RoutingPolicy& policy_;
  const FLConfig cfg_;
  std::uint64_t master_seed_;

  std::vector<std::string> workers_;  // sorted ids
  std::string aggregator_;
  std::map<std::string, WorkerObjective> objectives_;
  std::map<std::string, RngStream> noise_rng_;
  std::map<std::string, RngStream> compute_rng_;

  Vec model_;
  int round_ = 0;
  double round_start_t_ = 0.0;
  std::map<std::string, Vec> pending_local_;  // this round's local models
  std::map<FlowId, std::string> upload_flows_, download_flows_;
  std::map<std::string, double> upload_delay_, download_delay_;
  std::size_t uploads_done_ = 0, downloads_done_ = 0;
  double round_loss_ = 0.0;
  std::vector<FLRoundLog> rounds_;
  bool aborted_ = false;
  std::string abort_reason_;
};

}  // namespace meshfl

#endif
