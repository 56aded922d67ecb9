#include "meshfl/flworkload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "meshfl/util.hpp"

namespace meshfl {

void FLConfig::validate() const {
  if (rounds < 1) throw ConfigError("fl.rounds must be >= 1");
  if (local_iters < 1) throw ConfigError("fl.local_iters must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("fl.learning_rate must be > 0");
  if (model_size_bytes < 1) throw ConfigError("fl.model_size_bytes must be >= 1");
  if (batch_noise_sigma < 0.0) throw ConfigError("fl.batch_noise_sigma must be >= 0");
  if (model_dim < 1) throw ConfigError("fl.model_dim must be >= 1");
  for (const auto& [worker, c] : centers)
    if (static_cast<int>(c.size()) != model_dim)
      throw ConfigError("fl.centers[" + worker + "] has dimension " + std::to_string(c.size()) +
                        ", expected " + std::to_string(model_dim));
  if (!init_model.empty() && static_cast<int>(init_model.size()) != model_dim)
    throw ConfigError("fl.init_model dimension mismatch");
  if (compute.dist == ComputeTimeConfig::Dist::constant && compute.seconds < 0.0)
    throw ConfigError("fl.compute.seconds must be >= 0");
  if (compute.dist == ComputeTimeConfig::Dist::gaussian && compute.sigma < 0.0)
    throw ConfigError("fl.compute.sigma must be >= 0");
}

double WorkerObjective::loss(const Vec& w) const {
  if (w.size() != center.size()) throw RuntimeFault("objective dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = w[i] - center[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

Vec WorkerObjective::gradient(const Vec& w) const {
  if (w.size() != center.size()) throw RuntimeFault("objective dimension mismatch");
  Vec g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) g[i] = w[i] - center[i];
  return g;
}

Vec local_sgd(const WorkerObjective& objective, Vec w, int iters, double eta, double noise_sigma,
              RngStream* rng) {
  if (w.size() != objective.center.size())
    throw RuntimeFault("local_sgd dimension mismatch for worker " + objective.worker);
  if (eta >= 2.0)
    log_warn("local_sgd: learning rate " + fmt_double(eta) +
             " exceeds the stability bound (2) for the quadratic objective; expect divergence");
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      double g = w[i] - objective.center[i];
      if (noise_sigma > 0.0) {
        if (!rng) throw RuntimeFault("local_sgd noise requested without an RNG stream");
        g += rng->gaussian(0.0, noise_sigma);
      }
      w[i] -= eta * g;
    }
  }
  return w;
}

Vec fedavg(const std::vector<std::pair<Vec, double>>& weighted_models,
           FLConfig::Aggregation mode) {
  if (weighted_models.empty()) throw RuntimeFault("fedavg over empty model set");
  const std::size_t dim = weighted_models.front().first.size();
  for (const auto& [m, wgt] : weighted_models)
    if (m.size() != dim) throw RuntimeFault("fedavg dimension mismatch");
  Vec out(dim, 0.0);
  if (mode == FLConfig::Aggregation::uniform) {
    for (const auto& [m, wgt] : weighted_models)
      for (std::size_t i = 0; i < dim; ++i) out[i] += m[i];
    for (double& v : out) v /= static_cast<double>(weighted_models.size());
  } else {
    double total = 0.0;
    for (const auto& [m, wgt] : weighted_models) total += wgt;
    if (total <= 0.0) throw RuntimeFault("fedavg weights sum to zero");
    for (const auto& [m, wgt] : weighted_models)
      for (std::size_t i = 0; i < dim; ++i) out[i] += wgt * m[i];
    for (double& v : out) v /= total;
  }
  return out;
}

FLOrchestrator::FLOrchestrator(Engine& engine, RoutingPolicy& policy, const Topology& topo,
                               const FLConfig& cfg, std::uint64_t master_seed)
    : engine_(engine), policy_(policy), cfg_(cfg), master_seed_(master_seed) {
  cfg_.validate();
  for (const auto& n : topo.nodes) {
    if (n.role == NodeRole::worker) workers_.push_back(n.id);
    if (n.role == NodeRole::aggregator) {
      if (!aggregator_.empty())
        throw ConfigError("fl needs exactly one aggregator; found \"" + aggregator_ + "\" and \"" +
                          n.id + "\"");
      aggregator_ = n.id;
    }
  }
  if (workers_.empty()) throw ConfigError("fl needs at least one worker node");
  if (aggregator_.empty()) throw ConfigError("fl needs an aggregator node");
  std::sort(workers_.begin(), workers_.end());

  if (cfg_.compute.dist == ComputeTimeConfig::Dist::per_worker)
    for (const auto& w : workers_)
      if (!cfg_.compute.per_worker.count(w))
        throw ConfigError("fl.compute.per_worker missing worker \"" + w + "\"");
  for (const auto& [w, c] : cfg_.centers)
    if (std::find(workers_.begin(), workers_.end(), w) == workers_.end())
      throw ConfigError("fl.centers names unknown worker \"" + w + "\"");

  for (const auto& w : workers_) {
    WorkerObjective obj;
    obj.worker = w;
    auto cit = cfg_.centers.find(w);
    if (cit != cfg_.centers.end()) {
      obj.center = cit->second;
    } else {
      RngStream center_rng(master_seed_, "fl_center/" + w);
      obj.center.resize(cfg_.model_dim);
      for (double& v : obj.center) v = center_rng.gaussian();
    }
    auto wit = cfg_.weights.find(w);
    obj.weight = wit != cfg_.weights.end() ? wit->second : 1.0;
    objectives_.emplace(w, std::move(obj));
    noise_rng_.emplace(w, RngStream(master_seed_, "worker_noise/" + w));
    compute_rng_.emplace(w, RngStream(master_seed_, "worker_compute/" + w));
  }

  model_ = cfg_.init_model.empty() ? Vec(cfg_.model_dim, 0.0) : cfg_.init_model;

  engine_.on_flow_complete([this](const Flow& f) {
    if (upload_flows_.count(f.id)) {
      on_upload_complete(f);
    } else if (download_flows_.count(f.id)) {
      on_download_complete(f);
    }
  });
  engine_.on_flow_failed([this](const Flow& f) {
    if (upload_flows_.count(f.id) || download_flows_.count(f.id))
      abort_round("flow " + std::to_string(f.id) + " (" + f.label + ") failed");
  });
}

void FLOrchestrator::start() {
  engine_.schedule(0.0, EventKind::round_timer, [this] { begin_round(engine_.now()); });
}

double FLOrchestrator::compute_time(const std::string& worker) {
  switch (cfg_.compute.dist) {
    case ComputeTimeConfig::Dist::constant:
      return cfg_.compute.seconds;
    case ComputeTimeConfig::Dist::gaussian:
      return std::max(0.0, compute_rng_.at(worker).gaussian(cfg_.compute.mean, cfg_.compute.sigma));
    case ComputeTimeConfig::Dist::per_worker:
      return cfg_.compute.per_worker.at(worker);
  }
  return cfg_.compute.seconds;
}

void FLOrchestrator::begin_round(double t) {
  ++round_;
  round_start_t_ = t;
  policy_.set_round(round_);
  pending_local_.clear();
  upload_flows_.clear();
  download_flows_.clear();
  upload_delay_.clear();
  download_delay_.clear();
  uploads_done_ = downloads_done_ = 0;

  engine_.log_event("round_start", {{"t", t}, {"round", round_}});

  // Local training is pure model math on per-worker streams: the resulting
  // loss trajectory cannot depend on the routing policy, only the timing can.
  for (const auto& w : workers_) {
    pending_local_[w] = local_sgd(objectives_.at(w), model_, cfg_.local_iters, cfg_.learning_rate,
                                  cfg_.batch_noise_sigma, &noise_rng_.at(w));
  }
  for (const auto& w : workers_) {
    const double done_at = t + compute_time(w);
    const FlowId fid =
        engine_.start_flow(engine_.node_index(w), engine_.node_index(aggregator_),
                           cfg_.model_size_bytes, done_at, /*reliable=*/true,
                           "upload/" + w + "/round" + std::to_string(round_));
    upload_flows_[fid] = w;
  }
}

void FLOrchestrator::on_upload_complete(const Flow& flow) {
  const std::string& w = upload_flows_.at(flow.id);
  upload_delay_[w] = flow.complete_t - flow.start_t;
  if (++uploads_done_ < workers_.size()) return;

  // Full participation: aggregate in sorted-worker order so float summation
  // order never depends on arrival order.
  std::vector<std::pair<Vec, double>> models;
  models.reserve(workers_.size());
  for (const auto& id : workers_) models.emplace_back(pending_local_.at(id), objectives_.at(id).weight);
  model_ = fedavg(models, cfg_.aggregation);
  double loss = 0.0;
  for (const auto& id : workers_) loss += objectives_.at(id).loss(model_);
  round_loss_ = loss / static_cast<double>(workers_.size());

  for (const auto& id : workers_) {
    const FlowId fid =
        engine_.start_flow(engine_.node_index(aggregator_), engine_.node_index(id),
                           cfg_.model_size_bytes, engine_.now(), /*reliable=*/true,
                           "download/" + id + "/round" + std::to_string(round_));
    download_flows_[fid] = id;
  }
}

void FLOrchestrator::on_download_complete(const Flow& flow) {
  const std::string& w = download_flows_.at(flow.id);
  download_delay_[w] = flow.complete_t - flow.start_t;
  if (++downloads_done_ < workers_.size()) return;
  finish_round();
}

void FLOrchestrator::finish_round() {
  FLRoundLog log;
  log.round = round_;
  log.loss = round_loss_;
  log.sim_time_s = engine_.now();
  log.model = model_;
  log.upload_s = upload_delay_;
  log.download_s = download_delay_;
  double worst = -1.0;
  for (const auto& w : workers_) {
    log.upload_max_s = std::max(log.upload_max_s, upload_delay_.at(w));
    log.download_max_s = std::max(log.download_max_s, download_delay_.at(w));
    const double total = upload_delay_.at(w) + download_delay_.at(w);
    if (total > worst) {
      worst = total;
      log.straggler = w;
    }
  }
  engine_.log_event("round_complete", {{"t", engine_.now()},
                                       {"round", round_},
                                       {"loss", round_loss_},
                                       {"straggler", log.straggler},
                                       {"upload_max_s", log.upload_max_s},
                                       {"download_max_s", log.download_max_s}});
  rounds_.push_back(std::move(log));

  if (round_ < cfg_.rounds) {
    begin_round(engine_.now());
  } else {
    engine_.request_stop();
  }
}

void FLOrchestrator::abort_round(const std::string& reason) {
  aborted_ = true;
  abort_reason_ = "round " + std::to_string(round_) + " aborted: " + reason;
  log_error(abort_reason_);
  engine_.log_event("round_aborted", {{"t", engine_.now()}, {"round", round_}, {"reason", reason}});
  engine_.request_stop();
}

void FLOrchestrator::write_rounds_csv(const std::vector<FLRoundLog>& rounds,
                                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFault("cannot open rounds CSV for writing: " + path);
  out << "round,loss,sim_time_s,slowest_worker,upload_max_s,download_max_s\n";
  for (const auto& r : rounds) {
    out << r.round << ',' << fmt_double(r.loss) << ',' << fmt_double(r.sim_time_s) << ','
        << r.straggler << ',' << fmt_double(r.upload_max_s) << ',' << fmt_double(r.download_max_s)
        << '\n';
  }
  if (!out) throw RuntimeFault("write failed: " + path);
}

}  // namespace meshfl
