#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "mfl/data.hpp"
#include "mfl/loss.hpp"

namespace mfl {

enum class Algo { fedavg, fedomd };
enum class GradientMode { full_batch, minibatch };

/// x_prev - eta * grad
ModelVector local_update_fedavg(std::span<const double> x_prev, std::span<const double> grad,
                                double eta);

/// argmin_x <grad, x> + (1/eta) B_phi(x; x_prev). For phi = 1/2 sum w_i x_i^2 the
/// stationarity condition gives x_i = x_prev_i - eta * grad_i / w_i.
ModelVector local_update_fedomd(std::span<const double> x_prev, std::span<const double> grad,
                                double eta, const BregmanDivergence& bd);

/// sum_n p_n x_n, accumulated in index order. Weights must sum to 1 (tolerance 1e-9).
ModelVector aggregate(std::span<const ModelVector> models, std::span<const double> weights);

/// Mean gradient over a local dataset.
ModelVector full_gradient(std::span<const Datapoint> data, std::span<const double> model,
                          const LossModel& lm);

/// Mean gradient over ceil(gamma * D_n) points drawn without replacement.
/// gamma == 1 returns full_gradient exactly and draws nothing.
ModelVector minibatch_gradient(std::span<const Datapoint> data, std::span<const double> model,
                               const LossModel& lm, double gamma, std::mt19937_64& rng);

/// Evaluates the global loss F^(t)(x) = sum_n p_n F_n^(t)(x) of one retained round.
///
/// Quadratic rounds keep sufficient statistics and a bounding ball of their points; when
/// the ball shows no point can hit the clip, the mean loss is evaluated in O(d).
class RoundEvaluator {
 public:
  RoundEvaluator(std::shared_ptr<const RoundDataset> data, const LossModel& lm);

  struct DpuLosses {
    std::vector<double> per_dpu;
    double global = 0.0;
    std::size_t clipped = 0;
  };

  double global_loss(std::span<const double> model) const;
  DpuLosses dpu_losses(std::span<const double> model) const;

  const RoundDataset& data() const { return *data_; }
  std::shared_ptr<const RoundDataset> data_ptr() const { return data_; }
  std::size_t total() const { return data_->total; }
  const LossModel& loss_model() const { return lm_; }

 private:
  bool fast_path_ok(std::span<const double> model) const;
  double fast_mean_scaled(std::span<const double> model) const;

  std::shared_ptr<const RoundDataset> data_;
  LossModel lm_;
  bool quadratic_ = false;
  std::vector<double> sum_;  // sum of points, dense
  double sum_sq_ = 0.0;      // sum of squared point norms
  std::vector<double> center_;
  double radius_ = 0.0;
};

/// Optimistic loss estimate of one instance:
///   mean over the instance's retained rounds of F^(tau)(x) - c * sqrt(log(T/delta) / Dbar),
/// where Dbar counts every datapoint the instance has seen. Only the most recent
/// `window` rounds are retained; once older rounds are dropped the estimate is flagged.
class OptimisticTracker {
 public:
  OptimisticTracker() = default;
  OptimisticTracker(double c_tilde, double log_term, std::size_t window);

  void record(std::shared_ptr<const RoundEvaluator> round);
  double estimate(std::span<const double> model) const;

  bool degraded() const { return dropped_ > 0; }
  double cumulative_samples() const { return cumulative_; }
  std::size_t rounds_seen() const { return retained_.size() + dropped_; }
  std::size_t window() const { return window_; }
  double concentration() const;

 private:
  double c_tilde_ = 1.0;
  double log_term_ = 1.0;
  std::size_t window_ = 0;  // 0 = unbounded
  std::deque<std::shared_ptr<const RoundEvaluator>> retained_;
  std::size_t dropped_ = 0;
  double cumulative_ = 0.0;
};

double optimistic_estimate(const OptimisticTracker& tracker, std::span<const double> model);

struct FedSettings {
  Algo algo = Algo::fedavg;
  BregmanDivergence bregman;
  GradientMode mode = GradientMode::full_batch;
  std::vector<double> gammas;  // per DPU; empty = 1, one value = shared by all DPUs
  unsigned workers = 1;
  std::uint64_t seed = 0;

  double gamma(std::size_t dpu) const;
};

struct FedRoundOutput {
  ModelVector model;                // aggregated x^(t)
  double global_loss = 0.0;         // F^(t)(x^(t))
  std::vector<double> dpu_losses;   // F_n^(t)(x^(t))
  double optimistic = 0.0;          // F~^(t)
  bool degraded_estimate = false;
  std::size_t clip_events = 0;
  std::size_t lipschitz_violations = 0;
  std::size_t correct = 0;          // prequential hits of the pre-update model
  std::size_t evaluated = 0;
};

/// One federated round: local FL-UPDATE at every DPU from a shared model, weighted
/// aggregation in DPU-id order, global loss, and the tracker's optimistic estimate.
/// Local work may run on several threads; the result does not depend on the count.
class FedEngine {
 public:
  FedEngine(LossModel lm, FedSettings settings);

  FedRoundOutput run_round(std::span<const double> x_prev, double eta, const RoundDataset& data,
                           std::shared_ptr<const RoundEvaluator> evaluator,
                           OptimisticTracker& tracker) const;

  const LossModel& loss_model() const { return lm_; }
  const FedSettings& settings() const { return settings_; }

 private:
  LossModel lm_;
  FedSettings settings_;
};

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace mfl
