#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "mfl/fed.hpp"

namespace mfl {

enum class InstanceStatus { scheduled, active, paused, finished };
enum class InitMode { fresh, warm };

/// One scheduled run of the base FL algorithm over [start, end], end - start + 1 = 2^order.
struct Instance {
  int start = 0;
  int end = 0;
  int order = 0;
  double eta = 1.0;  // 1 / sqrt(end - start + 1)
  ModelVector model;
  OptimisticTracker tracker;
  InstanceStatus status = InstanceStatus::scheduled;

  bool covers(int t) const { return start <= t && t <= end; }
};

/// Instances of one block [block_start, block_start + 2^order - 1].
struct InstancePool {
  int block_start = 1;
  int order = 0;
  std::vector<Instance> instances;
};

using RateFn = std::function<double(double)>;

/// Randomized scheduling: for each round tau of the block and each k = m..0 with
/// (tau - block_start) divisible by 2^k, adds an order-k instance [tau, tau + 2^k - 1]
/// with probability rho(2^m) / rho(2^k). The order-m instance is always added.
InstancePool schedule_block(int block_start, int m, const RateFn& rho, std::mt19937_64& rng);

/// Index of the covering instance with the shortest remaining run length; ties go to the
/// smaller order, then the later start. Throws std::logic_error if nothing covers t.
std::size_t pick_active(const InstancePool& pool, int t);

struct TrackerParams {
  double c_tilde = 1.0;
  double log_term = 1.0;
  std::size_t window = 0;  // 0 = 2 * 2^m of the current block
};

/// Runs one block's instances round by round on top of a FedEngine.
class MultiScaleRunner {
 public:
  MultiScaleRunner(const FedEngine& engine, InitMode init, TrackerParams params);

  void start_block(int t, int m, const RateFn& rho, std::mt19937_64& rng);
  /// Installs an explicit pool (tests and the single-instance baseline).
  void set_pool(InstancePool pool);

  struct Step {
    FedRoundOutput output;
    std::size_t instance = 0;
  };

  /// Selects A_t, runs FL-UPDATE from A_t's own model with A_t's step size, stores the
  /// aggregated model back into A_t and marks it finished at its end round.
  Step run_round(int t, const RoundDataset& data, std::shared_ptr<const RoundEvaluator> evaluator);

  const InstancePool& pool() const { return pool_; }
  std::size_t instances_started() const { return started_; }

 private:
  void activate(Instance& inst);

  const FedEngine& engine_;
  InitMode init_;
  TrackerParams params_;
  InstancePool pool_;
  std::optional<std::size_t> active_;
  ModelVector last_model_;  // x^(t-1) of whichever instance played last
  std::size_t started_ = 0;
};

}  // namespace mfl
