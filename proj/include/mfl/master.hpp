#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mfl/fed.hpp"
#include "mfl/multiscale.hpp"
#include "mfl/rate.hpp"

namespace mfl {

/// Test 1, evaluated when the active order-k instance reaches its end round:
/// fires iff U >= mean(losses over [A.s, A.e]) + scale * 9 * rhohat(2^k).
bool test1_triggers(double envelope, std::span<const double> instance_losses, int order,
                    const RateSchedule& rate, double scale = 1.0);

/// Test 2, evaluated every round: fires iff
/// mean over [t_new, t] of (F - F~) >= scale * 3 * rhohat(t - t_new + 1).
bool test2_triggers(std::span<const double> losses, std::span<const double> estimates,
                    const RateSchedule& rate, double scale = 1.0);

enum class Trigger { none, test1, test2, both, horizon };
std::string to_string(Trigger trigger);

struct MasterConfig {
  RateSchedule rate;
  double test_scale = 1.0;
  bool reset_order_on_restart = false;
  InitMode init = InitMode::fresh;
  double c_tilde = 1.0;
  std::size_t window = 0;  // 0 = 2 * 2^m of the current block
  std::uint64_t seed = 0;
};

struct RoundRecord {
  int t = 0;
  int block_order = -1;  // -1 for the single-instance baseline
  int epoch_id = 0;
  int inst_start = 0;
  int inst_end = 0;
  int inst_order = -1;
  double loss = 0.0;       // F^(t)(x^(t))
  double optimistic = 0.0; // F~^(t)
  double envelope = 0.0;   // U_t
  bool test1 = false;
  bool test2 = false;
  ModelVector model;       // x^(t)
  std::size_t correct = 0;
  std::size_t evaluated = 0;
  bool degraded_estimate = false;
  std::size_t clip_events = 0;
  std::size_t lipschitz_violations = 0;
};

struct EpochRecord {
  int start = 0;
  int end = 0;
  Trigger ended_by = Trigger::horizon;
};

struct BlockRecord {
  int start = 0;
  int end = 0;
  int order = 0;
  std::size_t scheduled = 0;
  Trigger ended_by = Trigger::none;
};

struct MasterResult {
  std::vector<RoundRecord> rounds;
  std::vector<EpochRecord> epochs;
  std::vector<BlockRecord> blocks;
  std::vector<int> restart_rounds;  // rounds at which a test fired
  std::size_t instances_started = 0;
};

using RoundProvider = std::function<std::shared_ptr<const RoundDataset>(int t)>;
/// Called after every round with its record and evaluator (inline instrumentation).
using RoundObserver = std::function<void(const RoundRecord&, const std::shared_ptr<const RoundEvaluator>&)>;

/// Block/epoch loop with the two drift tests. Block m runs up to 2^m rounds (order capped
/// at ceil(log2(rounds left))); a trigger ends the block and the epoch, and the next block
/// gets a fresh schedule. The order advances by one after every block unless
/// reset_order_on_restart is set and the block ended on a trigger.
MasterResult run_master(const MasterConfig& config, const FedEngine& engine,
                        const RoundProvider& provider, const RoundObserver& observer = {});

/// One base instance over [1, T] with step 1/sqrt(T) and no tests.
MasterResult run_single_instance(const MasterConfig& config, const FedEngine& engine,
                                 const RoundProvider& provider, const RoundObserver& observer = {});

}  // namespace mfl
