#include "mfl/master.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mfl {

double RateSchedule::cumulative(double t) const { return std::min(c1 * std::sqrt(t) + c2, t); }

double RateSchedule::rho(double t) const { return cumulative(t) / t; }

double RateSchedule::log_term() const {
  return std::log(static_cast<double>(horizon) / delta);
}

double RateSchedule::rho_hat(double t) const {
  if (t < 1.0) throw std::invalid_argument("rho_hat needs t >= 1");
  return 6.0 * (std::log2(static_cast<double>(horizon)) + 1.0) * log_term() * rho(t);
}

void RateSchedule::validate() const {
  if (!(c1 > 0.0) || c2 < 0.0) throw ConfigError("rate schedule needs c1 > 0 and c2 >= 0");
  if (!(delta > 0.0) || delta > 1.0) throw ConfigError("delta must lie in (0, 1]");
  if (horizon < 1) throw ConfigError("horizon T must be >= 1");
}

bool test1_triggers(double envelope, std::span<const double> instance_losses, int order,
                    const RateSchedule& rate, double scale) {
  if (instance_losses.empty()) return false;
  const double length = std::ldexp(1.0, order);
  const double mean =
      std::accumulate(instance_losses.begin(), instance_losses.end(), 0.0) / length;
  return envelope >= mean + scale * 9.0 * rate.rho_hat(length);
}

bool test2_triggers(std::span<const double> losses, std::span<const double> estimates,
                    const RateSchedule& rate, double scale) {
  if (losses.size() != estimates.size()) throw ConfigError("test 2 needs matching sequences");
  if (losses.empty()) return false;
  double gap = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) gap += losses[i] - estimates[i];
  const double n = static_cast<double>(losses.size());
  return gap / n >= scale * 3.0 * rate.rho_hat(n);
}

std::string to_string(Trigger trigger) {
  switch (trigger) {
    case Trigger::none: return "none";
    case Trigger::test1: return "test1";
    case Trigger::test2: return "test2";
    case Trigger::both: return "test1+test2";
    case Trigger::horizon: return "horizon";
  }
  return "unknown";
}

namespace {

RoundRecord make_record(int t, const MultiScaleRunner::Step& step, const Instance& inst) {
  RoundRecord r;
  r.t = t;
  r.inst_start = inst.start;
  r.inst_end = inst.end;
  r.inst_order = inst.order;
  r.loss = step.output.global_loss;
  r.optimistic = step.output.optimistic;
  r.model = step.output.model;
  r.correct = step.output.correct;
  r.evaluated = step.output.evaluated;
  r.degraded_estimate = step.output.degraded_estimate;
  r.clip_events = step.output.clip_events;
  r.lipschitz_violations = step.output.lipschitz_violations;
  return r;
}

int ceil_log2(int n) {
  int k = 0;
  while ((1 << k) < n) ++k;
  return k;
}

std::shared_ptr<const RoundEvaluator> evaluate(const RoundProvider& provider, int t,
                                               const LossModel& lm) {
  auto data = provider(t);
  if (!data) throw ConfigError("round provider returned no data for round " + std::to_string(t));
  return std::make_shared<const RoundEvaluator>(std::move(data), lm);
}

}  // namespace

MasterResult run_master(const MasterConfig& config, const FedEngine& engine,
                        const RoundProvider& provider, const RoundObserver& observer) {
  config.rate.validate();
  const int horizon = config.rate.horizon;
  const RateSchedule& rate = config.rate;
  auto scheduler_rng = make_stream(config.seed, 0, 0, 0x5C4ED);
  MultiScaleRunner runner(engine, config.init,
                          TrackerParams{config.c_tilde, rate.log_term(), config.window});
  const RateFn rho = [&rate](double t) { return rate.rho(t); };

  MasterResult result;
  result.rounds.reserve(static_cast<std::size_t>(horizon));
  int t = 1;
  int m = 0;
  int epoch_start = 1;
  int epoch_id = 0;
  while (t <= horizon) {
    const int order = std::min(m, ceil_log2(horizon - t + 1));
    const int t_new = t;
    runner.start_block(t_new, order, rho, scheduler_rng);

    std::vector<double> block_losses;
    std::vector<double> block_estimates;
    double envelope = -std::numeric_limits<double>::infinity();
    Trigger trigger = Trigger::none;
    while (t < t_new + (1 << order) && t <= horizon) {
      const auto evaluator = evaluate(provider, t, engine.loss_model());
      const auto step = runner.run_round(t, evaluator->data(), evaluator);
      const Instance& inst = runner.pool().instances[step.instance];

      block_losses.push_back(step.output.global_loss);
      block_estimates.push_back(step.output.optimistic);
      envelope = std::max(envelope, step.output.optimistic);

      RoundRecord record = make_record(t, step, inst);
      record.block_order = order;
      record.epoch_id = epoch_id;
      record.envelope = envelope;
      if (t == inst.end) {
        const auto first = static_cast<std::size_t>(inst.start - t_new);
        record.test1 = test1_triggers(
            envelope, std::span<const double>(block_losses).subspan(first), inst.order, rate,
            config.test_scale);
      }
      record.test2 = test2_triggers(block_losses, block_estimates, rate, config.test_scale);
      if (observer) observer(record, evaluator);
      result.rounds.push_back(std::move(record));
      const auto& last = result.rounds.back();
      ++t;
      if (last.test1 || last.test2) {
        trigger = last.test1 && last.test2 ? Trigger::both
                                           : (last.test1 ? Trigger::test1 : Trigger::test2);
        break;
      }
    }

    BlockRecord block;
    block.start = t_new;
    block.end = t - 1;
    block.order = order;
    block.scheduled = runner.pool().instances.size();
    block.ended_by = trigger != Trigger::none ? trigger
                                              : (t > horizon ? Trigger::horizon : Trigger::none);
    result.blocks.push_back(block);

    if (trigger != Trigger::none) {
      result.epochs.push_back({epoch_start, t - 1, trigger});
      result.restart_rounds.push_back(t - 1);
      epoch_start = t;
      ++epoch_id;
      m = config.reset_order_on_restart ? 0 : m + 1;
    } else {
      ++m;
    }
  }
  if (epoch_start <= horizon) result.epochs.push_back({epoch_start, horizon, Trigger::horizon});
  result.instances_started = runner.instances_started();
  return result;
}

MasterResult run_single_instance(const MasterConfig& config, const FedEngine& engine,
                                 const RoundProvider& provider, const RoundObserver& observer) {
  config.rate.validate();
  const int horizon = config.rate.horizon;
  MultiScaleRunner runner(engine, config.init,
                          TrackerParams{config.c_tilde, config.rate.log_term(),
                                        config.window > 0 ? config.window
                                                          : 2 * (std::size_t{1} << ceil_log2(horizon))});
  InstancePool pool;
  pool.block_start = 1;
  pool.order = ceil_log2(horizon);
  Instance inst;
  inst.start = 1;
  inst.end = horizon;
  inst.order = -1;
  inst.eta = 1.0 / std::sqrt(static_cast<double>(horizon));
  pool.instances.push_back(std::move(inst));
  runner.set_pool(std::move(pool));

  MasterResult result;
  double envelope = -std::numeric_limits<double>::infinity();
  for (int t = 1; t <= horizon; ++t) {
    const auto evaluator = evaluate(provider, t, engine.loss_model());
    const auto step = runner.run_round(t, evaluator->data(), evaluator);
    envelope = std::max(envelope, step.output.optimistic);
    RoundRecord record = make_record(t, step, runner.pool().instances[step.instance]);
    record.envelope = envelope;
    if (observer) observer(record, evaluator);
    result.rounds.push_back(std::move(record));
  }
  result.epochs.push_back({1, horizon, Trigger::horizon});
  result.blocks.push_back({1, horizon, -1, 1, Trigger::horizon});
  result.instances_started = 1;
  return result;
}

}  // namespace mfl
