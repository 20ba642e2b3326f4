#include "mfl/multiscale.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mfl {

InstancePool schedule_block(int block_start, int m, const RateFn& rho, std::mt19937_64& rng) {
  if (m < 0 || m > 30) throw ConfigError("block order out of range");
  InstancePool pool;
  pool.block_start = block_start;
  pool.order = m;
  const int length = 1 << m;
  const double top = rho(static_cast<double>(length));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int offset = 0; offset < length; ++offset) {
    for (int k = m; k >= 0; --k) {
      const int span = 1 << k;
      if (offset % span != 0) continue;
      bool include = k == m;
      if (!include) {
        const double p = top / rho(static_cast<double>(span));
        include = unit(rng) < p;
      }
      if (!include) continue;
      Instance inst;
      inst.start = block_start + offset;
      inst.end = inst.start + span - 1;
      inst.order = k;
      inst.eta = 1.0 / std::sqrt(static_cast<double>(span));
      pool.instances.push_back(std::move(inst));
    }
  }
  return pool;
}

std::size_t pick_active(const InstancePool& pool, int t) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < pool.instances.size(); ++i) {
    const auto& a = pool.instances[i];
    if (!a.covers(t)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = pool.instances[*best];
    if (a.end != b.end) {
      if (a.end < b.end) best = i;
    } else if (a.order != b.order) {
      if (a.order < b.order) best = i;
    } else if (a.start > b.start) {
      best = i;
    }
  }
  if (!best) throw std::logic_error("no scheduled instance covers round " + std::to_string(t));
  return *best;
}

MultiScaleRunner::MultiScaleRunner(const FedEngine& engine, InitMode init, TrackerParams params)
    : engine_(engine), init_(init), params_(params) {}

void MultiScaleRunner::start_block(int t, int m, const RateFn& rho, std::mt19937_64& rng) {
  set_pool(schedule_block(t, m, rho, rng));
}

void MultiScaleRunner::set_pool(InstancePool pool) {
  pool_ = std::move(pool);
  active_.reset();
}

void MultiScaleRunner::activate(Instance& inst) {
  const std::size_t d = engine_.loss_model().dimension;
  if (init_ == InitMode::warm && last_model_.size() == d) {
    inst.model = last_model_;
  } else {
    inst.model.assign(d, 0.0);
  }
  const std::size_t window =
      params_.window > 0 ? params_.window : 2 * (std::size_t{1} << pool_.order);
  inst.tracker = OptimisticTracker(params_.c_tilde, params_.log_term, window);
  ++started_;
}

MultiScaleRunner::Step MultiScaleRunner::run_round(int t, const RoundDataset& data,
                                                   std::shared_ptr<const RoundEvaluator> evaluator) {
  const std::size_t idx = pick_active(pool_, t);
  if (active_ && *active_ != idx) {
    auto& prev = pool_.instances[*active_];
    if (prev.status == InstanceStatus::active) prev.status = InstanceStatus::paused;
  }
  auto& inst = pool_.instances[idx];
  if (inst.status == InstanceStatus::scheduled) activate(inst);
  inst.status = InstanceStatus::active;
  active_ = idx;

  Step step;
  step.instance = idx;
  step.output = engine_.run_round(inst.model, inst.eta, data, std::move(evaluator), inst.tracker);
  inst.model = step.output.model;
  last_model_ = inst.model;
  if (t == inst.end) inst.status = InstanceStatus::finished;
  return step;
}

}  // namespace mfl
