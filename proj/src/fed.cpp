#include "mfl/fed.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace mfl {

namespace {

constexpr std::uint64_t kMinibatchStream = 3;

void check_finite(std::span<const double> x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + " produced a non-finite value");
  }
}

}  // namespace

ModelVector local_update_fedavg(std::span<const double> x_prev, std::span<const double> grad,
                                double eta) {
  if (x_prev.size() != grad.size()) throw ConfigError("gradient dimension mismatch");
  if (!(eta > 0.0)) throw ConfigError("learning rate must be positive");
  ModelVector x(x_prev.begin(), x_prev.end());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= eta * grad[i];
  return x;
}

ModelVector local_update_fedomd(std::span<const double> x_prev, std::span<const double> grad,
                                double eta, const BregmanDivergence& bd) {
  if (x_prev.size() != grad.size()) throw ConfigError("gradient dimension mismatch");
  if (!(eta > 0.0)) throw ConfigError("learning rate must be positive");
  bd.validate(x_prev.size());
  ModelVector x(x_prev.begin(), x_prev.end());
  if (bd.kind == BregmanKind::squared_euclidean) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= eta * grad[i];
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= eta * grad[i] / bd.weights[i];
  }
  check_finite(x, "mirror descent step");
  return x;
}

ModelVector aggregate(std::span<const ModelVector> models, std::span<const double> weights) {
  if (models.empty() || models.size() != weights.size()) {
    throw ConfigError("aggregate needs one weight per model");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ConfigError("aggregation weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("aggregation weights sum to " + std::to_string(total) + ", expected 1");
  }
  const std::size_t d = models.front().size();
  ModelVector x(d, 0.0);
  for (std::size_t n = 0; n < models.size(); ++n) {
    if (models[n].size() != d) throw ConfigError("aggregate: model dimension mismatch");
    for (std::size_t i = 0; i < d; ++i) x[i] += weights[n] * models[n][i];
  }
  return x;
}

ModelVector full_gradient(std::span<const Datapoint> data, std::span<const double> model,
                          const LossModel& lm) {
  if (data.empty()) throw ConfigError("empty local dataset");
  ModelVector g(model.size(), 0.0);
  for (const auto& p : data) accumulate_gradient(model, p, lm, 1.0, g);
  const double inv = 1.0 / static_cast<double>(data.size());
  for (double& v : g) v *= inv;
  return g;
}

ModelVector minibatch_gradient(std::span<const Datapoint> data, std::span<const double> model,
                               const LossModel& lm, double gamma, std::mt19937_64& rng) {
  if (data.empty()) throw ConfigError("empty local dataset");
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("minibatch fraction must lie in (0, 1]");
  if (gamma == 1.0) return full_gradient(data, model, lm);
  const auto batch = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(data.size()) - 1e-9)));
  // partial Fisher-Yates over local indices
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  ModelVector g(model.size(), 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng);
    std::swap(idx[i], idx[j]);
    accumulate_gradient(model, data[idx[i]], lm, 1.0, g);
  }
  const double inv = 1.0 / static_cast<double>(batch);
  for (double& v : g) v *= inv;
  return g;
}

RoundEvaluator::RoundEvaluator(std::shared_ptr<const RoundDataset> data, const LossModel& lm)
    : data_(std::move(data)), lm_(lm) {
  if (!data_ || data_->total == 0) throw ConfigError("round evaluator needs a non-empty round");
  quadratic_ = lm_.kind == LossKind::quadratic_synthetic;
  if (!quadratic_) return;
  const std::size_t d = lm_.dimension;
  sum_.assign(d, 0.0);
  for (const auto& dpu : data_->dpus) {
    for (const auto& p : dpu) {
      for (std::size_t j = 0; j < p.index.size(); ++j) {
        if (p.index[j] >= d) throw ConfigError("round point exceeds model dimension");
        sum_[p.index[j]] += p.value[j];
      }
      sum_sq_ += p.squared_norm();
    }
  }
  center_ = sum_;
  for (double& v : center_) v /= static_cast<double>(data_->total);
  for (const auto& dpu : data_->dpus) {
    for (const auto& p : dpu) {
      double s = 0.0;
      std::size_t j = 0;
      for (std::size_t i = 0; i < d; ++i) {
        double diff = -center_[i];
        if (j < p.index.size() && p.index[j] == i) diff += p.value[j++];
        s += diff * diff;
      }
      radius_ = std::max(radius_, std::sqrt(s));
    }
  }
}

bool RoundEvaluator::fast_path_ok(std::span<const double> model) const {
  if (!quadratic_) return false;
  double dist = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double diff = model[i] - center_[i];
    dist += diff * diff;
  }
  const double reach = std::sqrt(dist) + radius_;
  double reg = 0.0;
  if (lm_.lambda != 0.0) {
    for (double v : model) reg += lm_.regularizer == Regularizer::l2_squared ? v * v : std::abs(v);
    reg *= lm_.regularizer == Regularizer::l2_squared ? 0.5 * lm_.lambda : lm_.lambda;
  }
  // margin keeps rounding from hiding a point that sits exactly on the clip
  return (0.5 * reach * reach + reg) / lm_.scale < 1.0 - 1e-9;
}

double RoundEvaluator::fast_mean_scaled(std::span<const double> model) const {
  const double n = static_cast<double>(data_->total);
  double xx = 0.0, xs = 0.0, reg = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    xx += model[i] * model[i];
    xs += model[i] * sum_[i];
  }
  if (lm_.lambda != 0.0) {
    if (lm_.regularizer == Regularizer::l2_squared) {
      reg = 0.5 * lm_.lambda * xx;
    } else {
      for (double v : model) reg += std::abs(v);
      reg *= lm_.lambda;
    }
  }
  const double raw = 0.5 * xx - xs / n + 0.5 * sum_sq_ / n + reg;
  return std::max(0.0, raw) / lm_.scale;
}

double RoundEvaluator::global_loss(std::span<const double> model) const {
  if (model.size() != lm_.dimension) throw ConfigError("evaluator: model dimension mismatch");
  if (fast_path_ok(model)) return fast_mean_scaled(model);
  return dpu_losses(model).global;
}

RoundEvaluator::DpuLosses RoundEvaluator::dpu_losses(std::span<const double> model) const {
  DpuLosses out;
  out.per_dpu.resize(data_->dpus.size(), 0.0);
  for (std::size_t n = 0; n < data_->dpus.size(); ++n) {
    const auto& dpu = data_->dpus[n];
    double s = 0.0;
    for (const auto& p : dpu) {
      const auto v = loss(model, p, lm_);
      s += v.scaled;
      out.clipped += v.clipped ? 1 : 0;
    }
    out.per_dpu[n] = dpu.empty() ? 0.0 : s / static_cast<double>(dpu.size());
    out.global += data_->weights[n] * out.per_dpu[n];
  }
  return out;
}

OptimisticTracker::OptimisticTracker(double c_tilde, double log_term, std::size_t window)
    : c_tilde_(c_tilde), log_term_(log_term), window_(window) {
  if (c_tilde < 0.0) throw ConfigError("concentration constant must be non-negative");
  if (log_term < 0.0) throw ConfigError("log(T/delta) must be non-negative");
}

void OptimisticTracker::record(std::shared_ptr<const RoundEvaluator> round) {
  cumulative_ += static_cast<double>(round->total());
  retained_.push_back(std::move(round));
  if (window_ > 0 && retained_.size() > window_) {
    retained_.pop_front();
    ++dropped_;
  }
}

double OptimisticTracker::concentration() const {
  if (cumulative_ <= 0.0) return 0.0;
  return c_tilde_ * std::sqrt(log_term_ / cumulative_);
}

double OptimisticTracker::estimate(std::span<const double> model) const {
  if (retained_.empty()) throw std::logic_error("optimistic estimate needs at least one round");
  double s = 0.0;
  for (const auto& r : retained_) s += r->global_loss(model);
  return s / static_cast<double>(retained_.size()) - concentration();
}

double optimistic_estimate(const OptimisticTracker& tracker, std::span<const double> model) {
  return tracker.estimate(model);
}

double FedSettings::gamma(std::size_t dpu) const {
  if (mode == GradientMode::full_batch || gammas.empty()) return 1.0;
  if (gammas.size() == 1) return gammas.front();
  if (dpu >= gammas.size()) throw ConfigError("no minibatch fraction for DPU " + std::to_string(dpu));
  return gammas[dpu];
}

FedEngine::FedEngine(LossModel lm, FedSettings settings)
    : lm_(std::move(lm)), settings_(std::move(settings)) {
  lm_.validate();
  if (settings_.algo == Algo::fedomd) settings_.bregman.validate(lm_.dimension);
  if (settings_.workers == 0) settings_.workers = 1;
}

void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t threads = std::min<std::size_t>(workers, count);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < count; i += threads) fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

FedRoundOutput FedEngine::run_round(std::span<const double> x_prev, double eta,
                                    const RoundDataset& data,
                                    std::shared_ptr<const RoundEvaluator> evaluator,
                                    OptimisticTracker& tracker) const {
  if (x_prev.size() != lm_.dimension) throw ConfigError("model dimension mismatch");
  const std::size_t n_dpus = data.dpus.size();
  std::vector<ModelVector> local(n_dpus);
  std::vector<std::size_t> correct(n_dpus, 0);
  std::vector<std::size_t> violations(n_dpus, 0);

  parallel_for(n_dpus, settings_.workers, [&](std::size_t n) {
    const auto& points = data.dpus[n];
    if (lm_.is_classification()) {
      for (const auto& p : points) correct[n] += predict(x_prev, p, lm_) == p.label ? 1 : 0;
    }
    ModelVector grad;
    const double gamma = settings_.gamma(n);
    if (settings_.mode == GradientMode::minibatch && gamma < 1.0) {
      auto rng = make_stream(settings_.seed, static_cast<std::uint64_t>(data.round), n, kMinibatchStream);
      grad = minibatch_gradient(points, x_prev, lm_, gamma, rng);
    } else {
      grad = full_gradient(points, x_prev, lm_);
    }
    if (norm(grad) > lm_.lipschitz * (1.0 + 1e-12)) violations[n] = 1;
    local[n] = settings_.algo == Algo::fedavg
                   ? local_update_fedavg(x_prev, grad, eta)
                   : local_update_fedomd(x_prev, grad, eta, settings_.bregman);
  });

  FedRoundOutput out;
  out.model = aggregate(local, data.weights);
  check_finite(out.model, "aggregation");

  const auto losses = evaluator->dpu_losses(out.model);
  out.dpu_losses = losses.per_dpu;
  out.global_loss = losses.global;
  out.clip_events = losses.clipped;
  for (std::size_t n = 0; n < n_dpus; ++n) {
    out.correct += correct[n];
    out.lipschitz_violations += violations[n];
  }
  out.evaluated = lm_.is_classification() ? data.total : 0;

  tracker.record(std::move(evaluator));
  out.optimistic = tracker.estimate(out.model);
  out.degraded_estimate = tracker.degraded();
  return out;
}

}  // namespace mfl
