#include "mfl/regret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "mfl/data.hpp"

namespace mfl {

namespace {

struct Term {
  const RoundDataset* data;
  double weight;  // multiplies the round's mean loss
};

// Smooth part of sum_r w_r F_r without the clip; the l1 term is left to the prox.
class Objective {
 public:
  Objective(std::vector<Term> terms, const LossModel& lm) : terms_(std::move(terms)), lm_(lm) {
    data_lm_ = lm;
    data_lm_.lambda = 0.0;
    for (const auto& term : terms_) total_weight_ += term.weight;
  }

  double value_and_gradient(std::span<const double> x, std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    double value = 0.0;
    for (const auto& term : terms_) {
      const double w = term.weight / static_cast<double>(term.data->total);
      for (const auto& dpu : term.data->dpus) {
        for (const auto& p : dpu) {
          value += w * loss(x, p, data_lm_).raw / lm_.scale;
          accumulate_gradient(x, p, data_lm_, w, grad);
        }
      }
    }
    if (lm_.lambda != 0.0 && lm_.regularizer == Regularizer::l2_squared) {
      const double c = total_weight_ * lm_.lambda / lm_.scale;
      for (std::size_t i = 0; i < x.size(); ++i) {
        value += 0.5 * c * x[i] * x[i];
        grad[i] += c * x[i];
      }
    }
    return value;
  }

  double value(std::span<const double> x) const {
    double v = 0.0;
    for (const auto& term : terms_) {
      const double w = term.weight / static_cast<double>(term.data->total);
      for (const auto& dpu : term.data->dpus) {
        for (const auto& p : dpu) v += w * loss(x, p, data_lm_).raw / lm_.scale;
      }
    }
    if (lm_.lambda != 0.0 && lm_.regularizer == Regularizer::l2_squared) {
      v += 0.5 * total_weight_ * lm_.lambda / lm_.scale * dot(x, x);
    }
    return v;
  }

  // Weight of the l1 prox, zero without an l1 term.
  double l1_weight() const {
    return lm_.regularizer == Regularizer::l1 ? total_weight_ * lm_.lambda / lm_.scale : 0.0;
  }

  double nonsmooth(std::span<const double> x) const {
    const double c = l1_weight();
    if (c == 0.0) return 0.0;
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return c * s;
  }

  std::size_t dimension() const { return lm_.dimension; }

 private:
  std::vector<Term> terms_;
  LossModel lm_;
  LossModel data_lm_;
  double total_weight_ = 0.0;
};

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// FISTA with backtracking and function-value restarts.
ComparatorResult solve(const Objective& obj, const ComparatorOptions& options,
                       std::span<const double> warm_start) {
  const std::size_t d = obj.dimension();
  ModelVector x(d, 0.0);
  if (warm_start.size() == d) x.assign(warm_start.begin(), warm_start.end());
  ModelVector y = x, x_next(d), grad(d), grad_probe(d);
  double lipschitz = 1.0;
  double momentum = 1.0;
  double fx = obj.value(x) + obj.nonsmooth(x);

  ComparatorResult out;
  out.converged = false;
  ModelVector best = x;
  double best_value = fx;
  for (int it = 1; it <= options.max_iterations; ++it) {
    out.iterations = it;
    const double fy = obj.value_and_gradient(y, grad);
    const double l1 = obj.l1_weight();
    double step = 0.0;
    double fnext = 0.0;
    for (int tries = 0; tries < 60; ++tries) {
      step = 1.0 / lipschitz;
      double lin = 0.0, quad = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        x_next[i] = soft_threshold(y[i] - step * grad[i], step * l1);
        const double diff = x_next[i] - y[i];
        lin += grad[i] * diff;
        quad += diff * diff;
      }
      fnext = obj.value(x_next);
      if (fnext <= fy + lin + 0.5 * lipschitz * quad + 1e-15 * std::abs(fy)) break;
      lipschitz *= 2.0;
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = (y[i] - x_next[i]) / step;
      residual += r * r;
    }
    residual = std::sqrt(residual);
    out.residual = residual;

    const double total_next = fnext + obj.nonsmooth(x_next);
    if (total_next < best_value) {
      best_value = total_next;
      best = x_next;
    }
    if (residual <= options.tolerance) {
      out.converged = true;
      best = x_next;
      break;
    }
    if (total_next > fx && momentum > 1.0) {
      // restart: drop the momentum and retry from the last accepted point
      momentum = 1.0;
      y = x;
      continue;
    }
    const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const double beta = (momentum - 1.0) / momentum_next;
    for (std::size_t i = 0; i < d; ++i) y[i] = x_next[i] + beta * (x_next[i] - x[i]);
    x.swap(x_next);
    fx = total_next;
    momentum = momentum_next;
    lipschitz *= 0.9;
  }
  out.model = std::move(best);
  return out;
}

// Closed-form minimizer for quadratic rounds: the mean point, shrunk by the regularizer.
ModelVector quadratic_minimizer(std::span<const Term> terms, const LossModel& lm) {
  ModelVector mean(lm.dimension, 0.0);
  double weight = 0.0;
  for (const auto& term : terms) {
    const double w = term.weight / static_cast<double>(term.data->total);
    for (const auto& dpu : term.data->dpus) {
      for (const auto& p : dpu) {
        for (std::size_t j = 0; j < p.index.size(); ++j) mean[p.index[j]] += w * p.value[j];
      }
    }
    weight += term.weight;
  }
  for (double& v : mean) {
    v /= weight;
    if (lm.lambda == 0.0) continue;
    v = lm.regularizer == Regularizer::l2_squared ? v / (1.0 + lm.lambda)
                                                  : soft_threshold(v, lm.lambda);
  }
  return mean;
}

}  // namespace

ComparatorResult comparator(const RoundEvaluator& round, const ComparatorOptions& options,
                            std::span<const double> warm_start) {
  const LossModel& lm = round.loss_model();
  std::vector<Term> terms{{&round.data(), 1.0}};
  ComparatorResult out;
  if (lm.kind == LossKind::quadratic_synthetic) {
    out.model = quadratic_minimizer(terms, lm);
  } else {
    out = solve(Objective(terms, lm), options, warm_start);
  }
  out.loss = round.global_loss(out.model);
  return out;
}

ComparatorResult static_comparator(std::span<const std::shared_ptr<const RoundEvaluator>> rounds,
                                   const ComparatorOptions& options) {
  if (rounds.empty()) throw ConfigError("static comparator needs at least one round");
  const LossModel& lm = rounds.front()->loss_model();
  std::vector<Term> terms;
  for (const auto& r : rounds) terms.push_back({&r->data(), 1.0});
  ComparatorResult out;
  if (lm.kind == LossKind::quadratic_synthetic) {
    out.model = quadratic_minimizer(terms, lm);
  } else {
    out = solve(Objective(terms, lm), options, {});
  }
  out.loss = 0.0;
  for (const auto& r : rounds) out.loss += r->global_loss(out.model);
  return out;
}

std::vector<ModelVector> probe_set(std::span<const double> model, std::span<const double> prev_model,
                                   std::span<const double> comp, std::span<const double> prev_comp,
                                   std::uint64_t seed, int t, std::size_t random_count) {
  std::vector<ModelVector> probes;
  for (auto v : {model, prev_model, comp, prev_comp}) {
    if (!v.empty()) probes.emplace_back(v.begin(), v.end());
  }
  const std::size_t d = model.size();
  auto rng = make_stream(seed, static_cast<std::uint64_t>(t), 0, 0x9B0BE);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < random_count; ++k) {
    ModelVector p(d);
    for (double& v : p) v = normal(rng);
    probes.push_back(std::move(p));
  }
  return probes;
}

double estimate_drift(const RoundEvaluator& current, const RoundEvaluator* previous,
                      std::span<const ModelVector> probes) {
  double best = 0.0;
  for (const auto& p : probes) {
    const double prev = previous ? previous->global_loss(p) : 0.0;
    best = std::max(best, std::abs(current.global_loss(p) - prev));
  }
  return best;
}

SublinearityFit sublinearity_fit(std::span<const double> horizons, std::span<const double> regrets) {
  if (horizons.size() != regrets.size()) throw ConfigError("fit needs one regret per horizon");
  SublinearityFit fit;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (!(regrets[i] > 0.0) || !(horizons[i] > 0.0)) {
      fit.warnings.push_back("dropped horizon " + std::to_string(horizons[i]) +
                             " with nonpositive regret " + std::to_string(regrets[i]));
      continue;
    }
    xs.push_back(std::log(horizons[i]));
    ys.push_back(std::log(regrets[i]));
  }
  if (xs.size() < 2) throw NumericError("sublinearity fit needs two horizons with positive regret");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw NumericError("sublinearity fit needs distinct horizons");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.points_used = xs.size();
  return fit;
}

RegretAccumulator::RegretAccumulator(ComparatorOptions options, std::uint64_t probe_seed,
                                     std::size_t random_probes)
    : options_(options), probe_seed_(probe_seed), random_probes_(random_probes) {}

void RegretAccumulator::observe(const RoundRecord& record,
                                const std::shared_ptr<const RoundEvaluator>& round) {
  auto comp = comparator(*round, options_, prev_comp_);
  if (!comp.converged) ++trace_.comparator_failures;
  if (record.loss < comp.loss) {
    // the solver missed a point the run itself reached
    ++trace_.comparator_replaced;
    comp.model = record.model;
    comp.loss = record.loss;
  }
  const double inst = record.loss - comp.loss;
  trace_.loss.push_back(record.loss);
  trace_.comparator_loss.push_back(comp.loss);
  trace_.instantaneous.push_back(inst);
  trace_.cumulative.push_back(trace_.total() + inst);

  const auto probes = probe_set(record.model, prev_model_, comp.model, prev_comp_, probe_seed_,
                                record.t, random_probes_);
  trace_.delta_hat.push_back(estimate_drift(*round, prev_round_.get(), probes));

  prev_round_ = round;
  prev_model_ = record.model;
  prev_comp_ = std::move(comp.model);
}

RoundObserver RegretAccumulator::observer() {
  return [this](const RoundRecord& record, const std::shared_ptr<const RoundEvaluator>& round) {
    observe(record, round);
  };
}

RegretTrace compute_regret(const MasterResult& result, const RoundProvider& provider,
                           const LossModel& lm, const ComparatorOptions& options,
                           std::uint64_t probe_seed) {
  RegretAccumulator acc(options, probe_seed);
  for (const auto& record : result.rounds) {
    auto data = provider(record.t);
    acc.observe(record, std::make_shared<const RoundEvaluator>(std::move(data), lm));
  }
  return std::move(acc.trace());
}

std::vector<double> epoch_regrets(const RegretTrace& trace, std::span<const EpochRecord> epochs) {
  std::vector<double> out;
  for (const auto& e : epochs) {
    if (e.start < 1 || static_cast<std::size_t>(e.end) > trace.instantaneous.size() ||
        e.end < e.start) {
      throw ConfigError("epoch outside the regret trace");
    }
    double s = 0.0;
    for (int t = e.start; t <= e.end; ++t) s += trace.instantaneous[static_cast<std::size_t>(t - 1)];
    out.push_back(s);
  }
  return out;
}

}  // namespace mfl
