#include <doctest.h>

#include <cmath>
#include <random>

#include "mfl/error.hpp"
#include "mfl/regret.hpp"

using namespace mfl;

namespace {

Datapoint dense(std::vector<double> x, int label) {
  Datapoint p;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p.index.push_back(static_cast<std::uint32_t>(i));
    p.value.push_back(x[i]);
  }
  p.label = label;
  return p;
}

std::shared_ptr<const RoundDataset> single_dpu(std::vector<Datapoint> points, int t = 1) {
  auto d = std::make_shared<RoundDataset>();
  d->round = t;
  d->sizes = {points.size()};
  d->total = points.size();
  d->weights = {1.0};
  d->dpus = {std::move(points)};
  return d;
}

LossModel quadratic(double lambda = 0.0, Regularizer reg = Regularizer::l2_squared) {
  LossModel lm;
  lm.kind = LossKind::quadratic_synthetic;
  lm.dimension = 2;
  lm.scale = 4.0;
  lm.lambda = lambda;
  lm.regularizer = reg;
  return lm;
}

std::vector<Datapoint> logistic_points() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Datapoint> pts;
  for (int i = 0; i < 60; ++i) {
    const int y = i % 2 == 0 ? 1 : -1;
    pts.push_back(dense({0.8 * y + z(rng), -0.3 * y + z(rng)}, y));
  }
  return pts;
}

// Independent oracle: nested grid refinement over the unclipped objective.
std::pair<ModelVector, double> grid_minimum(const RoundEvaluator& ev) {
  double cx = 0.0, cy = 0.0, half = 4.0, best = INFINITY;
  for (int level = 0; level < 30; ++level) {
    double bx = cx, by = cy;
    for (int i = -20; i <= 20; ++i) {
      for (int j = -20; j <= 20; ++j) {
        const ModelVector x{cx + half * i / 20.0, cy + half * j / 20.0};
        const double f = ev.global_loss(x);
        if (f < best) {
          best = f;
          bx = x[0];
          by = x[1];
        }
      }
    }
    cx = bx;
    cy = by;
    half /= 4.0;
  }
  return {{cx, cy}, best};
}

}  // namespace

TEST_CASE("quadratic comparator is the shrunk mean") {
  const auto data = single_dpu({dense({1.0, 2.0}, 0), dense({3.0, -2.0}, 0)});
  const RoundEvaluator plain(data, quadratic());
  auto r = comparator(plain);
  CHECK(r.converged);
  CHECK(r.model[0] == doctest::Approx(2.0));
  CHECK(r.model[1] == doctest::Approx(0.0));
  // 1/2 (1 + 4) / 4 averaged over both points
  CHECK(r.loss == doctest::Approx(0.625));

  const RoundEvaluator ridge(data, quadratic(1.0));
  r = comparator(ridge);
  CHECK(r.model[0] == doctest::Approx(1.0));

  const RoundEvaluator lasso(data, quadratic(0.5, Regularizer::l1));
  r = comparator(lasso);
  CHECK(r.model[0] == doctest::Approx(1.5));
  CHECK(r.model[1] == doctest::Approx(0.0));
}

TEST_CASE("logistic comparator matches a grid-search oracle") {
  LossModel lm;
  lm.kind = LossKind::binary_logistic;
  lm.dimension = 2;
  lm.lambda = 0.1;
  lm.scale = 10.0;
  const RoundEvaluator ev(single_dpu(logistic_points()), lm);
  const auto r = comparator(ev);
  CHECK(r.converged);
  const auto [x, f] = grid_minimum(ev);
  CHECK(r.loss == doctest::Approx(f).epsilon(1e-4));
  CHECK(r.loss <= f + 1e-12);
  CHECK(r.model[0] == doctest::Approx(x[0]).epsilon(1e-3));
  CHECK(r.model[1] == doctest::Approx(x[1]).epsilon(1e-3));

  lm.regularizer = Regularizer::l1;
  const RoundEvaluator ev1(single_dpu(logistic_points()), lm);
  const auto r1 = comparator(ev1);
  const auto g1 = grid_minimum(ev1);
  CHECK(r1.loss == doctest::Approx(g1.second).epsilon(1e-4));

  const auto again = comparator(ev);
  CHECK(again.model == r.model);
}

TEST_CASE("softmax comparator is no worse than nearby models") {
  LossModel lm;
  lm.kind = LossKind::softmax_multiclass;
  lm.num_classes = 3;
  lm.dimension = 6;
  lm.lambda = 0.05;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Datapoint> pts;
  for (int i = 0; i < 90; ++i) pts.push_back(dense({z(rng) + (i % 3), z(rng) - (i % 3)}, i % 3));
  const RoundEvaluator ev(single_dpu(std::move(pts)), lm);
  const auto r = comparator(ev);
  CHECK(r.converged);
  for (int k = 0; k < 200; ++k) {
    ModelVector x = r.model;
    for (auto& v : x) v += 0.05 * z(rng);
    CHECK(ev.global_loss(x) >= r.loss - 1e-12);
  }
}

TEST_CASE("drift estimate") {
  const auto lm = quadratic();
  const auto a = single_dpu({dense({1.0, 0.0}, 0)});
  const RoundEvaluator ea(a, lm), eb(single_dpu({dense({1.0, 0.0}, 0)}), lm);
  const auto probes = probe_set(ModelVector{0, 0}, ModelVector{1, 1}, ModelVector{1, 0},
                                ModelVector{1, 0}, 5, 2);
  CHECK(probes.size() == 20);
  CHECK(estimate_drift(eb, &ea, probes) == 0.0);

  // F^(0) = 0: the first round's drift is its largest probe loss
  double top = 0.0;
  for (const auto& p : probes) top = std::max(top, ea.global_loss(p));
  CHECK(estimate_drift(ea, nullptr, probes) == top);

  // a lower bound: never above the drift on any model, and at least the drift on each probe
  const RoundEvaluator ec(single_dpu({dense({-1.0, 0.5}, 0)}), lm);
  const double d = estimate_drift(ec, &ea, probes);
  for (const auto& p : probes) CHECK(d >= std::abs(ec.global_loss(p) - ea.global_loss(p)));
  CHECK(d > 0.0);
}

TEST_CASE("sublinearity fit") {
  const std::vector<double> T{256, 512, 1024, 2048};
  std::vector<double> half, linear;
  for (double t : T) {
    half.push_back(3.0 * std::sqrt(t));
    linear.push_back(0.2 * t);
  }
  CHECK(sublinearity_fit(T, half).slope == doctest::Approx(0.5));
  CHECK(sublinearity_fit(T, linear).slope == doctest::Approx(1.0));

  std::vector<double> with_zero = half;
  with_zero[1] = 0.0;
  const auto fit = sublinearity_fit(T, with_zero);
  CHECK(fit.points_used == 3);
  CHECK(fit.warnings.size() == 1);
  CHECK(fit.slope == doctest::Approx(0.5));

  const std::vector<double> bad{0.0, -1.0, 2.0, 0.0};
  CHECK_THROWS_AS(sublinearity_fit(T, bad), NumericError);
  const std::vector<double> same{256, 256};
  const std::vector<double> two{1.0, 2.0};
  CHECK_THROWS_AS(sublinearity_fit(same, two), NumericError);
}

TEST_CASE("regret trace on a noise-free piecewise quadratic") {
  const auto lm = quadratic();
  auto sched = DriftSchedule::parse("1 shift 1,1 | 9 shift -1,0 | 17 shift 0.5,0.5");
  const RoundSampler sampler(DataSource::synthetic_quadratic({0.0, 0.0}, 0.0), sched, 3,
                             SizeLaw{10, 2}, 4);
  const RoundProvider provider = [&](int t) {
    return std::make_shared<const RoundDataset>(sampler.sample(t));
  };
  MasterConfig config;
  config.rate.horizon = 24;
  config.seed = 2;
  const FedEngine engine(lm, FedSettings{});
  RegretAccumulator inline_acc(ComparatorOptions{}, 9);
  const auto result = run_master(config, engine, provider, inline_acc.observer());
  const auto offline = compute_regret(result, provider, lm, ComparatorOptions{}, 9);
  const auto& trace = inline_acc.trace();

  REQUIRE(trace.instantaneous.size() == 24);
  CHECK(trace.cumulative == offline.cumulative);
  CHECK(trace.delta_hat == offline.delta_hat);

  std::size_t changes = 0;
  for (double d : trace.delta_hat) changes += d > 1e-12 ? 1 : 0;
  CHECK(changes == static_cast<std::size_t>(sched.change_rounds(24)));
  CHECK(changes == 3);

  double sum = 0.0;
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(trace.comparator_loss[i] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(trace.instantaneous[i] >= -1e-6);
    CHECK(trace.loss[i] >= trace.comparator_loss[i] - 1e-6);
    sum += trace.instantaneous[i];
    CHECK(trace.cumulative[i] == doctest::Approx(sum));
  }

  const auto per_epoch = epoch_regrets(trace, result.epochs);
  double total = 0.0;
  for (double r : per_epoch) total += r;
  CHECK(total == doctest::Approx(trace.total()).epsilon(1e-9));
}
