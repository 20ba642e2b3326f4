#include <doctest.h>

#include <cmath>

#include "mfl/multiscale.hpp"

using namespace mfl;

namespace {

const RateFn inv_sqrt = [](double t) { return 1.0 / std::sqrt(t); };

Instance make(int s, int e) {
  Instance a;
  a.start = s;
  a.end = e;
  a.order = static_cast<int>(std::log2(e - s + 1));
  a.eta = 1.0 / std::sqrt(static_cast<double>(e - s + 1));
  return a;
}

LossModel quadratic() {
  LossModel lm;
  lm.kind = LossKind::quadratic_synthetic;
  lm.dimension = 2;
  lm.scale = 4.0;
  lm.lipschitz = 100.0;
  return lm;
}

std::shared_ptr<const RoundDataset> round_at(int t) {
  static const auto src = DataSource::synthetic_quadratic({1.0, -0.5}, 0.1);
  return std::make_shared<const RoundDataset>(sample_round(src, {}, t, 3, SizeLaw{40, 5}, 17));
}

}  // namespace

TEST_CASE("top-order instance is always scheduled and spans the block") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pool = schedule_block(17, 5, inv_sqrt, rng);
    int tops = 0;
    for (const auto& a : pool.instances) {
      if (a.order == 5) {
        ++tops;
        CHECK(a.start == 17);
        CHECK(a.end == 48);
      }
      CHECK((a.start - 17) % (1 << a.order) == 0);
      CHECK(a.end - a.start + 1 == (1 << a.order));
      CHECK(a.eta == doctest::Approx(1.0 / std::sqrt(static_cast<double>(1 << a.order))));
    }
    CHECK(tops == 1);
    for (int t = 17; t <= 48; ++t) CHECK_NOTHROW(pick_active(pool, t));
  }
}

TEST_CASE("inclusion frequencies follow rho(2^m) / rho(2^k)") {
  std::mt19937_64 rng(2);
  const int trials = 10000;
  std::vector<double> count(5, 0.0);
  for (int trial = 0; trial < trials; ++trial) {
    for (const auto& a : schedule_block(1, 4, inv_sqrt, rng).instances) count[static_cast<std::size_t>(a.order)] += 1;
  }
  // order k has 2^(4-k) slots, each kept with probability 2^(k/2) / 4
  for (int k = 0; k <= 4; ++k) {
    const double slots = std::ldexp(1.0, 4 - k);
    const double p = count[static_cast<std::size_t>(k)] / (slots * trials);
    CHECK(p == doctest::Approx(std::pow(2.0, k / 2.0) / 4.0).epsilon(0.05));
  }
  CHECK(count[0] / trials == doctest::Approx(4.0).epsilon(0.1));
  CHECK(count[2] / (4.0 * trials) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("schedules are deterministic given the seed") {
  std::mt19937_64 a(9), b(9);
  const auto pa = schedule_block(1, 6, inv_sqrt, a);
  const auto pb = schedule_block(1, 6, inv_sqrt, b);
  REQUIRE(pa.instances.size() == pb.instances.size());
  for (std::size_t i = 0; i < pa.instances.size(); ++i) {
    CHECK(pa.instances[i].start == pb.instances[i].start);
    CHECK(pa.instances[i].order == pb.instances[i].order);
  }
}

TEST_CASE("shortest remaining run length") {
  InstancePool pool;
  pool.instances = {make(0, 15), make(0, 3)};
  CHECK(pick_active(pool, 2) == 1);
  CHECK(pick_active(pool, 4) == 0);

  InstancePool single;
  single.instances = {make(8, 15)};
  CHECK(pick_active(single, 9) == 0);

  InstancePool nested;
  nested.instances = {make(4, 7), make(4, 5)};
  CHECK(pick_active(nested, 4) == 1);

  // equal ends: smaller order wins, then the later start
  InstancePool ties;
  ties.instances = {make(4, 7), make(6, 7), make(7, 7)};
  CHECK(pick_active(ties, 7) == 2);

  CHECK_THROWS_AS(pick_active(single, 3), std::logic_error);
}

TEST_CASE("runner pauses, resumes and finishes instances") {
  const auto lm = quadratic();
  const FedEngine engine(lm, FedSettings{});
  MultiScaleRunner runner(engine, InitMode::fresh, TrackerParams{1.0, 1.0, 0});
  InstancePool pool;
  pool.order = 2;
  pool.block_start = 1;
  pool.instances = {make(1, 4), make(2, 2), make(3, 3)};
  runner.set_pool(pool);

  auto run = [&](int t) {
    const auto data = round_at(t);
    return runner.run_round(t, *data, std::make_shared<const RoundEvaluator>(data, lm));
  };
  const auto s1 = run(1);
  CHECK(s1.instance == 0);
  const ModelVector after_first = runner.pool().instances[0].model;

  const auto s2 = run(2);
  CHECK(s2.instance == 1);
  CHECK(runner.pool().instances[0].status == InstanceStatus::paused);
  CHECK(runner.pool().instances[1].status == InstanceStatus::finished);

  // consecutive order-0 instances both start from scratch
  const auto s3 = run(3);
  CHECK(s3.instance == 2);
  const auto data3 = round_at(3);
  OptimisticTracker scratch(1.0, 1.0, 0);
  const auto fresh = engine.run_round(ModelVector{0.0, 0.0}, 1.0, *data3,
                                      std::make_shared<const RoundEvaluator>(data3, lm), scratch);
  CHECK(s3.output.model == fresh.model);

  // the long instance resumes from its own model
  const auto data4 = round_at(4);
  OptimisticTracker resumed(1.0, 1.0, 0);
  const auto expected = engine.run_round(after_first, 0.5, *data4,
                                         std::make_shared<const RoundEvaluator>(data4, lm), resumed);
  const auto s4 = run(4);
  CHECK(s4.instance == 0);
  CHECK(s4.output.model == expected.model);
  CHECK(runner.pool().instances[0].status == InstanceStatus::finished);
  CHECK(runner.instances_started() == 3);
}

TEST_CASE("warm start copies the last model") {
  const auto lm = quadratic();
  const FedEngine engine(lm, FedSettings{});
  MultiScaleRunner runner(engine, InitMode::warm, TrackerParams{1.0, 1.0, 0});
  InstancePool pool;
  pool.instances = {make(1, 1), make(2, 2)};
  runner.set_pool(pool);
  const auto d1 = round_at(1);
  const auto first = runner.run_round(1, *d1, std::make_shared<const RoundEvaluator>(d1, lm));
  const auto d2 = round_at(2);
  OptimisticTracker tracker(1.0, 1.0, 0);
  const auto expected = engine.run_round(first.output.model, 1.0, *d2,
                                         std::make_shared<const RoundEvaluator>(d2, lm), tracker);
  CHECK(runner.run_round(2, *d2, std::make_shared<const RoundEvaluator>(d2, lm)).output.model == expected.model);
}

TEST_CASE("one instance on a stationary quadratic contracts toward the optimum") {
  const auto lm = quadratic();
  const FedEngine engine(lm, FedSettings{});
  MultiScaleRunner runner(engine, InitMode::fresh, TrackerParams{1.0, 1.0, 0});
  InstancePool pool;
  pool.instances = {make(1, 64)};
  runner.set_pool(pool);
  // noise-free data: gradient descent with step eta / B contracts the gap by (1 - eta / B)
  const auto src = DataSource::synthetic_quadratic({1.0, -0.5}, 0.0);
  double prev = 1.0;
  for (int t = 1; t <= 64; ++t) {
    const auto data = std::make_shared<const RoundDataset>(sample_round(src, {}, t, 2, SizeLaw{5, 1}, 3));
    const auto step = runner.run_round(t, *data, std::make_shared<const RoundEvaluator>(data, lm));
    const double gap = std::pow(1.0 - 0.125 / 4.0, t);
    CHECK(step.output.model[0] == doctest::Approx(1.0 - gap).epsilon(1e-12));
    CHECK(step.output.global_loss <= prev);
    prev = step.output.global_loss;
  }
}
