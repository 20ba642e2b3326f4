#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mfl/error.hpp"
#include "mfl/master.hpp"

using namespace mfl;

namespace {

struct Scenario {
  LossModel lm;
  RoundSampler sampler;
  MasterConfig config;

  RoundProvider provider() const {
    return [this](int t) { return std::make_shared<const RoundDataset>(sampler.sample(t)); };
  }
};

Scenario quadratic_scenario(int horizon, const std::string& drift, std::size_t n_dpus, SizeLaw law,
                            double scale, double test_scale) {
  LossModel lm;
  lm.kind = LossKind::quadratic_synthetic;
  lm.dimension = 2;
  lm.scale = scale;
  lm.lipschitz = 1e6;
  auto schedule = DriftSchedule::parse(drift);
  RoundSampler sampler(DataSource::synthetic_quadratic({0.0, 0.0}, 0.2), schedule, n_dpus, law, 5);
  MasterConfig config;
  config.rate.horizon = horizon;
  config.test_scale = test_scale;
  config.seed = 11;
  return {lm, std::move(sampler), config};
}

void check_partition(const MasterResult& r, int horizon) {
  REQUIRE(!r.epochs.empty());
  CHECK(r.epochs.front().start == 1);
  CHECK(r.epochs.back().end == horizon);
  for (std::size_t i = 1; i < r.epochs.size(); ++i) CHECK(r.epochs[i].start == r.epochs[i - 1].end + 1);
  REQUIRE(!r.blocks.empty());
  CHECK(r.blocks.front().start == 1);
  CHECK(r.blocks.back().end == horizon);
  for (std::size_t i = 1; i < r.blocks.size(); ++i) CHECK(r.blocks[i].start == r.blocks[i - 1].end + 1);
  REQUIRE(r.rounds.size() == static_cast<std::size_t>(horizon));
  for (int t = 1; t <= horizon; ++t) CHECK(r.rounds[static_cast<std::size_t>(t - 1)].t == t);
}

}  // namespace

TEST_CASE("rate schedule values") {
  RateSchedule tiny;
  tiny.horizon = 2;
  tiny.delta = 1.0;
  CHECK(tiny.rho_hat(1) == doctest::Approx(8.31776616671934).epsilon(1e-12));

  RateSchedule r;
  r.horizon = 1024;
  r.delta = 0.1;
  CHECK(r.cumulative(16) == doctest::Approx(5.0));
  CHECK(r.rho(16) == doctest::Approx(5.0 / 16.0));
  CHECK(r.rho_hat(16) == doctest::Approx(190.452423533490912).epsilon(1e-12));
  CHECK(r.cumulative(1) == doctest::Approx(1.0));

  double prev = r.rho_hat(1);
  for (int t = 2; t <= 2000; ++t) {
    CHECK(r.rho_hat(t) <= prev + 1e-12);
    prev = r.rho_hat(t);
  }
  CHECK_THROWS_AS(r.rho_hat(0), std::invalid_argument);
  CHECK_THROWS_AS(r.rho_hat(0.5), std::invalid_argument);

  RateSchedule bad = r;
  bad.delta = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = r;
  bad.c1 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = r;
  bad.horizon = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("test thresholds") {
  RateSchedule r;
  r.horizon = 1024;
  const std::vector<double> zeros(4, 0.0);
  // 9 * rhohat(4) is far above the [0, 1] loss range at the default scale
  CHECK_FALSE(test1_triggers(1.0, zeros, 2, r));
  const double thr = 9.0 * r.rho_hat(4);
  CHECK(test1_triggers(1.0, zeros, 2, r, 1.0 / thr));
  CHECK_FALSE(test1_triggers(1.0 - 1e-9, zeros, 2, r, 1.0 / thr));

  // equal sequences never fire
  const std::vector<double> f{0.3, 0.4, 0.5};
  CHECK_FALSE(test2_triggers(f, f, r, 1e-9));
  CHECK_THROWS_AS(test2_triggers(f, zeros, r), ConfigError);

  // gap growing slowly: fires at the first t where the running mean crosses the threshold
  const double scale = 1e-3;
  std::vector<double> losses, estimates;
  int fired = 0;
  for (int t = 1; t <= 200 && fired == 0; ++t) {
    losses.push_back(0.01 * t);
    estimates.push_back(0.0);
    if (test2_triggers(losses, estimates, r, scale)) fired = t;
  }
  REQUIRE(fired > 0);
  const double mean = 0.01 * (fired + 1) / 2.0;
  CHECK(mean >= scale * 3.0 * r.rho_hat(fired));
  const double before = 0.01 * fired / 2.0;
  CHECK(before < scale * 3.0 * r.rho_hat(fired - 1));

  CHECK(to_string(Trigger::both) == "test1+test2");
  CHECK(to_string(Trigger::test2) == "test2");
}

TEST_CASE("single round horizon") {
  auto s = quadratic_scenario(1, "", 3, SizeLaw{20, 2}, 1.0, 1.0);
  const FedEngine engine(s.lm, FedSettings{});
  const auto r = run_master(s.config, engine, s.provider());
  REQUIRE(r.rounds.size() == 1);
  CHECK(r.rounds[0].block_order == 0);
  CHECK(r.rounds[0].inst_start == 1);
  CHECK(r.rounds[0].inst_end == 1);
  REQUIRE(r.epochs.size() == 1);
  CHECK(r.epochs[0].ended_by == Trigger::horizon);
  CHECK(r.restart_rounds.empty());
}

TEST_CASE("stationary data never restarts at default thresholds") {
  auto s = quadratic_scenario(128, "", 5, SizeLaw{50, 10}, 1.0, 1.0);
  const FedEngine engine(s.lm, FedSettings{});
  const auto r = run_master(s.config, engine, s.provider());
  check_partition(r, 128);
  CHECK(r.restart_rounds.empty());
  CHECK(r.epochs.size() == 1);
  // blocks grow 1, 2, 4, ... and the last one is capped by the rounds left
  CHECK(r.blocks[0].order == 0);
  CHECK(r.blocks[1].order == 1);
  CHECK(r.blocks[2].order == 2);
  for (const auto& b : r.blocks) CHECK(b.end - b.start + 1 <= (1 << b.order));
  CHECK(r.instances_started >= r.blocks.size());
}

TEST_CASE("envelope is the running max of the estimates within a block") {
  auto s = quadratic_scenario(64, "", 4, SizeLaw{30, 5}, 1.0, 1.0);
  const FedEngine engine(s.lm, FedSettings{});
  const auto r = run_master(s.config, engine, s.provider());
  for (const auto& b : r.blocks) {
    double running = -INFINITY;
    for (int t = b.start; t <= b.end; ++t) {
      const auto& rec = r.rounds[static_cast<std::size_t>(t - 1)];
      running = std::max(running, rec.optimistic);
      CHECK(rec.envelope == running);
      CHECK(rec.inst_start <= t);
      CHECK(t <= rec.inst_end);
    }
  }
}

TEST_CASE("abrupt comparator shift ends the epoch after the change") {
  auto s = quadratic_scenario(256, "64 shift -2.1,-2.1", 20, SizeLaw{1000, 200}, 8.0, 1e-4);
  s.config.window = 32;
  s.config.init = InitMode::warm;
  s.config.reset_order_on_restart = true;
  const FedEngine engine(s.lm, FedSettings{});
  const auto r = run_master(s.config, engine, s.provider());
  check_partition(r, 256);
  REQUIRE_FALSE(r.restart_rounds.empty());
  CHECK(r.restart_rounds.front() >= 64);
  CHECK(r.restart_rounds.front() <= 128);
  CHECK(r.epochs.size() == r.restart_rounds.size() + 1);
  for (std::size_t i = 0; i < r.restart_rounds.size(); ++i) CHECK(r.epochs[i].end == r.restart_rounds[i]);

  // with the reset flag the block after a trigger starts again at order 0
  for (std::size_t i = 0; i + 1 < r.blocks.size(); ++i) {
    if (r.blocks[i].ended_by != Trigger::none) CHECK(r.blocks[i + 1].order == 0);
  }
  for (const auto& rec : r.rounds) {
    if (rec.t <= r.restart_rounds.front()) CHECK(rec.epoch_id == 0);
    else CHECK(rec.epoch_id >= 1);
  }
}

TEST_CASE("without the reset flag the order keeps growing across a trigger") {
  auto s = quadratic_scenario(256, "64 shift -2.1,-2.1", 20, SizeLaw{1000, 200}, 8.0, 1e-4);
  s.config.window = 32;
  s.config.init = InitMode::warm;
  const FedEngine engine(s.lm, FedSettings{});
  const auto r = run_master(s.config, engine, s.provider());
  check_partition(r, 256);
  REQUIRE_FALSE(r.restart_rounds.empty());
  for (std::size_t i = 0; i + 1 < r.blocks.size(); ++i) {
    const int left = 256 - r.blocks[i + 1].start + 1;
    const int cap = static_cast<int>(std::ceil(std::log2(left)));
    CHECK(r.blocks[i + 1].order == std::min(r.blocks[i].order + 1, cap));
  }
}

TEST_CASE("baseline runs one instance with no tests") {
  auto s = quadratic_scenario(40, "20 shift -2.1,-2.1", 4, SizeLaw{50, 5}, 8.0, 1e-9);
  const FedEngine engine(s.lm, FedSettings{});
  const auto r = run_single_instance(s.config, engine, s.provider());
  CHECK(r.restart_rounds.empty());
  REQUIRE(r.epochs.size() == 1);
  CHECK(r.instances_started == 1);
  for (const auto& rec : r.rounds) {
    CHECK(rec.inst_start == 1);
    CHECK(rec.inst_end == 40);
    CHECK_FALSE(rec.test1);
    CHECK_FALSE(rec.test2);
  }
}

TEST_CASE("master runs are deterministic") {
  auto s = quadratic_scenario(100, "50 shift -2.1,-2.1", 4, SizeLaw{100, 10}, 8.0, 1e-3);
  const FedEngine engine(s.lm, FedSettings{});
  const auto a = run_master(s.config, engine, s.provider());
  const auto b = run_master(s.config, engine, s.provider());
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(a.rounds[i].loss == b.rounds[i].loss);
    CHECK(a.rounds[i].model == b.rounds[i].model);
  }
  CHECK(a.restart_rounds == b.restart_rounds);
}
