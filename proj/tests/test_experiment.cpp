#include <doctest.h>

#include <sstream>

#include "mfl/error.hpp"
#include "mfl/experiment.hpp"

using namespace mfl;

namespace {

RunConfig stationary(int horizon) {
  auto c = parse_config(preset_text("accept-stationary"));
  c.horizon = horizon;
  c.oracle = OracleMode::offline;
  return c;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char ch : s) n += ch == '\n' ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("every preset parses and validates") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    auto c = parse_config(preset_text(name));
    if (c.source == SourceKind::libsvm_file) continue;  // needs a data file
    CHECK_NOTHROW(c.validate());
  }
  CHECK_THROWS_AS(preset_text("no-such-preset"), ConfigError);
}

TEST_CASE("config echo round-trips") {
  auto c = parse_config(preset_text("accept-piecewise"));
  apply_override(c, "rate.test_scale=0.125");
  apply_override(c, "run.seed=77");
  const std::string echo = echo_config(c);
  const auto back = parse_config(echo);
  CHECK(echo_config(back) == echo);
  CHECK(back.test_scale == 0.125);
  CHECK(back.seed == 77);
  CHECK_THROWS_AS(apply_override(c, "rate.nonsense=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "no-equals-sign"), ConfigError);
  CHECK_THROWS_AS(parse_config("[rate]\ndelta = 2\n").validate(), ConfigError);
}

TEST_CASE("runs are reproducible byte for byte") {
  const auto c = stationary(32);
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  const std::string csv = rounds_csv(a);
  CHECK(csv == rounds_csv(b));
  CHECK(summary_json(a).dump() == summary_json(b).dump());
  CHECK(count_lines(csv) == 33);
  CHECK(csv.rfind("t,block_order,epoch_id,active_instance_s,active_instance_e,active_instance_k,"
                  "F,F_tilde,U,test1_fired,test2_fired,regret_inst,regret_cum,delta_hat\n", 0) == 0);

  auto other = c;
  other.seed = c.seed + 1;
  CHECK(rounds_csv(run_experiment(other)) != csv);
}

TEST_CASE("summary fields") {
  auto c = stationary(48);
  const auto r = run_experiment(c);
  const auto s = summary_json(r);
  CHECK(s["T"] == 48);
  CHECK(s["rounds_completed"] == 48);
  CHECK(s["L"] == 1);
  CHECK(s["restart_rounds"].size() == r.run.restart_rounds.size());
  REQUIRE(r.regret);
  CHECK(s["final_regret"].get<double>() == r.regret->total());
  CHECK(r.static_regret.has_value());
  CHECK(s["epoch_count"].get<std::size_t>() == r.run.epochs.size());
  int covered = 0;
  for (const auto& e : s["epochs"]) covered += e["end"].get<int>() - e["start"].get<int>() + 1;
  CHECK(covered == 48);
  CHECK(parse_config(s["config"].get<std::string>()).horizon == 48);

  c.oracle = OracleMode::off;
  const auto off = run_experiment(c);
  CHECK_FALSE(off.regret.has_value());
  CHECK(summary_json(off)["final_regret"].is_null());
  CHECK(rounds_csv(off).find(",,,\n") != std::string::npos);
}

TEST_CASE("inline and offline oracles agree") {
  auto c = stationary(40);
  const auto offline = run_experiment(c);
  c.oracle = OracleMode::inline_;
  const auto inl = run_experiment(c);
  CHECK(rounds_csv(offline) == rounds_csv(inl));
}

TEST_CASE("baseline never restarts") {
  auto c = parse_config(preset_text("accept-shift"));
  c.mode = RunMode::baseline;
  c.horizon = 150;
  c.n_dpus = 4;
  c.oracle = OracleMode::off;
  const auto r = run_experiment(c);
  CHECK(r.run.restart_rounds.empty());
  CHECK(r.run.epochs.size() == 1);
  CHECK(r.run.instances_started == 1);
}

TEST_CASE("compare") {
  auto master = stationary(24);
  auto baseline = master;
  baseline.mode = RunMode::baseline;
  const auto table = compare({master, baseline});
  REQUIRE(table["methods"].size() == 2);
  CHECK(table["methods"][0]["method"] == "master-fedavg");
  CHECK(table["methods"][1]["method"] == "baseline-fedavg");
  CHECK(table["T"] == 24);

  auto other_seed = baseline;
  other_seed.seed = 99;
  CHECK_THROWS_AS(compare({master, other_seed}), ConfigError);
  auto other_data = baseline;
  other_data.noise_sd = 0.5;
  CHECK_THROWS_AS(compare({master, other_data}), ConfigError);
}

TEST_CASE("paper-vi preset on a small multi-class file") {
  auto c = parse_config(preset_text("paper-vi"));
  c.path = std::string(MFL_TEST_DATA_DIR) + "/toy6.libsvm";
  c.horizon = 40;
  c.n_dpus = 4;
  c.sizes = SizeLaw{50, 10};
  c.drift = DriftSchedule::parse("31 swap 0:1,2:3,4:5");
  c.validate();
  const auto r = run_experiment(c);
  CHECK(r.run.rounds.size() == 40);
  REQUIRE(r.mean_accuracy.has_value());
  CHECK(*r.mean_accuracy >= 0.0);
  CHECK(*r.mean_accuracy <= 1.0);
  CHECK(r.lipschitz_estimated);
  CHECK(r.change_rounds == 2);
  CHECK(summary_json(r)["accuracy_protocol"].is_string());

  auto missing = c;
  missing.path = "/nonexistent/file.libsvm";
  CHECK_THROWS_AS(missing.validate(), ConfigError);
}
