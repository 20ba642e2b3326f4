#include "mfl/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>

#include "mfl/error.hpp"
#include "mfl/experiment.hpp"
#include "mfl/regret.hpp"

namespace mfl {
namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
  bool skipped = false;
};

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

Datapoint dense_point(std::span<const double> x, int label) {
  Datapoint p;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p.index.push_back(static_cast<std::uint32_t>(i));
    p.value.push_back(x[i]);
  }
  p.label = label;
  return p;
}

double raw_scaled(std::span<const double> model, const Datapoint& p, const LossModel& lm) {
  return loss(model, p, lm).raw / lm.scale;
}

// Central differences with step 1e-6 on the unclipped scaled loss.
Outcome gradient_check() {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::size_t pairs = 200;
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t checked = 0;
  for (LossKind kind : {LossKind::binary_logistic, LossKind::softmax_multiclass,
                        LossKind::quadratic_synthetic}) {
    for (std::size_t i = 0; i < pairs; ++i) {
      LossModel lm;
      lm.kind = kind;
      lm.scale = 10.0;
      lm.lambda = 0.01;
      lm.regularizer = i % 2 == 0 ? Regularizer::l2_squared : Regularizer::l1;
      const std::size_t fd = 5;
      lm.num_classes = kind == LossKind::softmax_multiclass ? 3 : 2;
      lm.dimension = kind == LossKind::softmax_multiclass ? fd * 3 : fd;

      std::vector<double> feat(fd);
      for (auto& v : feat) v = z(rng);
      int label = 0;
      if (kind == LossKind::binary_logistic) label = i % 4 < 2 ? 1 : -1;
      if (kind == LossKind::softmax_multiclass) label = static_cast<int>(i % 3);
      const Datapoint p = dense_point(feat, label);

      ModelVector x(lm.dimension);
      for (auto& v : x) v = z(rng);
      const ModelVector g = gradient(x, p, lm);
      double diff = 0.0, gn = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        ModelVector up = x, down = x;
        up[j] += h;
        down[j] -= h;
        const double fdiff = (raw_scaled(up, p, lm) - raw_scaled(down, p, lm)) / (2.0 * h);
        diff += (fdiff - g[j]) * (fdiff - g[j]);
        gn += g[j] * g[j];
      }
      worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(gn), 1e-12));
      ++checked;
    }
  }
  return {worst < 1e-5, fmt("%.0f pairs, max relative error %.3g (limit 1e-5)", checked, worst)};
}

RoundDataset logistic_round(int t, std::size_t n_dpus, std::uint64_t seed) {
  static const DataSource src = DataSource::synthetic_logistic(2, 4, 2.0, 1.0, 21);
  return sample_round(src, {}, t, n_dpus, SizeLaw{60, 10}, seed);
}

Outcome omd_equivalence() {
  LossModel lm;
  lm.kind = LossKind::binary_logistic;
  lm.dimension = 4;
  lm.lambda = 1e-3;
  lm.scale = 10.0;
  lm.lipschitz = 1e6;
  FedSettings avg_settings, omd_settings;
  omd_settings.algo = Algo::fedomd;
  const FedEngine avg(lm, avg_settings), omd(lm, omd_settings);
  OptimisticTracker ta(1.0, 1.0, 4), to(1.0, 1.0, 4);
  ModelVector xa(4, 0.0), xo(4, 0.0);
  double worst = 0.0;
  for (int t = 1; t <= 100; ++t) {
    auto data = std::make_shared<const RoundDataset>(logistic_round(t, 5, 33));
    auto ev = std::make_shared<const RoundEvaluator>(data, lm);
    xa = avg.run_round(xa, 0.1, *data, ev, ta).model;
    xo = omd.run_round(xo, 0.1, *data, ev, to).model;
    for (std::size_t j = 0; j < xa.size(); ++j) worst = std::max(worst, std::abs(xa[j] - xo[j]));
  }
  return {worst <= 1e-10, fmt("100 rounds, max coordinate gap %.3g (limit 1e-10)", worst)};
}

Outcome scheduler_distribution() {
  const RateFn rho = [](double t) { return 1.0 / std::sqrt(t); };
  const int m = 4, trials = 10000;
  std::mt19937_64 rng(303);
  std::vector<double> count(m + 1, 0.0);
  int covered = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto pool = schedule_block(1, m, rho, rng);
    bool all = true;
    for (int t = 1; t <= (1 << m); ++t) {
      all = all && std::any_of(pool.instances.begin(), pool.instances.end(),
                               [t](const Instance& a) { return a.covers(t); });
    }
    covered += all ? 1 : 0;
    for (const auto& a : pool.instances) count[static_cast<std::size_t>(a.order)] += 1;
  }
  double worst = 0.0;
  for (int k = 0; k <= m; ++k) {
    const double slots = static_cast<double>(1 << (m - k));
    const double freq = count[static_cast<std::size_t>(k)] / (slots * trials);
    const double expected = rho(1 << m) / rho(1 << k);
    worst = std::max(worst, std::abs(freq - expected) / expected);
  }
  return {worst <= 0.10 && covered == trials,
          fmt("max relative frequency error %.4f (limit 0.10), coverage %.0f/%.0f", worst, covered,
              trials)};
}

Outcome minibatch_unbiased() {
  LossModel lm;
  lm.kind = LossKind::binary_logistic;
  lm.dimension = 4;
  lm.lambda = 1e-3;
  lm.scale = 10.0;
  static const DataSource src = DataSource::synthetic_logistic(2, 4, 3.0, 1.0, 44);
  const auto round = sample_round(src, {}, 1, 1, SizeLaw{1000, 0}, 5);
  const auto& pts = round.dpus[0];
  const ModelVector x{0.1, -0.2, 0.05, 0.0};
  const ModelVector full = full_gradient(pts, x, lm);

  std::mt19937_64 rng(404);
  ModelVector mean(full.size(), 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto g = minibatch_gradient(pts, x, lm, 0.1, rng);
    for (std::size_t j = 0; j < g.size(); ++j) mean[j] += g[j] / draws;
  }
  double diff = 0.0;
  for (std::size_t j = 0; j < full.size(); ++j) diff += (mean[j] - full[j]) * (mean[j] - full[j]);
  const double rel = std::sqrt(diff) / norm(full);
  const bool identical = minibatch_gradient(pts, x, lm, 1.0, rng) == full;
  return {rel < 1e-2 && identical,
          fmt("relative error %.4g over 1e4 draws (limit 1e-2), gamma=1 bit-identical: ", rel) +
              (identical ? "yes" : "no")};
}

// min_x (1/t) sum_tau F^(tau)(x) for lambda = 0: with m_tau the weighted mean point and
// s_tau the weighted mean squared norm, the minimum is (avg s - |avg m|^2) / (2B).
Outcome optimistic_lower_bound() {
  const auto base = parse_config(preset_text("accept-stationary"));
  const int seeds = 50;
  int good = 0;
  for (int seed = 1; seed <= seeds; ++seed) {
    auto c = base;
    c.seed = static_cast<std::uint64_t>(seed);
    const auto source = build_source(c);
    const auto lm = [&] {
      auto l = build_loss_model(c, source);
      l.lipschitz = 1e6;
      return l;
    }();
    const RoundSampler sampler(source, c.drift, static_cast<std::size_t>(c.n_dpus), c.sizes, c.seed);
    std::vector<std::shared_ptr<const RoundDataset>> rounds;
    const RoundProvider provider = [&](int t) {
      rounds.push_back(std::make_shared<const RoundDataset>(sampler.sample(t)));
      return rounds.back();
    };
    const FedEngine engine(lm, FedSettings{});
    const auto run = run_single_instance(c.master_config(), engine, provider);

    std::vector<double> sum_m(2, 0.0);
    double sum_s = 0.0;
    bool ok = true;
    for (int t = 1; t <= c.horizon; ++t) {
      const auto& d = *rounds[static_cast<std::size_t>(t - 1)];
      for (std::size_t n = 0; n < d.dpus.size(); ++n) {
        for (const auto& p : d.dpus[n]) {
          const double w = 1.0 / static_cast<double>(d.total);
          double sq = 0.0;
          for (std::size_t k = 0; k < p.index.size(); ++k) {
            sum_m[p.index[k]] += w * p.value[k];
            sq += p.value[k] * p.value[k];
          }
          sum_s += w * sq;
        }
      }
      const double mx = sum_m[0] / t, my = sum_m[1] / t;
      const double best = (sum_s / t - mx * mx - my * my) / (2.0 * lm.scale);
      if (run.rounds[static_cast<std::size_t>(t - 1)].optimistic > best + 1e-12) ok = false;
    }
    good += ok ? 1 : 0;
  }
  const double frac = static_cast<double>(good) / seeds;
  return {frac >= 0.9, fmt("bound held at every round in %.0f/%.0f seeds (need >= 0.9)", good, seeds)};
}

int restarts_stationary(RunConfig c, int seeds, int* clean) {
  c.oracle = OracleMode::off;
  int total = 0;
  *clean = 0;
  for (int seed = 1; seed <= seeds; ++seed) {
    c.seed = static_cast<std::uint64_t>(seed);
    const auto r = run_experiment(c);
    total += static_cast<int>(r.run.restart_rounds.size());
    *clean += r.run.restart_rounds.empty() ? 1 : 0;
  }
  return total;
}

Outcome no_false_restarts() {
  auto c = parse_config(preset_text("accept-stationary"));
  c.horizon = 256;
  c.test_scale = 1.0;
  int clean = 0;
  restarts_stationary(c, 20, &clean);
  const bool ok = clean >= 19;

  // reported only: the tuned threshold of the drift presets on their data without the shift
  auto tuned = parse_config(preset_text("accept-shift"));
  tuned.horizon = 256;
  tuned.drift = {};
  int tuned_clean = 0;
  restarts_stationary(tuned, 20, &tuned_clean);
  return {ok,
          fmt("default thresholds: %.0f/20 seeds without restarts (need 19); for reference, "
              "accept-shift data without drift at test_scale %.3g: %.0f/20",
              clean, tuned.test_scale, tuned_clean)};
}

double post_mean(const MasterResult& r, int from) {
  double s = 0.0;
  int n = 0;
  for (const auto& rec : r.rounds) {
    if (rec.t >= from) {
      s += rec.loss;
      ++n;
    }
  }
  return s / n;
}

Outcome detection_adaptation() {
  const auto base = parse_config(preset_text("accept-shift"));
  const int drift_round = base.drift.events.at(0).round;

  // loss raise at the pre-drift comparator
  const auto source = build_source(base);
  const auto lm = build_loss_model(base, source);
  const RoundSampler sampler(source, base.drift, static_cast<std::size_t>(base.n_dpus), base.sizes,
                             base.seed);
  const RoundEvaluator before(std::make_shared<const RoundDataset>(sampler.sample(drift_round - 1)), lm);
  const RoundEvaluator after(std::make_shared<const RoundDataset>(sampler.sample(drift_round)), lm);
  const auto comp = comparator(before);
  const double raise = after.global_loss(comp.model) - before.global_loss(comp.model);

  int good = 0;
  double worst_gap = INFINITY;
  for (int seed = 1; seed <= 20; ++seed) {
    auto c = base;
    c.seed = static_cast<std::uint64_t>(seed);
    c.oracle = OracleMode::off;
    const auto master = run_experiment(c);
    c.mode = RunMode::baseline;
    const auto baseline = run_experiment(c);
    const double gap = post_mean(baseline.run, drift_round) - post_mean(master.run, drift_round);
    const bool restarted = std::any_of(master.run.restart_rounds.begin(),
                                       master.run.restart_rounds.end(),
                                       [&](int t) { return t < c.horizon; });
    if (restarted && gap >= 0.05) ++good;
    worst_gap = std::min(worst_gap, gap);
  }
  return {raise >= 0.5 && good >= 18,
          fmt("loss raise at drift %.3f (need >= 0.5); %.0f/20 seeds restarted and beat the "
              "baseline by >= 0.05 (need 18); smallest gap %.4f; test_scale %.3g",
              raise, good, worst_gap, base.test_scale)};
}

RunConfig piecewise(int horizon) {
  auto c = parse_config(preset_text("accept-piecewise"));
  c.horizon = horizon;
  const int q = horizon / 4;
  c.drift = DriftSchedule::parse(std::to_string(q) + " shift -2.1,-2.1 | " + std::to_string(2 * q) +
                                 " shift 0,0 | " + std::to_string(3 * q) + " shift 2.1,-2.1");
  return c;
}

Outcome epoch_bound() {
  auto c = piecewise(parse_config(preset_text("accept-piecewise")).horizon);
  c.oracle = OracleMode::off;
  const auto L = c.drift.change_rounds(c.horizon);
  int good = 0;
  std::size_t worst = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    c.seed = static_cast<std::uint64_t>(seed);
    const auto r = run_experiment(c);
    good += r.run.epochs.size() <= static_cast<std::size_t>(L) ? 1 : 0;
    worst = std::max(worst, r.run.epochs.size());
  }
  return {good >= 18, fmt("T=%.0f, L=%.0f: M <= L in %.0f/20 seeds (need 18), max M %.0f",
                          c.horizon, L, good, static_cast<double>(worst))};
}

Outcome sublinear_regret() {
  const std::vector<double> horizons{256, 512, 1024, 2048};
  std::vector<double> means;
  std::string detail = "mean regret";
  for (double T : horizons) {
    auto c = piecewise(static_cast<int>(T));
    c.oracle = OracleMode::inline_;
    double sum = 0.0;
    for (int seed = 1; seed <= 5; ++seed) {
      c.seed = static_cast<std::uint64_t>(seed);
      sum += run_experiment(c).regret->total();
    }
    means.push_back(sum / 5.0);
    detail += fmt(" T=%.0f:%.3f", T, means.back());
  }
  const auto fit = sublinearity_fit(horizons, means);
  return {fit.slope < 0.9, detail + fmt("; slope %.3f (limit 0.9, target band 0.5-0.67)", fit.slope)};
}

Outcome instance_count() {
  RateSchedule rate;
  rate.horizon = 1024;
  rate.delta = 0.1;
  const int m = 6;
  const double bound = 6.0 * (std::log2(rate.horizon) + 1.0) * rate.log_term() *
                       rate.cumulative(1 << m) / rate.cumulative(1);
  const RateFn rho = [&rate](double t) { return rate.rho(t); };
  std::size_t worst = 0;
  int good = 0;
  for (int b = 0; b < 100; ++b) {
    auto rng = make_stream(1000 + static_cast<std::uint64_t>(b), 0, 0, 0x5C4ED);
    const auto pool = schedule_block(1, m, rho, rng);
    worst = std::max(worst, pool.instances.size());
    good += static_cast<double>(pool.instances.size()) <= bound ? 1 : 0;
  }
  return {good == 100, fmt("max instances per order-6 block %.0f, bound %.2f, %.0f/100 within",
                           static_cast<double>(worst), bound, good)};
}

Outcome paper_vi_replay() {
  const char* path = std::getenv("MFL_PAPER_VI_DATA");
  if (path == nullptr || *path == '\0') {
    return {false, "set MFL_PAPER_VI_DATA to a LIBSVM multi-class file to run", true};
  }
  auto master = parse_config(preset_text("paper-vi"));
  master.path = path;
  master.validate();
  auto baseline = master;
  baseline.mode = RunMode::baseline;
  const auto table = compare({master, baseline});
  const double am = table["methods"][0]["mean_accuracy"].get<double>();
  const double ab = table["methods"][1]["mean_accuracy"].get<double>();
  return {am - ab >= 0.05,
          fmt("master accuracy %.4f, baseline %.4f, lead %.2f points (need >= 5)", am, ab,
              100.0 * (am - ab))};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> table = {
      {1, "gradient correctness", 5, gradient_check},
      {2, "FedOMD equals FedAvg under squared-euclidean", 5, omd_equivalence},
      {3, "scheduler distribution", 10, scheduler_distribution},
      {4, "minibatch unbiasedness", 10, minibatch_unbiased},
      {5, "optimistic lower bound", 30, optimistic_lower_bound},
      {6, "no false restarts", 60, no_false_restarts},
      {7, "detection and adaptation", 120, detection_adaptation},
      {8, "epoch bound", 120, epoch_bound},
      {9, "sublinear dynamic regret", 600, sublinear_regret},
      {10, "instance-count bound", 10, instance_count},
      {11, "paper-vi protocol replay", 900, paper_vi_replay},
  };
  return table;
}

}  // namespace

std::vector<int> criterion_ids() {
  std::vector<int> ids;
  for (const auto& c : criteria()) ids.push_back(c.id);
  return ids;
}

CriterionResult run_criterion(int id) {
  const auto& table = criteria();
  const auto it = std::find_if(table.begin(), table.end(), [id](const Criterion& c) { return c.id == id; });
  if (it == table.end()) throw ConfigError("unknown acceptance criterion " + std::to_string(id));

  CriterionResult r;
  r.id = id;
  r.name = it->name;
  r.limit_seconds = it->limit_seconds;
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = it->run();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.skipped = o.skipped;
  r.detail = o.detail;
  r.passed = !o.skipped && o.passed && r.seconds <= r.limit_seconds;
  if (o.passed && !r.passed && !o.skipped) r.detail += "; over the runtime limit";
  return r;
}

std::string format_line(const CriterionResult& r) {
  const char* status = r.skipped ? "SKIP" : (r.passed ? "PASS" : "FAIL");
  char time[64];
  std::snprintf(time, sizeof time, " (%.2f s, limit %.0f s)", r.seconds, r.limit_seconds);
  return std::string(status) + " [" + std::to_string(r.id) + "] " + r.name + ": " + r.detail + time;
}

std::vector<CriterionResult> run_acceptance(const std::vector<int>& ids, std::ostream& out) {
  std::vector<CriterionResult> results;
  for (int id : ids.empty() ? criterion_ids() : ids) {
    results.push_back(run_criterion(id));
    out << format_line(results.back()) << std::endl;
  }
  return results;
}

}  // namespace mfl
