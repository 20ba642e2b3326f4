#include "mfl/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace mfl {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Mean point over every point of every round, the quadratic static comparator before shrinkage.
ModelVector quadratic_static_comparator(const RoundProvider& provider, int horizon,
                                        const LossModel& lm) {
  ModelVector mean(lm.dimension, 0.0);
  for (int t = 1; t <= horizon; ++t) {
    const auto data = provider(t);
    const double w = 1.0 / static_cast<double>(data->total);
    for (const auto& dpu : data->dpus) {
      for (const auto& p : dpu) {
        for (std::size_t j = 0; j < p.index.size(); ++j) mean[p.index[j]] += w * p.value[j];
      }
    }
  }
  for (double& v : mean) {
    v /= horizon;
    if (lm.lambda == 0.0) continue;
    if (lm.regularizer == Regularizer::l2_squared) {
      v /= 1.0 + lm.lambda;
    } else {
      v = v > lm.lambda ? v - lm.lambda : (v < -lm.lambda ? v + lm.lambda : 0.0);
    }
  }
  return mean;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config) {
  config.validate();
  ExperimentResult out;
  out.config = config;

  const DataSource source = build_source(config);
  LossModel lm = build_loss_model(config, source);
  config.bregman.validate(lm.dimension);
  const RoundSampler sampler(source, config.drift, config.n_dpus, config.sizes, config.seed);
  std::vector<char> with_replacement(static_cast<std::size_t>(config.horizon) + 1, 0);
  const RoundProvider provider = [&sampler, &with_replacement](int t) {
    auto data = std::make_shared<const RoundDataset>(sampler.sample(t));
    if (data->with_replacement) with_replacement[static_cast<std::size_t>(t)] = 1;
    return data;
  };

  if (config.lipschitz == 0.0) {
    const auto first = sampler.sample(1);
    std::vector<Datapoint> points;
    for (const auto& dpu : first.dpus) points.insert(points.end(), dpu.begin(), dpu.end());
    lm.lipschitz = estimate_lipschitz(points, lm, config.model_norm_cap);
    out.lipschitz_estimated = true;
  }
  out.loss_model = lm;
  out.change_rounds = static_cast<std::size_t>(config.drift.change_rounds(config.horizon));

  FedSettings settings;
  settings.algo = config.algo;
  settings.bregman = config.bregman;
  settings.mode = config.gradient;
  settings.gammas = config.gammas;
  settings.workers = config.workers;
  settings.seed = config.seed;
  const FedEngine engine(lm, settings);
  const MasterConfig mc = config.master_config();

  std::optional<RegretAccumulator> inline_oracle;
  RoundObserver observer;
  if (config.oracle == OracleMode::inline_) {
    inline_oracle.emplace(config.comparator, config.seed);
    observer = inline_oracle->observer();
  }
  out.run = config.mode == RunMode::master ? run_master(mc, engine, provider, observer)
                                           : run_single_instance(mc, engine, provider, observer);

  if (inline_oracle) {
    out.regret = std::move(inline_oracle->trace());
  } else if (config.oracle == OracleMode::offline) {
    out.regret = compute_regret(out.run, provider, lm, config.comparator, config.seed);
  }
  if (out.regret) {
    out.regret->change_rounds = out.change_rounds;
    if (lm.kind == LossKind::quadratic_synthetic) {
      const ModelVector xs = quadratic_static_comparator(provider, config.horizon, lm);
      double s = 0.0;
      for (std::size_t i = 0; i < out.run.rounds.size(); ++i) {
        const RoundEvaluator eval(provider(out.run.rounds[i].t), lm);
        s += out.run.rounds[i].loss - eval.global_loss(xs);
      }
      out.static_regret = s;
    }
  }

  double loss_sum = 0.0, acc_sum = 0.0;
  for (const auto& r : out.run.rounds) {
    loss_sum += r.loss;
    if (r.evaluated > 0) acc_sum += static_cast<double>(r.correct) / static_cast<double>(r.evaluated);
    out.clip_events += r.clip_events;
    out.lipschitz_violations += r.lipschitz_violations;
    out.degraded_rounds += r.degraded_estimate ? 1 : 0;
  }
  const double n = static_cast<double>(out.run.rounds.size());
  out.mean_loss = loss_sum / n;
  if (lm.is_classification()) out.mean_accuracy = acc_sum / n;
  for (char flag : with_replacement) out.with_replacement_rounds += flag ? 1 : 0;
  return out;
}

std::string rounds_csv(const ExperimentResult& result) {
  std::ostringstream o;
  o << "t,block_order,epoch_id,active_instance_s,active_instance_e,active_instance_k,F,F_tilde,U,"
       "test1_fired,test2_fired,regret_inst,regret_cum,delta_hat\n";
  const auto& rounds = result.run.rounds;
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const auto& r = rounds[i];
    o << r.t << ',' << r.block_order << ',' << r.epoch_id << ',' << r.inst_start << ','
      << r.inst_end << ',' << r.inst_order << ',' << num(r.loss) << ',' << num(r.optimistic) << ','
      << num(r.envelope) << ',' << (r.test1 ? 1 : 0) << ',' << (r.test2 ? 1 : 0) << ',';
    if (result.regret) {
      o << num(result.regret->instantaneous[i]) << ',' << num(result.regret->cumulative[i]) << ','
        << num(result.regret->delta_hat[i]);
    } else {
      o << ",,";
    }
    o << '\n';
  }
  return o.str();
}

nlohmann::json summary_json(const ExperimentResult& result) {
  using nlohmann::json;
  const auto& c = result.config;
  json s;
  s["mode"] = to_string(c.mode);
  s["algo"] = to_string(c.algo);
  s["seed"] = c.seed;
  s["T"] = c.horizon;
  s["rounds_completed"] = result.run.rounds.size();
  s["final_regret"] = result.regret ? json(result.regret->total()) : json(nullptr);
  s["static_regret"] = result.static_regret ? json(*result.static_regret) : json(nullptr);
  s["restart_rounds"] = result.run.restart_rounds;
  json epochs = json::array();
  for (const auto& e : result.run.epochs) {
    epochs.push_back({{"start", e.start}, {"end", e.end}, {"ended_by", to_string(e.ended_by)}});
  }
  s["epochs"] = epochs;
  s["epoch_count"] = result.run.epochs.size();
  s["block_count"] = result.run.blocks.size();
  s["instances_started"] = result.run.instances_started;
  s["mean_loss"] = result.mean_loss;
  s["mean_accuracy"] = result.mean_accuracy ? json(*result.mean_accuracy) : json(nullptr);
  s["accuracy_protocol"] =
      "prequential: each round's sampled data scored with the active instance's model before the "
      "round's update; uniform mean over all T rounds";
  s["L"] = result.change_rounds;
  s["mu"] = result.loss_model.lipschitz;
  s["mu_source"] = result.lipschitz_estimated ? "estimated from round 1" : "declared";
  s["sampling"] = "independent per-DPU draws without replacement; overlap across DPUs allowed";
  s["delta_hat"] = "lower bound over a probe set";
  json w;
  w["with_replacement_rounds"] = result.with_replacement_rounds;
  w["clip_events"] = result.clip_events;
  w["lipschitz_violations"] = result.lipschitz_violations;
  w["degraded_estimate_rounds"] = result.degraded_rounds;
  w["comparator_failures"] = result.regret ? result.regret->comparator_failures : 0;
  w["comparator_replaced"] = result.regret ? result.regret->comparator_replaced : 0;
  s["warnings"] = w;
  s["config"] = echo_config(c);
  return s;
}

ExperimentResult run_and_write(const RunConfig& config) {
  auto result = run_experiment(config);
  std::filesystem::create_directories(config.out_dir);
  const auto dir = std::filesystem::path(config.out_dir);
  {
    std::ofstream csv(dir / "rounds.csv", std::ios::binary);
    csv << rounds_csv(result);
    if (!csv) throw ConfigError("cannot write " + (dir / "rounds.csv").string());
  }
  {
    std::ofstream js(dir / "summary.json", std::ios::binary);
    js << summary_json(result).dump(2) << '\n';
    if (!js) throw ConfigError("cannot write " + (dir / "summary.json").string());
  }
  return result;
}

namespace {

std::string data_section(const std::string& echo) {
  const auto a = echo.find("[data]");
  const auto b = echo.find("[fed]");
  return echo.substr(a, b - a);
}

}  // namespace

nlohmann::json compare(const std::vector<RunConfig>& configs) {
  using nlohmann::json;
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  const auto& first = configs.front();
  const std::string data = data_section(echo_config(first));
  for (const auto& c : configs) {
    if (c.seed != first.seed) throw ConfigError("compare refuses runs with different seeds");
    if (c.horizon != first.horizon || c.n_dpus != first.n_dpus) {
      throw ConfigError("compare refuses runs with different T or DPU counts");
    }
    if (data_section(echo_config(c)) != data) {
      throw ConfigError("compare refuses runs with different data sources or drift schedules");
    }
  }
  json methods = json::array();
  for (const auto& c : configs) {
    const auto r = run_experiment(c);
    json m;
    m["method"] = (c.mode == RunMode::master ? "master-" : "baseline-") + to_string(c.algo);
    m["mean_accuracy"] = r.mean_accuracy ? json(*r.mean_accuracy) : json(nullptr);
    m["mean_loss"] = r.mean_loss;
    m["final_regret"] = r.regret ? json(r.regret->total()) : json(nullptr);
    m["restarts"] = r.run.restart_rounds.size();
    m["restart_rounds"] = r.run.restart_rounds;
    m["epoch_count"] = r.run.epochs.size();
    methods.push_back(m);
  }
  json out;
  out["seed"] = first.seed;
  out["T"] = first.horizon;
  out["methods"] = methods;
  return out;
}

}  // namespace mfl
