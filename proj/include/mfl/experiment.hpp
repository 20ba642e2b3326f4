#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfl/config.hpp"

namespace mfl {

struct ExperimentResult {
  RunConfig config;
  LossModel loss_model;  // with the resolved Lipschitz bound
  bool lipschitz_estimated = false;
  std::size_t change_rounds = 0;  // L
  MasterResult run;
  std::optional<RegretTrace> regret;
  std::optional<double> static_regret;  // quadratic tasks only
  double mean_loss = 0.0;
  std::optional<double> mean_accuracy;  // classification only
  std::size_t with_replacement_rounds = 0;
  std::size_t clip_events = 0;
  std::size_t lipschitz_violations = 0;
  std::size_t degraded_rounds = 0;
};

/// Runs one configuration in memory.
ExperimentResult run_experiment(const RunConfig& config);

/// rounds.csv text: one header row and one row per round.
std::string rounds_csv(const ExperimentResult& result);
nlohmann::json summary_json(const ExperimentResult& result);

/// Runs the configuration and writes rounds.csv and summary.json into config.out_dir.
ExperimentResult run_and_write(const RunConfig& config);

/// Runs every configuration and returns the side-by-side table. Throws ConfigError if the
/// runs differ in seed, horizon, DPU count or data section.
nlohmann::json compare(const std::vector<RunConfig>& configs);

}  // namespace mfl
