#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "mfl/data.hpp"
#include "mfl/fed.hpp"
#include "mfl/loss.hpp"
#include "mfl/master.hpp"
#include "mfl/regret.hpp"

namespace mfl {

enum class RunMode { master, baseline };
enum class OracleMode { offline, inline_, off };

struct RunConfig {
  // [run]
  RunMode mode = RunMode::master;
  Algo algo = Algo::fedavg;
  int horizon = 100;
  std::size_t n_dpus = 20;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  InitMode init = InitMode::fresh;

  // [loss]
  LossKind loss = LossKind::binary_logistic;
  double lambda = 2e-4;
  Regularizer regularizer = Regularizer::l2_squared;
  double scale = 10.0;
  double lipschitz = 0.0;  // 0 = estimate from round 1
  double model_norm_cap = 10.0;
  BregmanDivergence bregman;

  // [rate]
  double c1 = 1.0;
  double c2 = 1.0;
  double delta = 0.1;
  double test_scale = 1.0;
  double c_tilde = 1.0;
  std::size_t window = 0;
  bool reset_order_on_restart = false;

  // [data]
  SourceKind source = SourceKind::synthetic_quadratic;
  std::string path;
  std::vector<double> optimum{0.0};  // synthetic-quadratic initial optimum
  double noise_sd = 0.0;
  std::size_t classes = 2;           // synthetic-logistic
  std::size_t dimension = 2;         // synthetic-logistic feature dimension
  double separation = 3.0;
  std::uint64_t source_seed = 7;
  SizeLaw sizes;
  DriftSchedule drift;

  // [fed]
  GradientMode gradient = GradientMode::full_batch;
  std::vector<double> gammas;

  // [oracle]
  OracleMode oracle = OracleMode::offline;
  ComparatorOptions comparator;

  // [output]
  std::string out_dir = "out";

  void validate() const;
  RateSchedule rate() const;
  MasterConfig master_config() const;
};

/// Names of the shipped presets.
std::vector<std::string> preset_names();
/// INI text of a preset; throws ConfigError for unknown names.
std::string preset_text(const std::string& name);

/// Builds a config from INI text layered over the defaults (and over `base` if given).
RunConfig parse_config(const std::string& ini_text, const RunConfig& base = {});
RunConfig load_config_file(const std::string& path, const RunConfig& base = {});
/// Applies one "section.key=value" override.
void apply_override(RunConfig& config, const std::string& assignment);

/// Full INI echo; parse_config(echo_config(c)) reproduces c.
std::string echo_config(const RunConfig& config);

/// Data source described by the config (loads the LIBSVM file if any).
DataSource build_source(const RunConfig& config);
/// Loss model for a source; lipschitz = 0 is resolved by the caller.
LossModel build_loss_model(const RunConfig& config, const DataSource& source);

std::string to_string(RunMode mode);
std::string to_string(Algo algo);
std::string to_string(LossKind kind);
std::string to_string(SourceKind kind);

}  // namespace mfl
