#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mfl/fed.hpp"
#include "mfl/master.hpp"

namespace mfl {

struct ComparatorOptions {
  double tolerance = 1e-8;  // on the norm of the gradient mapping
  int max_iterations = 100000;
};

struct ComparatorResult {
  ModelVector model;
  double loss = 0.0;  // F^(t)(x*), clipped scaled loss
  bool converged = true;
  int iterations = 0;
  double residual = 0.0;
};

/// argmin_x F^(t)(x). Quadratic rounds use the closed form; other losses run accelerated
/// proximal gradient with restarts on the unclipped scaled objective. On non-convergence
/// the best iterate is returned with converged = false.
ComparatorResult comparator(const RoundEvaluator& round, const ComparatorOptions& options = {},
                            std::span<const double> warm_start = {});

/// argmin_x sum_t F^(t)(x) over the given rounds (diagnostic only). `loss` is the sum.
ComparatorResult static_comparator(std::span<const std::shared_ptr<const RoundEvaluator>> rounds,
                                   const ComparatorOptions& options = {});

/// {x^(t), x^(t-1), x^(t),*, x^(t-1),*} followed by `random_count` N(0, I) models drawn from
/// (seed, t).
std::vector<ModelVector> probe_set(std::span<const double> model, std::span<const double> prev_model,
                                   std::span<const double> comp, std::span<const double> prev_comp,
                                   std::uint64_t seed, int t, std::size_t random_count = 16);

/// Lower bound on sup_x |F^(t)(x) - F^(t-1)(x)| over the probes. Without a previous round,
/// F^(0) is taken as 0.
double estimate_drift(const RoundEvaluator& current, const RoundEvaluator* previous,
                      std::span<const ModelVector> probes);

struct SublinearityFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points_used = 0;
  std::vector<std::string> warnings;
};

/// Least-squares slope of log(regret) against log(T). Nonpositive regrets are dropped with
/// a warning; fewer than two usable points is an error.
SublinearityFit sublinearity_fit(std::span<const double> horizons, std::span<const double> regrets);

struct RegretTrace {
  std::vector<double> loss;             // F^(t)(x^(t))
  std::vector<double> comparator_loss;  // F^(t)(x^(t),*)
  std::vector<double> instantaneous;
  std::vector<double> cumulative;
  std::vector<double> delta_hat;        // probe-set lower bound on the drift
  std::size_t change_rounds = 0;        // L from the drift schedule
  std::size_t comparator_failures = 0;
  std::size_t comparator_replaced = 0;  // rounds where the run's own model beat the solver

  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

/// Builds a RegretTrace one round at a time, either inline as a master observer or offline
/// over regenerated rounds. Comparators are warm-started from the previous round.
class RegretAccumulator {
 public:
  RegretAccumulator(ComparatorOptions options, std::uint64_t probe_seed,
                    std::size_t random_probes = 16);

  void observe(const RoundRecord& record, const std::shared_ptr<const RoundEvaluator>& round);
  RoundObserver observer();

  RegretTrace& trace() { return trace_; }
  const RegretTrace& trace() const { return trace_; }

 private:
  ComparatorOptions options_;
  std::uint64_t probe_seed_;
  std::size_t random_probes_;
  RegretTrace trace_;
  std::shared_ptr<const RoundEvaluator> prev_round_;
  ModelVector prev_model_;
  ModelVector prev_comp_;
};

/// Offline oracle pass over a finished run.
RegretTrace compute_regret(const MasterResult& result, const RoundProvider& provider,
                           const LossModel& lm, const ComparatorOptions& options,
                           std::uint64_t probe_seed);

/// Regret of each epoch, summed over its rounds.
std::vector<double> epoch_regrets(const RegretTrace& trace, std::span<const EpochRecord> epochs);

}  // namespace mfl
