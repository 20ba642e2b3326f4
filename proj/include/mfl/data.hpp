#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mfl/libsvm.hpp"
#include "mfl/loss.hpp"

namespace mfl {

enum class SourceKind { libsvm_file, synthetic_quadratic, synthetic_logistic };

/// How class ids are written into sampled datapoints.
enum class LabelEncoding {
  signed_binary,  // class id 0 -> -1, class id 1 -> +1
  class_index,    // class id as-is
  none,           // label 0 (regression-style tasks)
};

/// Where round data comes from. Class ids index `classes` (sorted raw labels), so
/// class id 0 is the smallest raw label. Drift events refer to class ids.
struct DataSource {
  SourceKind kind = SourceKind::synthetic_quadratic;
  std::vector<int> classes;
  std::size_t feature_dim = 0;
  LabelEncoding encoding = LabelEncoding::none;

  // libsvm-file: immutable pool (raw labels) bucketed by class id
  std::shared_ptr<const std::vector<Datapoint>> pool;
  std::vector<std::vector<std::uint32_t>> by_class;

  // synthetic generators
  std::vector<double> optimum;                    // quadratic: initial target a
  std::vector<std::vector<double>> class_means;   // logistic: one mean per class
  double noise_sd = 0.0;

  std::size_t num_classes() const { return classes.size(); }

  static DataSource from_libsvm(LibsvmData data, LabelEncoding encoding);
  static DataSource synthetic_quadratic(std::vector<double> optimum, double noise_sd);
  /// Gaussian class clusters with means separation * N(0, I/d), drawn from `seed`.
  static DataSource synthetic_logistic(std::size_t num_classes, std::size_t dim,
                                       double separation, double noise_sd, std::uint64_t seed);
};

enum class DriftKind { class_introduce, class_swap, comparator_shift };

struct DriftEvent {
  int round = 1;
  DriftKind kind = DriftKind::class_introduce;
  std::vector<int> classes;                  // class_introduce
  std::vector<std::pair<int, int>> pairs;    // class_swap
  std::vector<double> optimum;               // comparator_shift
};

/// Ordered drift events. Text form, events separated by '|':
///   `1 introduce 0,1 | 31 introduce 2,3 | 65 swap 0:1,2:3 | 100 shift 0.5,-0.5`
struct DriftSchedule {
  std::vector<DriftEvent> events;

  /// Rounds strictly increasing and inside [1, horizon].
  void validate(int horizon) const;
  /// Number of rounds with a change of the loss, counting round 1 as the arrival
  /// of the first loss function.
  int change_rounds(int horizon) const;
  std::string to_string() const;
  static DriftSchedule parse(std::string_view text);
};

/// Data-generating state after applying every event with round <= t.
struct DriftState {
  std::vector<bool> active;     // by class id
  std::vector<int> label_map;   // class id -> emitted class id
  std::vector<double> optimum;  // quadratic target
};

DriftState drift_state_at(const DataSource& source, const DriftSchedule& schedule, int t);

/// Per-DPU dataset size law: floor(max(1, Normal(mean, sd))).
struct SizeLaw {
  double mean = 1000.0;
  double sd = 200.0;

  std::size_t draw(std::mt19937_64& rng) const;
};

/// Data of one round, one list per DPU, in DPU-id order.
struct RoundDataset {
  int round = 0;
  std::vector<std::vector<Datapoint>> dpus;
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  std::vector<double> weights;  // p_n = D_n / D
  bool with_replacement = false;  // some DPU asked for more points than the active pool holds
};

/// Independent stream per (seed, round, dpu, purpose).
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t round, std::uint64_t dpu,
                            std::uint64_t purpose);

/// Samples round t. Each DPU draws its size and then its points without replacement
/// from the active pool using its own stream, so the result does not depend on the
/// order DPUs are processed in. Draws are independent across DPUs (overlap allowed).
RoundDataset sample_round(const DataSource& source, const DriftSchedule& schedule, int t,
                          std::size_t n_dpus, const SizeLaw& law, std::uint64_t seed);

/// Convenience holder for the arguments of sample_round.
class RoundSampler {
 public:
  RoundSampler(DataSource source, DriftSchedule schedule, std::size_t n_dpus, SizeLaw law,
               std::uint64_t seed);

  RoundDataset sample(int t) const;
  const DataSource& source() const { return source_; }
  const DriftSchedule& schedule() const { return schedule_; }
  std::size_t n_dpus() const { return n_dpus_; }

 private:
  DataSource source_;
  DriftSchedule schedule_;
  std::size_t n_dpus_;
  SizeLaw law_;
  std::uint64_t seed_;
};

}  // namespace mfl
