#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfl/error.hpp"

namespace mfl {

/// One labeled example with sparse features.
///
/// Feature indices are 0-based and strictly increasing. For binary tasks the
/// label is +1/-1; for multi-class tasks it is the class index in [0, K).
struct Datapoint {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
  int label = 0;

  double squared_norm() const;
};

enum class LossKind { binary_logistic, softmax_multiclass, quadratic_synthetic };
enum class Regularizer { l2_squared, l1 };

/// Per-example convex loss f(x; xi), scaled by 1/scale and clipped into [0, 1].
///
/// For softmax the model is the K x (dimension / K) weight matrix flattened
/// row-major, one row per class.
struct LossModel {
  LossKind kind = LossKind::binary_logistic;
  double lambda = 0.0;
  Regularizer regularizer = Regularizer::l2_squared;
  std::size_t dimension = 1;
  std::size_t num_classes = 2;
  double lipschitz = 1.0;  // declared bound mu on the scaled gradient norm
  double scale = 10.0;     // B

  std::size_t feature_dim() const {
    return kind == LossKind::softmax_multiclass ? dimension / num_classes : dimension;
  }
  bool is_classification() const { return kind != LossKind::quadratic_synthetic; }
  void validate() const;
};

struct LossValue {
  double scaled = 0.0;  // raw / scale, clipped to [0, 1]
  double raw = 0.0;
  bool clipped = false;
};

LossValue loss(std::span<const double> model, const Datapoint& point, const LossModel& lm);

/// Gradient of raw / scale (the clip is ignored). The l1 term uses sign(x) with 0 at 0.
ModelVector gradient(std::span<const double> model, const Datapoint& point, const LossModel& lm);

/// out += weight * gradient(model, point, lm), without allocating.
void accumulate_gradient(std::span<const double> model, const Datapoint& point,
                         const LossModel& lm, double weight, std::span<double> out);

/// Predicted label: sign for binary (ties to +1), argmax class for softmax, 0 for quadratic.
int predict(std::span<const double> model, const Datapoint& point, const LossModel& lm);

/// Upper bound on the scaled per-example gradient norm for models with ||x|| <= model_norm_cap.
double estimate_lipschitz(std::span<const Datapoint> points, const LossModel& lm,
                          double model_norm_cap);

enum class BregmanKind { squared_euclidean, diagonal_mahalanobis };

/// Bregman divergence of phi(x) = 1/2 sum_i w_i x_i^2. Squared-Euclidean has all w_i = 1.
/// Mahalanobis weights must be >= 1 so that phi stays 1-strongly convex.
struct BregmanDivergence {
  BregmanKind kind = BregmanKind::squared_euclidean;
  std::vector<double> weights;

  double weight(std::size_t i) const;
  void validate(std::size_t dimension) const;
};

double bregman(std::span<const double> y, std::span<const double> x, const BregmanDivergence& bd);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace mfl
