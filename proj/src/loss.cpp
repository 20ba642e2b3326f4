#include "mfl/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mfl {

namespace {

void check_point(std::span<const double> model, const Datapoint& point, const LossModel& lm) {
  if (model.size() != lm.dimension) {
    throw ConfigError("model dimension " + std::to_string(model.size()) +
                      " does not match loss dimension " + std::to_string(lm.dimension));
  }
  if (!point.index.empty() && point.index.back() >= lm.feature_dim()) {
    throw ConfigError("feature index " + std::to_string(point.index.back()) +
                      " exceeds feature dimension " + std::to_string(lm.feature_dim()));
  }
}

double sparse_dot(std::span<const double> row, const Datapoint& point) {
  double s = 0.0;
  for (std::size_t j = 0; j < point.index.size(); ++j) s += row[point.index[j]] * point.value[j];
  return s;
}

// log(1 + exp(-z)) without overflow.
double log1p_exp_neg(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double regularizer_value(std::span<const double> model, const LossModel& lm) {
  if (lm.lambda == 0.0) return 0.0;
  double s = 0.0;
  if (lm.regularizer == Regularizer::l2_squared) {
    for (double v : model) s += v * v;
    return 0.5 * lm.lambda * s;
  }
  for (double v : model) s += std::abs(v);
  return lm.lambda * s;
}

void softmax_scores(std::span<const double> model, const Datapoint& point, const LossModel& lm,
                    std::vector<double>& scores) {
  const std::size_t fd = lm.feature_dim();
  scores.resize(lm.num_classes);
  for (std::size_t c = 0; c < lm.num_classes; ++c) {
    scores[c] = sparse_dot(model.subspan(c * fd, fd), point);
  }
}

void check_label(const Datapoint& point, const LossModel& lm) {
  if (lm.kind == LossKind::binary_logistic && point.label != 1 && point.label != -1) {
    throw ConfigError("binary label must be +1 or -1, got " + std::to_string(point.label));
  }
  if (lm.kind == LossKind::softmax_multiclass &&
      (point.label < 0 || static_cast<std::size_t>(point.label) >= lm.num_classes)) {
    throw ConfigError("class label " + std::to_string(point.label) + " outside [0, " +
                      std::to_string(lm.num_classes) + ")");
  }
}

}  // namespace

double Datapoint::squared_norm() const {
  double s = 0.0;
  for (double v : value) s += v * v;
  return s;
}

void LossModel::validate() const {
  if (dimension == 0) throw ConfigError("loss dimension must be positive");
  if (!(scale > 0.0)) throw ConfigError("loss scale B must be positive");
  if (!(lipschitz > 0.0)) throw ConfigError("Lipschitz bound must be positive");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (kind == LossKind::softmax_multiclass) {
    if (num_classes < 2) throw ConfigError("softmax needs at least two classes");
    if (dimension % num_classes != 0) {
      throw ConfigError("softmax dimension must be a multiple of the class count");
    }
  }
}

LossValue loss(std::span<const double> model, const Datapoint& point, const LossModel& lm) {
  check_point(model, point, lm);
  double raw = 0.0;
  switch (lm.kind) {
    case LossKind::binary_logistic: {
      check_label(point, lm);
      raw = log1p_exp_neg(point.label * sparse_dot(model, point));
      break;
    }
    case LossKind::softmax_multiclass: {
      check_label(point, lm);
      std::vector<double> scores;
      softmax_scores(model, point, lm, scores);
      const double top = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double s : scores) z += std::exp(s - top);
      raw = top + std::log(z) - scores[static_cast<std::size_t>(point.label)];
      break;
    }
    case LossKind::quadratic_synthetic: {
      // 1/2 ||x - xi||^2 with xi sparse
      double s = 0.0;
      std::size_t j = 0;
      for (std::size_t i = 0; i < model.size(); ++i) {
        double diff = model[i];
        if (j < point.index.size() && point.index[j] == i) diff -= point.value[j++];
        s += diff * diff;
      }
      raw = 0.5 * s;
      break;
    }
  }
  raw += regularizer_value(model, lm);
  LossValue out;
  out.raw = raw;
  const double scaled = raw / lm.scale;
  out.clipped = scaled > 1.0 || scaled < 0.0;
  out.scaled = std::clamp(scaled, 0.0, 1.0);
  return out;
}

void accumulate_gradient(std::span<const double> model, const Datapoint& point,
                         const LossModel& lm, double weight, std::span<double> out) {
  check_point(model, point, lm);
  const double w = weight / lm.scale;
  switch (lm.kind) {
    case LossKind::binary_logistic: {
      check_label(point, lm);
      const double z = point.label * sparse_dot(model, point);
      // d/dz log(1 + e^{-z}) = -1 / (1 + e^{z})
      const double coeff = -point.label / (1.0 + std::exp(z));
      for (std::size_t j = 0; j < point.index.size(); ++j) {
        out[point.index[j]] += w * coeff * point.value[j];
      }
      break;
    }
    case LossKind::softmax_multiclass: {
      check_label(point, lm);
      std::vector<double> scores;
      softmax_scores(model, point, lm, scores);
      const double top = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - top);
        z += s;
      }
      const std::size_t fd = lm.feature_dim();
      for (std::size_t c = 0; c < lm.num_classes; ++c) {
        double coeff = scores[c] / z;
        if (static_cast<int>(c) == point.label) coeff -= 1.0;
        for (std::size_t j = 0; j < point.index.size(); ++j) {
          out[c * fd + point.index[j]] += w * coeff * point.value[j];
        }
      }
      break;
    }
    case LossKind::quadratic_synthetic: {
      for (std::size_t i = 0; i < model.size(); ++i) out[i] += w * model[i];
      for (std::size_t j = 0; j < point.index.size(); ++j) {
        out[point.index[j]] -= w * point.value[j];
      }
      break;
    }
  }
  if (lm.lambda != 0.0) {
    if (lm.regularizer == Regularizer::l2_squared) {
      for (std::size_t i = 0; i < model.size(); ++i) out[i] += w * lm.lambda * model[i];
    } else {
      for (std::size_t i = 0; i < model.size(); ++i) {
        const double s = model[i] > 0.0 ? 1.0 : (model[i] < 0.0 ? -1.0 : 0.0);
        out[i] += w * lm.lambda * s;
      }
    }
  }
}

ModelVector gradient(std::span<const double> model, const Datapoint& point, const LossModel& lm) {
  ModelVector g(model.size(), 0.0);
  accumulate_gradient(model, point, lm, 1.0, g);
  return g;
}

int predict(std::span<const double> model, const Datapoint& point, const LossModel& lm) {
  check_point(model, point, lm);
  switch (lm.kind) {
    case LossKind::binary_logistic:
      return sparse_dot(model, point) >= 0.0 ? 1 : -1;
    case LossKind::softmax_multiclass: {
      std::vector<double> scores;
      softmax_scores(model, point, lm, scores);
      return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    }
    case LossKind::quadratic_synthetic:
      break;
  }
  return 0;
}

double estimate_lipschitz(std::span<const Datapoint> points, const LossModel& lm,
                          double model_norm_cap) {
  double max_norm = 0.0;
  for (const auto& p : points) max_norm = std::max(max_norm, std::sqrt(p.squared_norm()));
  double reg = 0.0;
  if (lm.lambda != 0.0) {
    reg = lm.regularizer == Regularizer::l2_squared
              ? lm.lambda * model_norm_cap
              : lm.lambda * std::sqrt(static_cast<double>(lm.dimension));
  }
  double data = 0.0;
  switch (lm.kind) {
    case LossKind::binary_logistic: data = max_norm; break;
    case LossKind::softmax_multiclass: data = std::sqrt(2.0) * max_norm; break;
    case LossKind::quadratic_synthetic: data = max_norm + model_norm_cap; break;
  }
  // Degenerate pools (all-zero features) still need a positive bound.
  return std::max(data + reg, 1e-12) / lm.scale;
}

double BregmanDivergence::weight(std::size_t i) const {
  return kind == BregmanKind::squared_euclidean ? 1.0 : weights[i];
}

void BregmanDivergence::validate(std::size_t dimension) const {
  if (kind == BregmanKind::squared_euclidean) return;
  if (weights.size() != dimension) {
    throw ConfigError("Mahalanobis weight count " + std::to_string(weights.size()) +
                      " does not match dimension " + std::to_string(dimension));
  }
  for (double w : weights) {
    if (!(w >= 1.0) || !std::isfinite(w)) {
      throw ConfigError("Mahalanobis weights must be finite and >= 1 (1-strong convexity)");
    }
  }
}

double bregman(std::span<const double> y, std::span<const double> x, const BregmanDivergence& bd) {
  if (y.size() != x.size()) throw ConfigError("Bregman divergence dimension mismatch");
  bd.validate(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = y[i] - x[i];
    s += bd.weight(i) * d * d;
  }
  return 0.5 * s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace mfl
