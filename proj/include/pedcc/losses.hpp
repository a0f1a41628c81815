#pragma once

// Classification losses with analytical gradients: softmax cross-entropy,
// additive-margin softmax (cosine or angular margin), center loss, and the
// fixed-centroid losses built on a CentroidSet.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pedcc/centroids.hpp"
#include "pedcc/numeric.hpp"

namespace pedcc {

struct FeatureBatch {
  Matrix features;                  // n x d, raw
  std::vector<std::size_t> labels;  // n entries in [0, c)
};

enum class MarginMode { additive_cosine, additive_angular };

struct MarginConfig {
  double scale_s = 30.0;
  double margin_m = 0.5;
  MarginMode margin_mode = MarginMode::additive_cosine;

  void validate() const {
    if (!(scale_s > 0.0)) throw Error(Errc::config_error, "scale s must be positive");
    if (!(margin_m >= 0.0)) throw Error(Errc::config_error, "margin m must be non-negative");
    if (margin_mode == MarginMode::additive_angular && !(margin_m < std::numbers::pi / 2))
      throw Error(Errc::config_error, "angular margin must be below pi/2");
  }
};

struct LossResult {
  double value = 0.0;
  Matrix grad_features;
  std::optional<Matrix> grad_weights;
  std::optional<std::vector<double>> grad_bias;
};

inline void validate_batch(const FeatureBatch& batch, std::size_t num_classes, std::size_t dim) {
  if (batch.features.rows() == 0) throw Error(Errc::invalid_argument, "empty feature batch");
  if (batch.labels.size() != batch.features.rows())
    throw Error(Errc::dimension_mismatch, "label count does not match feature rows");
  if (batch.features.cols() != dim)
    throw Error(Errc::dimension_mismatch, "feature dim " + std::to_string(batch.features.cols()) +
                                              " != weight dim " + std::to_string(dim));
  for (std::size_t y : batch.labels)
    if (y >= num_classes)
      throw Error(Errc::label_range, "label " + std::to_string(y) + " outside [0, " +
                                         std::to_string(num_classes) + ")");
}

namespace detail {

struct SoftmaxTerms {
  double value;
  Matrix grad_logits;  // d(mean loss)/d(logits)
};

// Mean cross-entropy of logit rows against labels, stabilised by subtracting
// each row's maximum.
inline SoftmaxTerms softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> labels) {
  const std::size_t n = logits.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix grad(n, logits.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double log_sum = std::log(sum);
    total += log_sum - (z[labels[i]] - zmax);
    auto g = grad.row(i);
    for (std::size_t j = 0; j < z.size(); ++j) g[j] = std::exp(z[j] - zmax - log_sum) * inv_n;
    g[labels[i]] -= inv_n;
  }
  return {total * inv_n, std::move(grad)};
}

// Pulls a gradient taken w.r.t. a normalised row back through x -> x / |x|:
// (I - x_hat x_hat^T) g / |x|.
inline void backprop_normalization(std::span<const double> unit, double raw_norm,
                                   std::span<const double> grad_unit, std::span<double> out) {
  const double radial = dot(grad_unit, unit);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = (grad_unit[t] - radial * unit[t]) / raw_norm;
}

inline constexpr double kAngularClamp = 1e-7;

}  // namespace detail

/// Mean cross-entropy over logits x W^T + b.
inline LossResult softmax_ce(const FeatureBatch& batch, const Matrix& weights,
                             std::optional<std::span<const double>> bias = std::nullopt,
                             bool want_weight_grad = false) {
  validate_batch(batch, weights.rows(), weights.cols());
  if (bias && bias->size() != weights.rows())
    throw Error(Errc::dimension_mismatch, "bias length does not match class count");
  Matrix logits = matmul_transposed(batch.features, weights);
  if (bias)
    for (std::size_t i = 0; i < logits.rows(); ++i)
      for (std::size_t j = 0; j < logits.cols(); ++j) logits(i, j) += (*bias)[j];
  auto terms = detail::softmax_cross_entropy(logits, batch.labels);

  LossResult out;
  out.value = terms.value;
  out.grad_features = matmul(terms.grad_logits, weights);
  if (want_weight_grad) {
    out.grad_weights = transposed_matmul(terms.grad_logits, batch.features);
    std::vector<double> gb(weights.rows(), 0.0);
    for (std::size_t i = 0; i < terms.grad_logits.rows(); ++i)
      for (std::size_t j = 0; j < gb.size(); ++j) gb[j] += terms.grad_logits(i, j);
    out.grad_bias = std::move(gb);
  }
  return out;
}

/// Additive-margin softmax on L2-normalised features and weights. The target
/// logit is s(cos - m) in additive-cosine mode and s cos(theta + m) in
/// additive-angular mode, where cos is clamped to [-1+1e-7, 1-1e-7] before
/// arccos (the gradient is zero outside that band). Gradients are w.r.t. the
/// raw, unnormalised features and weights.
inline LossResult am_softmax(const FeatureBatch& batch, const Matrix& weights, const MarginConfig& cfg,
                             bool want_weight_grad = false) {
  cfg.validate();
  validate_batch(batch, weights.rows(), weights.cols());
  const Matrix x_hat = l2_normalize_rows(batch.features);
  const Matrix w_hat = l2_normalize_rows(weights);
  const Matrix cos = matmul_transposed(x_hat, w_hat);
  const std::size_t n = cos.rows();
  const std::size_t c = cos.cols();
  const double s = cfg.scale_s;

  Matrix logits(n, c);
  std::vector<double> target_slope(n, s);  // d logit_y / d cos_y
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) logits(i, j) = s * cos(i, j);
    const std::size_t y = batch.labels[i];
    if (cfg.margin_mode == MarginMode::additive_cosine) {
      logits(i, y) = s * (cos(i, y) - cfg.margin_m);
    } else {
      const double lim = 1.0 - detail::kAngularClamp;
      const double raw = cos(i, y);
      const double clamped = std::clamp(raw, -lim, lim);
      const double theta = std::acos(clamped);
      logits(i, y) = s * std::cos(theta + cfg.margin_m);
      target_slope[i] = (raw == clamped) ? s * std::sin(theta + cfg.margin_m) / std::sin(theta) : 0.0;
    }
  }

  auto terms = detail::softmax_cross_entropy(logits, batch.labels);
  Matrix grad_cos = std::move(terms.grad_logits);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) grad_cos(i, j) *= (j == batch.labels[i]) ? target_slope[i] : s;

  LossResult out;
  out.value = terms.value;
  const Matrix grad_x_hat = matmul(grad_cos, w_hat);
  out.grad_features = Matrix(n, x_hat.cols());
  for (std::size_t i = 0; i < n; ++i)
    detail::backprop_normalization(x_hat.row(i), norm(batch.features.row(i)), grad_x_hat.row(i),
                                   out.grad_features.row(i));
  if (want_weight_grad) {
    const Matrix grad_w_hat = transposed_matmul(grad_cos, x_hat);
    Matrix gw(c, w_hat.cols());
    for (std::size_t j = 0; j < c; ++j)
      detail::backprop_normalization(w_hat.row(j), norm(weights.row(j)), grad_w_hat.row(j), gw.row(j));
    out.grad_weights = std::move(gw);
  }
  return out;
}

struct CenterState {
  Matrix centers;  // c x d
  double update_rate = 0.5;
};

struct CenterLossResult {
  LossResult loss;
  CenterState updated;
};

/// 1/2 sum_i |x_i - c_{y_i}|^2 (summed, not averaged). Each class present in
/// the batch moves its center toward the class batch-mean by update_rate.
inline CenterLossResult center_loss(const FeatureBatch& batch, const CenterState& state) {
  if (!(state.update_rate > 0.0 && state.update_rate <= 1.0))
    throw Error(Errc::config_error, "center update_rate must lie in (0, 1]");
  validate_batch(batch, state.centers.rows(), state.centers.cols());
  const std::size_t n = batch.features.rows();
  const std::size_t d = batch.features.cols();
  const std::size_t c = state.centers.rows();

  CenterLossResult out{{}, state};
  out.loss.grad_features = Matrix(n, d);
  Matrix class_sum(c, d);
  std::vector<std::size_t> class_count(c, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = batch.labels[i];
    auto x = batch.features.row(i);
    auto ctr = state.centers.row(y);
    auto g = out.loss.grad_features.row(i);
    for (std::size_t t = 0; t < d; ++t) {
      g[t] = x[t] - ctr[t];
      total += g[t] * g[t];
      class_sum(y, t) += x[t];
    }
    ++class_count[y];
  }
  out.loss.value = 0.5 * total;
  for (std::size_t j = 0; j < c; ++j) {
    if (class_count[j] == 0) continue;
    auto ctr = out.updated.centers.row(j);
    for (std::size_t t = 0; t < d; ++t) {
      const double mean = class_sum(j, t) / static_cast<double>(class_count[j]);
      ctr[t] += state.update_rate * (mean - ctr[t]);
    }
  }
  return out;
}

inline void validate_centroids_for(const FeatureBatch& batch, const CentroidSet& centroids) {
  if (centroids.centers.cols() != batch.features.cols())
    throw Error(Errc::dimension_mismatch, "centroid dim " + std::to_string(centroids.centers.cols()) +
                                              " != feature dim " + std::to_string(batch.features.cols()));
}

/// Additive-margin softmax with the fixed centroid rows as classifier weights.
/// grad_weights is produced only when fine-tuning the centroids.
inline LossResult pedcc_am(const FeatureBatch& batch, const CentroidSet& centroids, const MarginConfig& cfg,
                           bool want_centroid_grad = false) {
  validate_centroids_for(batch, centroids);
  return am_softmax(batch, centroids.centers, cfg, want_centroid_grad);
}

/// (1/n) * 1/2 sum_i |x_hat_i - p_{y_i}|^2. With normalize_features the
/// distance is taken from the unit-normalised feature, otherwise from the raw one.
inline LossResult pedcc_mse(const FeatureBatch& batch, const CentroidSet& centroids,
                            bool normalize_features = true, bool want_centroid_grad = false) {
  validate_centroids_for(batch, centroids);
  validate_batch(batch, centroids.centers.rows(), centroids.centers.cols());
  const std::size_t n = batch.features.rows();
  const std::size_t d = batch.features.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix x = normalize_features ? l2_normalize_rows(batch.features) : batch.features;

  LossResult out;
  out.grad_features = Matrix(n, d);
  Matrix gc;
  if (want_centroid_grad) gc = Matrix(centroids.centers.rows(), d);
  double total = 0.0;
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = batch.labels[i];
    auto xi = x.row(i);
    auto p = centroids.centers.row(y);
    for (std::size_t t = 0; t < d; ++t) {
      diff[t] = xi[t] - p[t];
      total += diff[t] * diff[t];
      diff[t] *= inv_n;
    }
    if (normalize_features)
      detail::backprop_normalization(xi, norm(batch.features.row(i)), diff, out.grad_features.row(i));
    else
      std::copy(diff.begin(), diff.end(), out.grad_features.row(i).begin());
    if (want_centroid_grad)
      for (std::size_t t = 0; t < d; ++t) gc(y, t) -= diff[t];
  }
  out.value = 0.5 * total * inv_n;
  if (want_centroid_grad) out.grad_weights = std::move(gc);
  return out;
}

struct PedccLossConfig {
  MarginConfig margin;
  int root_n = 1;
  bool normalize_before_mse = true;
  // The root's derivative is evaluated at max(L_mse, root_floor).
  double root_floor = 1e-12;

  void validate() const {
    margin.validate();
    if (root_n < 1) throw Error(Errc::config_error, "root factor n must be >= 1");
  }
};

struct PedccLossParts {
  LossResult total;
  double am_value;
  double mse_value;
};

/// L_am + L_mse^(1/n), returning the two component values alongside the total.
inline PedccLossParts pedcc_loss_parts(const FeatureBatch& batch, const CentroidSet& centroids,
                                       const PedccLossConfig& cfg, bool want_centroid_grad = false) {
  cfg.validate();
  LossResult am = pedcc_am(batch, centroids, cfg.margin, want_centroid_grad);
  LossResult mse = pedcc_mse(batch, centroids, cfg.normalize_before_mse, want_centroid_grad);
  const double inv_root = 1.0 / static_cast<double>(cfg.root_n);
  const double rooted = std::pow(mse.value, inv_root);
  const double chain =
      cfg.root_n == 1 ? 1.0 : inv_root * std::pow(std::max(mse.value, cfg.root_floor), inv_root - 1.0);

  PedccLossParts out{{}, am.value, mse.value};
  out.total.value = am.value + rooted;
  out.total.grad_features = std::move(am.grad_features);
  {
    auto g = out.total.grad_features.data();
    auto gm = mse.grad_features.data();
    for (std::size_t t = 0; t < g.size(); ++t) g[t] += chain * gm[t];
  }
  if (want_centroid_grad) {
    Matrix gw = std::move(*am.grad_weights);
    auto g = gw.data();
    auto gm = mse.grad_weights->data();
    for (std::size_t t = 0; t < g.size(); ++t) g[t] += chain * gm[t];
    out.total.grad_weights = std::move(gw);
  }
  return out;
}

inline LossResult pedcc_loss(const FeatureBatch& batch, const CentroidSet& centroids,
                             const PedccLossConfig& cfg, bool want_centroid_grad = false) {
  return pedcc_loss_parts(batch, centroids, cfg, want_centroid_grad).total;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

using LossClosure = std::function<LossResult(const FeatureBatch&)>;

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Compares the closure's grad_features with central differences of its value,
/// one feature coordinate at a time. Relative error uses the denominator
/// max(|a|, |b|, 1e-8).
inline GradientCheck check_gradient(const LossClosure& loss, const FeatureBatch& batch, double h = 1e-5) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw Error(Errc::invalid_argument, "step h must lie in [1e-7, 1e-3]");
  const Matrix analytic = loss(batch).grad_features;
  if (!analytic.same_shape(batch.features))
    throw Error(Errc::dimension_mismatch, "gradient shape does not match features");
  GradientCheck out;
  FeatureBatch probe = batch;
  for (std::size_t i = 0; i < batch.features.rows(); ++i)
    for (std::size_t t = 0; t < batch.features.cols(); ++t) {
      const double x0 = batch.features(i, t);
      probe.features(i, t) = x0 + h;
      const double up = loss(probe).value;
      probe.features(i, t) = x0 - h;
      const double down = loss(probe).value;
      probe.features(i, t) = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic(i, t), numeric);
      if (err > out.max_rel_error)
        out = {err, i, t, analytic(i, t), numeric};
    }
  return out;
}

}  // namespace pedcc
