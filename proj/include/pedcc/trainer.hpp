#pragma once

// Mini-batch SGD training of an MlpModel under softmax, additive-margin,
// center, or fixed-centroid loss. With the fixed-centroid loss the centroids
// stay frozen unless a fine-tune epoch is configured.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pedcc/centroids.hpp"
#include "pedcc/dataset.hpp"
#include "pedcc/losses.hpp"
#include "pedcc/metrics.hpp"
#include "pedcc/mlp.hpp"
#include "pedcc/numeric.hpp"

namespace pedcc {

enum class LossKind { softmax, am, center, pedcc };

inline const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::softmax: return "softmax";
    case LossKind::am: return "am";
    case LossKind::center: return "center";
    case LossKind::pedcc: return "pedcc";
  }
  return "unknown";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "softmax") return LossKind::softmax;
  if (s == "am") return LossKind::am;
  if (s == "center") return LossKind::center;
  if (s == "pedcc") return LossKind::pedcc;
  throw Error(Errc::config_error, "unknown loss '" + s + "'");
}

struct LossSpec {
  LossKind kind = LossKind::pedcc;
  MarginConfig margin;
  int root_n = 1;
  bool normalize_before_mse = true;
  // Objective is softmax_ce + center_weight * L_center / batch_size.
  double center_weight = 0.1;
  double center_update_rate = 0.5;
};

struct TrainPlan {
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // (epoch, multiplier): from that 1-based epoch on, lr = learning_rate * multiplier.
  std::vector<std::pair<std::size_t, double>> lr_schedule;
  // Centroids are fine-tuned during every epoch after this many epochs.
  std::optional<std::size_t> finetune_epoch;
  double finetune_lr = 1e-3;
  LossSpec loss;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw Error(Errc::config_error, "batch_size must be positive");
    if (!(learning_rate > 0.0)) throw Error(Errc::config_error, "learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::config_error, "momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw Error(Errc::config_error, "weight_decay must be non-negative");
    if (finetune_epoch && *finetune_epoch >= epochs)
      throw Error(Errc::config_error, "finetune_epoch (" + std::to_string(*finetune_epoch) +
                                          ") must be smaller than epochs (" + std::to_string(epochs) + ")");
    if (finetune_epoch && !(finetune_lr > 0.0)) throw Error(Errc::config_error, "finetune_lr must be positive");
    if (finetune_epoch && loss.kind != LossKind::pedcc)
      throw Error(Errc::config_error, "centroid fine-tuning applies only to the pedcc loss");
    for (const auto& [e, mult] : lr_schedule)
      if (!(mult > 0.0)) throw Error(Errc::config_error, "lr_schedule multipliers must be positive");
    if (loss.root_n < 1) throw Error(Errc::config_error, "root factor n must be >= 1");
    loss.margin.validate();
  }

  double lr_at(std::size_t epoch) const {
    double mult = 1.0;
    std::size_t from = 0;
    for (const auto& [e, m] : lr_schedule)
      if (e <= epoch && e >= from) {
        from = e;
        mult = m;
      }
    return learning_rate * mult;
  }
};

/// Velocity update v <- momentum v + grad + weight_decay param, then
/// param <- param - lr v.
inline void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                     double lr, double momentum, double weight_decay) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw Error(Errc::dimension_mismatch, "sgd_step shapes differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i] + weight_decay * params[i];
    params[i] -= lr * velocity[i];
  }
}

/// Trainable classifier for the baselines: softmax and center use W and b,
/// additive-margin uses W only. Unused for the fixed-centroid loss.
struct ClassifierHead {
  Matrix weights;  // c x d_feat
  std::vector<double> bias;
  Matrix centers;  // center-loss state

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

inline ClassifierHead init_head(LossKind kind, std::size_t c, std::size_t d, Rng& rng) {
  ClassifierHead h;
  if (kind == LossKind::pedcc) return h;
  h.weights = gaussian_matrix(rng, c, d);
  for (double& v : h.weights.data()) v *= std::sqrt(1.0 / static_cast<double>(d));
  if (kind != LossKind::am) h.bias.assign(c, 0.0);
  if (kind == LossKind::center) h.centers = Matrix(c, d);
  return h;
}

/// Directions each class is scored against: the centroids for the pedcc
/// loss, the classifier weight rows otherwise.
inline const Matrix& reference_directions(LossKind kind, const ClassifierHead& head, const CentroidSet& centroids) {
  return kind == LossKind::pedcc ? centroids.centers : head.weights;
}

inline std::vector<std::size_t> predict_classes(LossKind kind, const Matrix& features, const ClassifierHead& head,
                                                const CentroidSet& centroids) {
  if (kind == LossKind::softmax || kind == LossKind::center) {
    Matrix logits = matmul_transposed(features, head.weights);
    std::vector<std::size_t> out(features.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits(i, j) + head.bias[j] > logits(i, best) + head.bias[best]) best = j;
      out[i] = best;
    }
    return out;
  }
  return nearest_centroid_predictions(features, reference_directions(kind, head, centroids));
}

struct BatchGradients {
  double loss = 0.0;
  MlpGradients model;
  std::optional<Matrix> head_weights;
  std::optional<std::vector<double>> head_bias;
  std::optional<Matrix> centroids;
  std::optional<Matrix> updated_centers;
};

/// Objective value on one batch and its gradient w.r.t. every trainable
/// parameter (centroids only when fine_tune_centroids is set).
inline BatchGradients compute_batch_gradients(const MlpModel& model, const ClassifierHead& head,
                                              const CentroidSet& centroids, const LossSpec& spec,
                                              const Matrix& inputs, const std::vector<std::size_t>& labels,
                                              bool fine_tune_centroids = false,
                                              double center_update_rate = 0.5) {
  const ForwardCache cache = forward(model, inputs);
  const FeatureBatch batch{cache.output, labels};
  BatchGradients out;
  LossResult loss;
  switch (spec.kind) {
    case LossKind::softmax:
      loss = softmax_ce(batch, head.weights, std::span<const double>(head.bias), true);
      out.head_weights = std::move(loss.grad_weights);
      out.head_bias = std::move(loss.grad_bias);
      break;
    case LossKind::am:
      loss = am_softmax(batch, head.weights, spec.margin, true);
      out.head_weights = std::move(loss.grad_weights);
      break;
    case LossKind::center: {
      loss = softmax_ce(batch, head.weights, std::span<const double>(head.bias), true);
      auto cl = center_loss(batch, CenterState{head.centers, center_update_rate});
      const double w = spec.center_weight / static_cast<double>(labels.size());
      loss.value += w * cl.loss.value;
      auto g = loss.grad_features.data();
      auto gc = cl.loss.grad_features.data();
      for (std::size_t t = 0; t < g.size(); ++t) g[t] += w * gc[t];
      out.head_weights = std::move(loss.grad_weights);
      out.head_bias = std::move(loss.grad_bias);
      out.updated_centers = std::move(cl.updated.centers);
      break;
    }
    case LossKind::pedcc: {
      PedccLossConfig cfg{spec.margin, spec.root_n, spec.normalize_before_mse};
      loss = pedcc_loss(batch, centroids, cfg, fine_tune_centroids);
      if (fine_tune_centroids) out.centroids = std::move(loss.grad_weights);
      break;
    }
  }
  out.loss = loss.value;
  out.model = backward(model, cache, loss.grad_features);
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = std::nan("");
  double mean_cos = 0.0;
  double seconds = 0.0;
  bool centroids_updated = false;
  double max_centroid_norm_error = 0.0;
  std::vector<double> centroid_drift_deg;  // angle of each row from its starting direction
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::size_t epoch, TrainLog partial)
      : Error(Errc::non_finite_loss, "loss became non-finite in epoch " + std::to_string(epoch)),
        epoch_(epoch),
        partial_(std::move(partial)) {}

  std::size_t epoch() const noexcept { return epoch_; }
  const TrainLog& partial_log() const noexcept { return partial_; }

 private:
  std::size_t epoch_;
  TrainLog partial_;
};

struct TrainResult {
  MlpModel model;
  CentroidSet centroids;
  ClassifierHead head;
  TrainLog log;
};

/// Called after each epoch; may inspect the current state.
using EpochObserver = std::function<void(const EpochRecord&, const CentroidSet&)>;

inline TrainResult train(MlpModel model, const LabeledDataset& data, const LabeledDataset* eval_data,
                         CentroidSet centroids, const TrainPlan& plan, const EpochObserver& observer = {}) {
  plan.validate();
  model.validate();
  data.validate();
  if (data.inputs.cols() != model.input_dim())
    throw Error(Errc::config_error, "dataset has " + std::to_string(data.inputs.cols()) +
                                        " inputs, model expects " + std::to_string(model.input_dim()));
  if (centroids.dim != model.output_dim() || centroids.centers.cols() != model.output_dim())
    throw Error(Errc::config_error, "centroid dim " + std::to_string(centroids.dim) + " != model output dim " +
                                        std::to_string(model.output_dim()));
  if (data.num_classes > centroids.num_classes)
    throw Error(Errc::config_error, "dataset has more classes than there are centroids");
  if (eval_data) {
    eval_data->validate();
    if (eval_data->inputs.cols() != model.input_dim())
      throw Error(Errc::config_error, "eval dataset input dim mismatch");
  }

  const LossKind kind = plan.loss.kind;
  const std::size_t c = centroids.num_classes;
  Rng rng(plan.seed);
  Rng head_rng = rng.split();
  Rng order_rng = rng.split();
  ClassifierHead head = init_head(kind, c, model.output_dim(), head_rng);
  const Matrix initial_centers = centroids.centers;

  std::vector<Matrix> vel_w;
  std::vector<std::vector<double>> vel_b;
  for (const auto& l : model.layers) {
    vel_w.emplace_back(l.weights.rows(), l.weights.cols());
    vel_b.emplace_back(l.bias.size(), 0.0);
  }
  Matrix vel_head_w = head.weights.empty() ? Matrix() : Matrix(head.weights.rows(), head.weights.cols());
  std::vector<double> vel_head_b(head.bias.size(), 0.0);
  Matrix vel_centroids(centroids.centers.rows(), centroids.centers.cols());

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainLog log;
  bool centroids_touched = false;

  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = plan.lr_at(epoch);
    const bool fine_tune = plan.finetune_epoch && epoch > *plan.finetune_epoch;
    order_rng.shuffle(order);
    double loss_sum = 0.0;

    for (std::size_t begin = 0; begin < order.size(); begin += plan.batch_size) {
      const std::size_t end = std::min(order.size(), begin + plan.batch_size);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      const LabeledDataset batch = subset(data, rows);
      BatchGradients g = compute_batch_gradients(model, head, centroids, plan.loss, batch.inputs, batch.labels,
                                                 fine_tune, plan.loss.center_update_rate);
      if (!std::isfinite(g.loss)) throw NonFiniteLossError(epoch, log);
      loss_sum += g.loss * static_cast<double>(rows.size());

      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        sgd_step(model.layers[l].weights.data(), g.model.weights[l].data(), vel_w[l].data(), lr, plan.momentum,
                 plan.weight_decay);
        sgd_step(model.layers[l].bias, g.model.bias[l], vel_b[l], lr, plan.momentum, 0.0);
      }
      if (g.head_weights)
        sgd_step(head.weights.data(), g.head_weights->data(), vel_head_w.data(), lr, plan.momentum,
                 plan.weight_decay);
      if (g.head_bias) sgd_step(head.bias, *g.head_bias, vel_head_b, lr, plan.momentum, 0.0);
      if (g.updated_centers) head.centers = std::move(*g.updated_centers);
      if (g.centroids) {
        sgd_step(centroids.centers.data(), g.centroids->data(), vel_centroids.data(), plan.finetune_lr,
                 plan.momentum, 0.0);
        centroids.centers = l2_normalize_rows(centroids.centers);
        centroids_touched = true;
      }
      if (!model.all_finite()) throw NonFiniteLossError(epoch, log);
    }
    if (centroids_touched) refresh_centroid_metadata(centroids);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(data.size());
    const Matrix train_features = extract_features(model, data.inputs);
    rec.train_acc = accuracy(predict_classes(kind, train_features, head, centroids), data.labels);
    rec.mean_cos = cosine_to_own_reference(train_features, data.labels, reference_directions(kind, head, centroids)).mean;
    if (eval_data && eval_data->size() > 0) {
      const Matrix ef = extract_features(model, eval_data->inputs);
      rec.eval_acc = accuracy(predict_classes(kind, ef, head, centroids), eval_data->labels);
    }
    rec.centroids_updated = fine_tune;
    for (std::size_t j = 0; j < centroids.centers.rows(); ++j) {
      rec.max_centroid_norm_error = std::max(rec.max_centroid_norm_error, std::abs(norm(centroids.centers.row(j)) - 1.0));
      rec.centroid_drift_deg.push_back(cosine_to_degrees(dot(centroids.centers.row(j), initial_centers.row(j))));
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
    if (observer) observer(rec, centroids);
  }
  return {std::move(model), std::move(centroids), std::move(head), std::move(log)};
}

}  // namespace pedcc
