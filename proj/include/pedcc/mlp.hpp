#pragma once

// Fully connected feature extractor: hidden layers use relu or tanh, the
// output layer is linear.

#include <cmath>
#include <string>
#include <vector>

#include "pedcc/numeric.hpp"

namespace pedcc {

enum class Activation { relu, tanh };

inline const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw Error(Errc::config_error, "unknown activation '" + s + "'");
}

struct DenseLayer {
  Matrix weights;            // out x in
  std::vector<double> bias;  // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpModel {
  std::vector<std::size_t> widths;  // d_in, hidden..., d_feat
  Activation activation = Activation::relu;
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }

  /// He-scaled (relu) or Glorot-scaled (tanh) Gaussian weights, zero biases.
  static MlpModel init(std::vector<std::size_t> widths, Activation activation, Rng& rng) {
    if (widths.size() < 2) throw Error(Errc::config_error, "an MLP needs at least input and output widths");
    for (std::size_t w : widths)
      if (w == 0) throw Error(Errc::config_error, "layer widths must be positive");
    MlpModel m;
    m.widths = std::move(widths);
    m.activation = activation;
    for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
      const std::size_t in = m.widths[l];
      const std::size_t out = m.widths[l + 1];
      const double scale = activation == Activation::relu ? std::sqrt(2.0 / static_cast<double>(in))
                                                          : std::sqrt(2.0 / static_cast<double>(in + out));
      DenseLayer layer{gaussian_matrix(rng, out, in), std::vector<double>(out, 0.0)};
      for (double& v : layer.weights.data()) v *= scale;
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  /// Throws Errc::config_error when widths and layer shapes disagree.
  void validate() const {
    if (widths.size() != layers.size() + 1 || widths.size() < 2)
      throw Error(Errc::config_error, "layer count does not match widths");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].weights.rows() != widths[l + 1] || layers[l].weights.cols() != widths[l] ||
          layers[l].bias.size() != widths[l + 1])
        throw Error(Errc::config_error, "layer " + std::to_string(l) + " shape does not chain");
    }
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weights.all_finite()) return false;
      for (double b : l.bias)
        if (!std::isfinite(b)) return false;
    }
    return true;
  }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // input seen by each layer
  std::vector<Matrix> pre_activations;
  Matrix output;
};

inline ForwardCache forward(const MlpModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim())
    throw Error(Errc::dimension_mismatch, "input has " + std::to_string(inputs.cols()) +
                                              " columns, model expects " + std::to_string(model.input_dim()));
  ForwardCache cache;
  Matrix current = inputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Matrix pre = matmul_transposed(current, layer.weights);
    for (std::size_t i = 0; i < pre.rows(); ++i) {
      auto r = pre.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
    }
    Matrix act = pre;
    if (l + 1 < model.layers.size()) {
      for (double& v : act.data())
        v = model.activation == Activation::relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
    }
    cache.layer_inputs.push_back(std::move(current));
    cache.pre_activations.push_back(std::move(pre));
    current = std::move(act);
  }
  cache.output = std::move(current);
  return cache;
}

inline Matrix extract_features(const MlpModel& model, const Matrix& inputs) {
  return forward(model, inputs).output;
}

struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> bias;
  Matrix inputs;
};

inline MlpGradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& grad_output) {
  if (!grad_output.same_shape(cache.output))
    throw Error(Errc::dimension_mismatch, "output gradient shape mismatch");
  const std::size_t depth = model.layers.size();
  MlpGradients g;
  g.weights.resize(depth);
  g.bias.resize(depth);
  Matrix upstream = grad_output;
  for (std::size_t l = depth; l-- > 0;) {
    if (l + 1 < depth) {
      const Matrix& pre = cache.pre_activations[l];
      auto u = upstream.data();
      auto p = pre.data();
      for (std::size_t t = 0; t < u.size(); ++t) {
        if (model.activation == Activation::relu) {
          if (!(p[t] > 0.0)) u[t] = 0.0;
        } else {
          const double th = std::tanh(p[t]);
          u[t] *= 1.0 - th * th;
        }
      }
    }
    g.weights[l] = transposed_matmul(upstream, cache.layer_inputs[l]);
    g.bias[l].assign(upstream.cols(), 0.0);
    for (std::size_t i = 0; i < upstream.rows(); ++i) {
      auto r = upstream.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) g.bias[l][j] += r[j];
    }
    upstream = matmul(upstream, model.layers[l].weights);
  }
  g.inputs = std::move(upstream);
  return g;
}

}  // namespace pedcc
