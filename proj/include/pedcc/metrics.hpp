#pragma once

// Feature-space quality measures: scatter traces, nearest-centroid accuracy,
// cosine statistics, pair verification, and a small PCA for plot export.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pedcc/centroids.hpp"
#include "pedcc/numeric.hpp"

namespace pedcc {

struct ScatterTraces {
  double within = 0.0;
  double between = 0.0;

  // within / between; lower means tighter clusters
  double ratio() const { return within / between; }
};

/// Classical scatter traces: within = sum_i P_i E_i|x - mu_i|^2 and
/// between = sum_i P_i |mu_i - mu|^2 with mu = sum_i P_i mu_i. Priors default
/// to the empirical class frequencies.
inline ScatterTraces scatter_metrics(const Matrix& features, std::span<const std::size_t> labels,
                                     std::size_t num_classes,
                                     std::optional<std::span<const double>> priors = std::nullopt) {
  if (labels.size() != features.rows()) throw Error(Errc::dimension_mismatch, "label count mismatch");
  if (priors && priors->size() != num_classes)
    throw Error(Errc::dimension_mismatch, "prior count does not match class count");
  const std::size_t d = features.cols();
  Matrix means(num_classes, d);
  std::vector<std::size_t> count(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw Error(Errc::label_range, "label outside class range");
    auto x = features.row(i);
    auto m = means.row(labels[i]);
    for (std::size_t t = 0; t < d; ++t) m[t] += x[t];
    ++count[labels[i]];
  }
  for (std::size_t j = 0; j < num_classes; ++j) {
    if (count[j] == 0) throw Error(Errc::empty_class, "class " + std::to_string(j) + " has no samples");
    for (double& v : means.row(j)) v /= static_cast<double>(count[j]);
  }
  std::vector<double> p(num_classes);
  for (std::size_t j = 0; j < num_classes; ++j)
    p[j] = priors ? (*priors)[j] : static_cast<double>(count[j]) / static_cast<double>(labels.size());

  std::vector<double> class_var(num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    class_var[labels[i]] += squared_distance(features.row(i), means.row(labels[i]));

  std::vector<double> mu(d, 0.0);
  for (std::size_t j = 0; j < num_classes; ++j)
    for (std::size_t t = 0; t < d; ++t) mu[t] += p[j] * means(j, t);

  ScatterTraces out;
  for (std::size_t j = 0; j < num_classes; ++j) {
    out.within += p[j] * class_var[j] / static_cast<double>(count[j]);
    out.between += p[j] * squared_distance(means.row(j), mu);
  }
  return out;
}

/// Index of the reference row with the largest cosine; ties go to the lowest index.
inline std::vector<std::size_t> nearest_centroid_predictions(const Matrix& features, const Matrix& references) {
  if (features.cols() != references.cols())
    throw Error(Errc::dimension_mismatch, "feature dim does not match reference dim");
  const Matrix cos = matmul_transposed(l2_normalize_rows(features), l2_normalize_rows(references));
  std::vector<std::size_t> out(features.rows());
  for (std::size_t i = 0; i < cos.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cos.cols(); ++j)
      if (cos(i, j) > cos(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

inline double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

inline double nearest_centroid_accuracy(const Matrix& features, std::span<const std::size_t> labels,
                                        const Matrix& references) {
  return accuracy(nearest_centroid_predictions(features, references), labels);
}

inline double nearest_centroid_accuracy(const Matrix& features, std::span<const std::size_t> labels,
                                        const CentroidSet& centroids) {
  return nearest_centroid_accuracy(features, labels, centroids.centers);
}

struct CosineStats {
  double mean = 0.0;
  std::vector<double> per_class;  // NaN for classes without samples
};

/// Cosine of every feature to the reference row of its own class.
inline CosineStats cosine_to_own_reference(const Matrix& features, std::span<const std::size_t> labels,
                                           const Matrix& references) {
  if (features.cols() != references.cols())
    throw Error(Errc::dimension_mismatch, "feature dim does not match reference dim");
  const Matrix x = l2_normalize_rows(features);
  const Matrix r = l2_normalize_rows(references);
  CosineStats out;
  std::vector<double> sum(references.rows(), 0.0);
  std::vector<std::size_t> count(references.rows(), 0);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double c = dot(x.row(i), r.row(labels[i]));
    total += c;
    sum[labels[i]] += c;
    ++count[labels[i]];
  }
  out.mean = labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
  out.per_class.resize(sum.size());
  for (std::size_t j = 0; j < sum.size(); ++j)
    out.per_class[j] = count[j] ? sum[j] / static_cast<double>(count[j]) : std::nan("");
  return out;
}

/// Unit-normalised per-class mean feature.
inline Matrix class_mean_directions(const Matrix& features, std::span<const std::size_t> labels,
                                    std::size_t num_classes) {
  Matrix means(num_classes, features.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto m = means.row(labels[i]);
    auto x = features.row(i);
    for (std::size_t t = 0; t < x.size(); ++t) m[t] += x[t];
  }
  return l2_normalize_rows(means);
}

struct EvalReport {
  double within_class_scatter_trace = 0.0;
  double between_class_scatter_trace = 0.0;
  double separability_ratio = 0.0;
  double nearest_centroid_accuracy = 0.0;
  double mean_cos_to_own_centroid = 0.0;
  std::vector<double> per_class_mean_cos;
};

/// Scatter traces are taken on the unit-normalised features (cosine space);
/// separability_ratio is between / within (higher is better).
inline EvalReport evaluate_features(const Matrix& features, std::span<const std::size_t> labels,
                                    const Matrix& references) {
  const std::size_t c = references.rows();
  const ScatterTraces sc = scatter_metrics(l2_normalize_rows(features), labels, c);
  const CosineStats cs = cosine_to_own_reference(features, labels, references);
  EvalReport r;
  r.within_class_scatter_trace = sc.within;
  r.between_class_scatter_trace = sc.between;
  r.separability_ratio = sc.between / sc.within;
  r.nearest_centroid_accuracy = nearest_centroid_accuracy(features, labels, references);
  r.mean_cos_to_own_centroid = cs.mean;
  r.per_class_mean_cos = cs.per_class;
  return r;
}

struct VerificationPair {
  std::size_t index_a;
  std::size_t index_b;
  bool same_class;
};

struct PairVerification {
  double accuracy = 0.0;
  double threshold = 0.0;  // predict "same" when similarity > threshold
};

/// Sweeps every cut between distinct sorted scores (plus one below the minimum
/// and one above the maximum) and returns the best accuracy, keeping the lowest
/// threshold on ties. Depends only on the score ranks.
inline PairVerification pair_verification_scores(std::span<const double> scores, const std::vector<bool>& same) {
  if (scores.empty()) throw Error(Errc::invalid_argument, "no pairs to verify");
  if (scores.size() != same.size()) throw Error(Errc::dimension_mismatch, "score/verdict count mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const std::size_t positives = static_cast<std::size_t>(std::count(same.begin(), same.end(), true));
  // Threshold below everything: all predicted same.
  std::size_t correct = positives;
  PairVerification best{static_cast<double>(correct) / static_cast<double>(n), scores[order.front()] - 1.0};
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      // this score now falls at or below the cut
      if (same[order[j]])
        --correct;
      else
        ++correct;
      ++j;
    }
    const double cut = j < n ? 0.5 * (scores[order[i]] + scores[order[j]]) : scores[order[i]] + 1.0;
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    if (acc > best.accuracy) best = {acc, cut};
    i = j;
  }
  return best;
}

inline PairVerification pair_verification(const Matrix& features, const std::vector<VerificationPair>& pairs) {
  if (pairs.empty()) throw Error(Errc::invalid_argument, "no pairs to verify");
  const Matrix x = l2_normalize_rows(features);
  std::vector<double> scores;
  std::vector<bool> same;
  for (const auto& p : pairs) {
    if (p.index_a >= x.rows() || p.index_b >= x.rows())
      throw Error(Errc::invalid_argument, "pair index out of range");
    scores.push_back(dot(x.row(p.index_a), x.row(p.index_b)));
    same.push_back(p.same_class);
  }
  return pair_verification_scores(scores, same);
}

struct Projection {
  Matrix components;  // k x d, unit rows, descending variance
  std::vector<double> variances;
  std::vector<double> mean;
};

/// Top-k principal axes by power iteration with deflation on the covariance.
/// Each axis is sign-fixed so its largest-magnitude entry is positive.
inline Projection principal_components(const Matrix& points, std::size_t k, std::uint64_t seed = 0) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (k > d) throw Error(Errc::invalid_argument, "cannot take more components than dimensions");
  if (n == 0) throw Error(Errc::invalid_argument, "no points to project");
  Projection out;
  out.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < d; ++t) out.mean[t] += points(i, t) / static_cast<double>(n);
  Matrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double da = points(i, a) - out.mean[a];
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += da * (points(i, b) - out.mean[b]) / static_cast<double>(n);
    }
  const Matrix full_cov = cov;
  Rng rng(seed);
  out.components = Matrix(k, d);
  std::vector<double> v(d), w(d);
  for (std::size_t c = 0; c < k; ++c) {
    for (double& x : v) x = rng.normal();
    double vn = norm(v);
    for (double& x : v) x /= vn;
    for (int it = 0; it < 5000; ++it) {
      for (std::size_t a = 0; a < d; ++a) w[a] = dot(cov.row(a), v);
      const double wn = norm(w);
      if (wn < 1e-300) break;  // remaining variance is zero
      double change = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double nv = w[a] / wn;
        change = std::max(change, std::abs(nv - v[a]));
        v[a] = nv;
      }
      if (change < 1e-13) break;
    }
    const auto peak = std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (*peak < 0)
      for (double& x : v) x = -x;
    for (std::size_t a = 0; a < d; ++a) w[a] = dot(cov.row(a), v);
    const double lambda = std::max(0.0, dot(v, w));
    out.variances.push_back(lambda);
    std::copy(v.begin(), v.end(), out.components.row(c).begin());
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov(a, b) -= lambda * v[a] * v[b];
  }
  // Near-equal eigenvalues converge slowly, so order by the variance each axis
  // actually captures on the undeflated covariance.
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t a = 0; a < d; ++a) w[a] = dot(full_cov.row(a), out.components.row(c));
    out.variances[c] = std::max(0.0, dot(out.components.row(c), w));
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.variances[a] > out.variances[b]; });
  Projection sorted{Matrix(k, d), {}, out.mean};
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(out.components.row(order[c]).begin(), out.components.row(order[c]).end(), sorted.components.row(c).begin());
    sorted.variances.push_back(out.variances[order[c]]);
  }
  return sorted;
}

inline Matrix project(const Matrix& points, const Projection& p) {
  Matrix centered = points;
  for (std::size_t i = 0; i < centered.rows(); ++i)
    for (std::size_t t = 0; t < centered.cols(); ++t) centered(i, t) -= p.mean[t];
  return matmul_transposed(centered, p.components);
}

}  // namespace pedcc
