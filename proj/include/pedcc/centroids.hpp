#pragma once

// Evenly distributed class centroids on the unit hypersphere, obtained by
// letting c mutually repelling charges settle under a distance^(-k) potential.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "pedcc/numeric.hpp"

namespace pedcc {

struct GenConfig {
  std::size_t max_iterations = 20000;
  double step_size = 0.05;
  double step_decay = 1.0;
  double force_exponent = 1.0;
  double convergence_tol = 1e-7;

  void validate() const {
    if (max_iterations == 0) throw Error(Errc::config_error, "max_iterations must be positive");
    if (!(step_size > 0.0)) throw Error(Errc::config_error, "step_size must be positive");
    if (!(step_decay > 0.0 && step_decay <= 1.0))
      throw Error(Errc::config_error, "step_decay must lie in (0, 1]");
    if (!(force_exponent > 0.0)) throw Error(Errc::config_error, "force_exponent must be positive");
    if (!(convergence_tol > 0.0)) throw Error(Errc::config_error, "convergence_tol must be positive");
    if (!(convergence_tol < step_size))
      throw Error(Errc::config_error, "convergence_tol must be smaller than step_size");
  }
};

enum class Termination { converged, stalled, max_iterations };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::stalled: return "stalled";
    case Termination::max_iterations: return "max_iterations";
  }
  return "unknown";
}

struct CentroidSet {
  Matrix centers;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  double force_exponent = 1.0;
  double final_energy = 0.0;
  std::size_t iterations_run = 0;
  double min_pairwise_angle_deg = 0.0;
  // False when generation hit max_iterations; the best configuration so far is kept.
  bool converged = true;

  friend bool operator==(const CentroidSet&, const CentroidSet&) = default;
};

inline double cosine_to_degrees(double c) {
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

inline double min_pairwise_angle_deg(const Matrix& points) {
  const Matrix cos = pairwise_cosines(points);
  double max_cos = -1.0;
  for (std::size_t i = 0; i < cos.rows(); ++i)
    for (std::size_t j = i + 1; j < cos.cols(); ++j) max_cos = std::max(max_cos, cos(i, j));
  return cosine_to_degrees(max_cos);
}

/// Checks the structural invariants of a centroid set: shape agreement, c >= 2,
/// d >= 2, unit rows within `norm_tol`, distinct rows, and a consistent
/// min_pairwise_angle_deg.
inline void validate_centroid_set(const CentroidSet& cs, double norm_tol = 1e-9) {
  if (cs.num_classes < 2 || cs.dim < 2)
    throw Error(Errc::schema_error, "centroid set needs num_classes >= 2 and dim >= 2");
  if (cs.centers.rows() != cs.num_classes || cs.centers.cols() != cs.dim)
    throw Error(Errc::schema_error, "centers shape does not match num_classes x dim");
  for (std::size_t r = 0; r < cs.centers.rows(); ++r) {
    const double n = norm(cs.centers.row(r));
    if (std::abs(n - 1.0) > norm_tol)
      throw Error(Errc::schema_error,
                  "centroid row " + std::to_string(r) + " is not unit norm (" + std::to_string(n) + ")");
  }
  const double angle = min_pairwise_angle_deg(cs.centers);
  if (!(angle > 0.0)) throw Error(Errc::schema_error, "centroid rows are not pairwise distinct");
  if (std::abs(angle - cs.min_pairwise_angle_deg) > 1e-9)
    throw Error(Errc::schema_error, "min_pairwise_angle_deg disagrees with centers");
}

inline constexpr double kCoincidentDistance = 1e-12;

/// Riesz energy sum_{i<j} |p_i - p_j|^(-k).
inline double energy(const Matrix& points, double k) {
  double e = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i)
    for (std::size_t j = i + 1; j < points.rows(); ++j) {
      const double r = std::sqrt(squared_distance(points.row(i), points.row(j)));
      if (r < kCoincidentDistance)
        throw Error(Errc::coincident_points,
                    "points " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
      e += std::pow(r, -k);
    }
  return e;
}

/// Net repulsive force per point, reduced to its component tangent to the sphere.
inline Matrix tangential_forces(const Matrix& points, double k) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Matrix force(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto fi = force.row(i);
    auto pi = points.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      auto pj = points.row(j);
      const double r2 = squared_distance(pi, pj);
      const double r = std::sqrt(r2);
      if (r < kCoincidentDistance)
        throw Error(Errc::coincident_points,
                    "points " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
      // -d/dp_i of r^-k is k r^(-k-2) (p_i - p_j).
      const double w = k * std::pow(r, -k - 2.0);
      for (std::size_t t = 0; t < d; ++t) fi[t] += w * (pi[t] - pj[t]);
    }
    const double radial = dot(fi, pi);
    for (std::size_t t = 0; t < d; ++t) fi[t] -= radial * pi[t];
  }
  return force;
}

namespace detail {

inline Matrix step_along(const Matrix& points, const Matrix& force, double step) {
  Matrix out = points;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto o = out.row(i);
    auto f = force.row(i);
    for (std::size_t t = 0; t < o.size(); ++t) o[t] += step * f[t];
    const double n = norm(o);
    for (double& v : o) v /= n;
  }
  return out;
}

inline double max_displacement(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    worst = std::max(worst, std::sqrt(squared_distance(a.row(i), b.row(i))));
  return worst;
}

}  // namespace detail

/// One explicit step of the charge dynamics at cfg.step_size, with the result
/// projected back onto the sphere. A zero step size returns the input.
inline Matrix repulsion_step(const Matrix& points, const GenConfig& cfg) {
  if (cfg.step_size < 0.0) throw Error(Errc::config_error, "step_size must be non-negative");
  const Matrix force = tangential_forces(points, cfg.force_exponent);
  if (cfg.step_size == 0.0) return points;
  return detail::step_along(points, force, cfg.step_size);
}

/// Observation of one accepted iteration of generate().
struct GenTrace {
  std::size_t iteration;
  double energy;
  double step;
  double max_displacement;
  const Matrix& points;
};

using GenObserver = std::function<void(const GenTrace&)>;

/// Gaussian rows projected to the sphere; rows closer than 1e-6 to an earlier
/// row are redrawn.
inline Matrix random_sphere_points(Rng& rng, std::size_t c, std::size_t d) {
  Matrix points(c, d);
  for (std::size_t i = 0; i < c; ++i) {
    for (;;) {
      auto row = points.row(i);
      for (double& v : row) v = rng.normal();
      const double n = norm(row);
      if (!(n > kZeroRowNorm)) continue;
      for (double& v : row) v /= n;
      bool clash = false;
      for (std::size_t j = 0; j < i && !clash; ++j)
        clash = std::sqrt(squared_distance(row, points.row(j))) < 1e-6;
      if (!clash) break;
    }
  }
  return points;
}

struct GenOutcome {
  CentroidSet centroids;
  double initial_energy;
  Termination termination;
};

/// Runs the charge dynamics with backtracking: a step that would raise the
/// energy is retried at half the step size, so accepted iterations never
/// increase it. Stops once the largest per-point displacement of an accepted
/// step drops below cfg.convergence_tol, or when no step size down to 2^-60 of
/// the current one lowers the energy (stalled), or after max_iterations.
inline GenOutcome generate_detailed(std::size_t c, std::size_t d, std::uint64_t seed,
                                    const GenConfig& cfg, const GenObserver& observer = {}) {
  if (c < 2) throw Error(Errc::invalid_argument, "number of classes must satisfy c >= 2");
  if (d < 2) throw Error(Errc::invalid_argument, "dimension must satisfy d >= 2");
  cfg.validate();

  Rng rng(seed);
  Matrix points = random_sphere_points(rng, c, d);
  const double k = cfg.force_exponent;
  double current = energy(points, k);
  const double initial = current;
  double step = cfg.step_size;
  Termination termination = Termination::max_iterations;
  std::size_t iterations = 0;

  while (iterations < cfg.max_iterations) {
    const Matrix force = tangential_forces(points, k);
    Matrix candidate;
    double candidate_energy = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int halvings = 0; halvings <= 60; ++halvings) {
      candidate = detail::step_along(points, force, step);
      candidate_energy = energy(candidate, k);
      if (candidate_energy <= current) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      termination = Termination::stalled;
      break;
    }
    const double moved = detail::max_displacement(points, candidate);
    points = std::move(candidate);
    current = candidate_energy;
    ++iterations;
    if (observer) observer(GenTrace{iterations, current, step, moved, points});
    if (moved < cfg.convergence_tol) {
      termination = Termination::converged;
      break;
    }
    step *= cfg.step_decay;
  }

  CentroidSet cs;
  cs.centers = std::move(points);
  cs.num_classes = c;
  cs.dim = d;
  cs.seed = seed;
  cs.force_exponent = k;
  cs.final_energy = current;
  cs.iterations_run = iterations;
  cs.min_pairwise_angle_deg = min_pairwise_angle_deg(cs.centers);
  cs.converged = termination != Termination::max_iterations;
  return {std::move(cs), initial, termination};
}

inline CentroidSet generate(std::size_t c, std::size_t d, std::uint64_t seed,
                            const GenConfig& cfg = {}) {
  return generate_detailed(c, d, seed, cfg).centroids;
}

struct CentroidSummary {
  std::size_t num_classes;
  std::size_t dim;
  double min_angle_deg;
  double mean_angle_deg;
  double max_angle_deg;
  double energy;
  std::vector<double> row_norms;
  std::size_t iterations_run;
  bool converged;
};

inline CentroidSummary inspect(const CentroidSet& cs) {
  const Matrix cos = pairwise_cosines(cs.centers);
  double lo = 180.0, hi = 0.0, sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < cos.rows(); ++i)
    for (std::size_t j = i + 1; j < cos.cols(); ++j) {
      const double a = cosine_to_degrees(cos(i, j));
      lo = std::min(lo, a);
      hi = std::max(hi, a);
      sum += a;
      ++pairs;
    }
  return {cs.num_classes,
          cs.dim,
          lo,
          pairs ? sum / static_cast<double>(pairs) : 0.0,
          hi,
          energy(cs.centers, cs.force_exponent),
          row_norms(cs.centers),
          cs.iterations_run,
          cs.converged};
}

/// Rebuilds derived fields after the centers were modified in place.
inline void refresh_centroid_metadata(CentroidSet& cs) {
  cs.final_energy = energy(cs.centers, cs.force_exponent);
  cs.min_pairwise_angle_deg = min_pairwise_angle_deg(cs.centers);
}

}  // namespace pedcc
