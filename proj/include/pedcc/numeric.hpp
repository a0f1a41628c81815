#pragma once

// Dense row-major matrices, the error type shared by the whole library, and a
// portable seeded random source.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pedcc {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  zero_row,
  coincident_points,
  non_finite,
  parse_error,
  label_range,
  bad_magic,
  count_mismatch,
  truncated,
  format_version_mismatch,
  schema_error,
  empty_class,
  non_finite_loss,
  config_error,
  io_error,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::zero_row: return "ZeroRow";
    case Errc::coincident_points: return "CoincidentPoints";
    case Errc::non_finite: return "NonFinite";
    case Errc::parse_error: return "ParseError";
    case Errc::label_range: return "LabelRange";
    case Errc::bad_magic: return "BadMagic";
    case Errc::count_mismatch: return "CountMismatch";
    case Errc::truncated: return "Truncated";
    case Errc::format_version_mismatch: return "FormatVersionMismatch";
    case Errc::schema_error: return "SchemaError";
    case Errc::empty_class: return "EmptyClass";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (!std::isfinite(fill)) throw Error(Errc::non_finite, "matrix fill value is not finite");
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw Error(Errc::dimension_mismatch, "data length " + std::to_string(data_.size()) +
                                                " != " + std::to_string(rows_) + "x" +
                                                std::to_string(cols_));
    if (!all_finite()) throw Error(Errc::non_finite, "matrix data contains NaN or Inf");
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw Error(Errc::dimension_mismatch, "ragged row list");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline constexpr double kZeroRowNorm = 1e-30;

/// Scales every row to unit Euclidean norm. Throws Errc::zero_row when a row
/// norm falls below 1e-30.
inline Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = norm(m.row(r));
    if (!(n >= kZeroRowNorm))
      throw Error(Errc::zero_row, "row " + std::to_string(r) + " has norm " + std::to_string(n));
    for (double& v : out.row(r)) v /= n;
  }
  return out;
}

inline std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = norm(m.row(r));
  return out;
}

/// Symmetric matrix of row-to-row cosines. The upper triangle is computed and
/// mirrored so that out(i,j) == out(j,i) holds exactly.
inline Matrix pairwise_cosines(const Matrix& m) {
  const Matrix u = l2_normalize_rows(m);
  Matrix out(m.rows(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out(i, i) = dot(u.row(i), u.row(i));
    for (std::size_t j = i + 1; j < m.rows(); ++j) {
      const double c = dot(u.row(i), u.row(j));
      out(i, j) = c;
      out(j, i) = c;
    }
  }
  return out;
}

/// a * b^T, shapes (n x k) * (m x k)^T -> n x m.
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error(Errc::dimension_mismatch, "matmul_transposed inner dims");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

/// a * b, shapes (n x k) * (k x m) -> n x m.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(Errc::dimension_mismatch, "matmul inner dims");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto orow = out.row(i);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  return out;
}

/// a^T * b, shapes (k x n)^T * (k x m) -> n x m.
inline Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(Errc::dimension_mismatch, "transposed_matmul outer dims");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

/// SplitMix64 (Steele, Lea & Flood 2014): state advances by the golden-ratio
/// increment 0x9E3779B97F4A7C15 and each output is the state passed through
/// the finalizer (x ^ x>>30) * 0xBF58476D1CE4E5B9, (x ^ x>>27) * 0x94D049BB133111EB,
/// x ^ x>>31. Doubles use the top 53 bits. Normal deviates come from the
/// Box-Muller transform, consuming two uniforms per pair and caching the sine
/// branch. split() derives an independent stream from the next output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) by rejection, n >= 1.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the logarithm finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Rng split() { return Rng(next_u64() ^ 0x6A09E667F3BCC909ULL); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  if (rows < 1 || cols < 1)
    throw Error(Errc::invalid_argument, "gaussian_matrix needs rows >= 1 and cols >= 1");
  Matrix out(rows, cols);
  for (double& v : out.data()) v = rng.normal();
  return out;
}

}  // namespace pedcc
