#include <gtest/gtest.h>

#include <cmath>

#include "pedcc/numeric.hpp"

using pedcc::Errc;
using pedcc::Error;
using pedcc::Matrix;
using pedcc::Rng;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected pedcc::Error";
  return Errc::invalid_argument;
}

}  // namespace

TEST(Matrix, RejectsNonFiniteData) {
  EXPECT_EQ(code_of([] { Matrix(1, 2, std::vector<double>{1.0, std::nan("")}); }), Errc::non_finite);
  EXPECT_EQ(code_of([] { Matrix(1, 1, INFINITY); }), Errc::non_finite);
  EXPECT_EQ(code_of([] { Matrix(2, 2, std::vector<double>{1.0}); }), Errc::dimension_mismatch);
}

TEST(Normalize, ThreeFourFive) {
  const Matrix u = pedcc::l2_normalize_rows(Matrix::from_rows({{3, 4}}));
  EXPECT_DOUBLE_EQ(u(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(u(0, 1), 0.8);
}

TEST(Normalize, UnitVectorUnchanged) {
  const Matrix u = pedcc::l2_normalize_rows(Matrix::from_rows({{1, 0, 0}}));
  EXPECT_EQ(u, Matrix::from_rows({{1, 0, 0}}));
}

TEST(Normalize, Diagonal) {
  const Matrix u = pedcc::l2_normalize_rows(Matrix::from_rows({{1, 1}}));
  EXPECT_NEAR(u(0, 0), 0.7071067811865475, 1e-15);
  EXPECT_NEAR(u(0, 1), 0.7071067811865475, 1e-15);
}

TEST(Normalize, ZeroRowRejected) {
  EXPECT_EQ(code_of([] { pedcc::l2_normalize_rows(Matrix::from_rows({{1, 0}, {0, 0}})); }), Errc::zero_row);
  EXPECT_EQ(code_of([] { pedcc::l2_normalize_rows(Matrix::from_rows({{1e-31, 0}})); }), Errc::zero_row);
}

TEST(Normalize, IdempotentAndUnitOnRandomRows) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix m = pedcc::gaussian_matrix(rng, 1 + rng.below(10), 1 + rng.below(20));
    const Matrix once = pedcc::l2_normalize_rows(m);
    const Matrix twice = pedcc::l2_normalize_rows(once);
    for (std::size_t r = 0; r < m.rows(); ++r) EXPECT_NEAR(pedcc::norm(once.row(r)), 1.0, 1e-12);
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once.data()[i], twice.data()[i], 1e-12);
  }
}

TEST(PairwiseCosines, Orthogonal) {
  const Matrix c = pedcc::pairwise_cosines(Matrix::from_rows({{1, 0}, {0, 1}}));
  EXPECT_EQ(c(0, 1), 0.0);
  EXPECT_EQ(c(1, 0), 0.0);
  EXPECT_EQ(c(0, 0), 1.0);
}

TEST(PairwiseCosines, Antipodal) {
  const Matrix c = pedcc::pairwise_cosines(Matrix::from_rows({{1, 0}, {-1, 0}}));
  EXPECT_EQ(c(0, 1), -1.0);
}

TEST(PairwiseCosines, FortyFiveDegrees) {
  const Matrix c = pedcc::pairwise_cosines(Matrix::from_rows({{1, 0}, {1, 1}}));
  EXPECT_NEAR(c(0, 1), 0.7071067811865475, 1e-15);
}

TEST(PairwiseCosines, ExactlySymmetricWithUnitDiagonal) {
  Rng rng(8);
  const Matrix m = pedcc::gaussian_matrix(rng, 12, 7);
  const Matrix c = pedcc::pairwise_cosines(m);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    EXPECT_NEAR(c(i, i), 1.0, 1e-12);
    for (std::size_t j = 0; j < c.cols(); ++j) {
      EXPECT_EQ(c(i, j), c(j, i));
      EXPECT_LE(std::abs(c(i, j)), 1.0 + 1e-12);
    }
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  EXPECT_EQ(pedcc::gaussian_matrix(a, 2, 2), pedcc::gaussian_matrix(b, 2, 2));
}

TEST(Rng, KnownSplitMixOutput) {
  // First SplitMix64 output for seed 0, as published with the reference implementation.
  Rng r(0);
  EXPECT_EQ(r.next_u64(), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, GaussianSampleMean) {
  Rng rng(123);
  const Matrix m = pedcc::gaussian_matrix(rng, 1000, 1);
  double mean = 0.0, var = 0.0;
  for (double v : m.data()) mean += v / 1000.0;
  for (double v : m.data()) var += (v - mean) * (v - mean) / 1000.0;
  EXPECT_NEAR(mean, 0.0, 0.1);
  EXPECT_NEAR(var, 1.0, 0.15);
}

TEST(Rng, ZeroRowsRejected) {
  Rng rng(1);
  EXPECT_EQ(code_of([&] { pedcc::gaussian_matrix(rng, 0, 3); }), Errc::invalid_argument);
}

TEST(Rng, SplitStreamsDiffer) {
  Rng a(9);
  Rng child = a.split();
  EXPECT_NE(a.next_u64(), child.next_u64());
}

TEST(MatrixProducts, AgreeWithEachOther) {
  Rng rng(4);
  const Matrix a = pedcc::gaussian_matrix(rng, 3, 4);
  const Matrix b = pedcc::gaussian_matrix(rng, 5, 4);
  const Matrix abt = pedcc::matmul_transposed(a, b);
  // b^T built by hand
  Matrix bt(4, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) bt(j, i) = b(i, j);
  const Matrix ab2 = pedcc::matmul(a, bt);
  for (std::size_t i = 0; i < abt.size(); ++i) EXPECT_NEAR(abt.data()[i], ab2.data()[i], 1e-12);
  // (a^T)^T b^T == a b^T
  Matrix at(4, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
  const Matrix ab3 = pedcc::transposed_matmul(at, bt);
  for (std::size_t i = 0; i < abt.size(); ++i) EXPECT_NEAR(abt.data()[i], ab3.data()[i], 1e-12);
}
