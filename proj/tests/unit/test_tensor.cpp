#include <gtest/gtest.h>

#include <cmath>

#include "fffkit/rng.hpp"
#include "fffkit/tensor.hpp"
#include "oracles.hpp"

using namespace fffkit;

namespace {

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

}  // namespace

TEST(Matrix, ConstructionAndShape) {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.shape_string(), "[2x3]");
  EXPECT_THROW((Matrix{{1, 2}, {3}}), DimensionError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>(3)), DimensionError);
  EXPECT_EQ(Matrix::identity(3)(1, 1), 1.0);
  EXPECT_EQ(Matrix::identity(3)(1, 2), 0.0);
}

TEST(Matrix, MatmulMatchesTripleLoopBitForBit) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(13), n = 1 + rng.below(11);
    Matrix a = uniform_matrix(rng, m, k, -2, 2);
    Matrix b = uniform_matrix(rng, k, n, -2, 2);
    EXPECT_EQ(matmul(a, b), oracle::naive_matmul(a, b));
    Matrix c = uniform_matrix(rng, m, n, -2, 2);
    EXPECT_LE(max_abs_diff(matmul_at_b(a, c), oracle::naive_matmul(transpose(a), c)), 1e-13);
    Matrix d = uniform_matrix(rng, n, k, -2, 2);
    EXPECT_LE(max_abs_diff(matmul_a_bt(a, d), oracle::naive_matmul(a, transpose(d))), 1e-13);
  }
}

TEST(Matrix, MatmulRejectsMismatchedShapes) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
  EXPECT_THROW(matmul_at_b(Matrix(2, 3), Matrix(3, 3)), DimensionError);
  EXPECT_THROW(matmul_a_bt(Matrix(2, 3), Matrix(2, 2)), DimensionError);
  Matrix x(2, 3);
  std::vector<double> bias(2);
  EXPECT_THROW(add_row_bias(x, bias), DimensionError);
}

TEST(Matrix, BiasColumnSumsGather) {
  Matrix x{{1, 2}, {3, 4}, {5, 6}};
  std::vector<double> bias{10, 20};
  add_row_bias(x, bias);
  EXPECT_EQ(x, (Matrix{{11, 22}, {13, 24}, {15, 26}}));
  std::vector<double> sums(2, 1.0);
  accumulate_column_sums(x, sums);
  EXPECT_EQ(sums[0], 40.0);
  EXPECT_EQ(sums[1], 73.0);
  std::vector<std::size_t> rows{2, 0};
  EXPECT_EQ(gather_rows(x, rows), (Matrix{{15, 26}, {11, 22}}));
  std::vector<std::size_t> bad{3};
  EXPECT_THROW(gather_rows(x, bad), DimensionError);
}

TEST(ScalarMath, SigmoidIsClampedAndSymmetric) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  for (double z : {-5.0, -0.3, 0.7, 12.0}) {
    EXPECT_NEAR(sigmoid(z), oracle::logistic(z), 1e-15);
    EXPECT_NEAR(sigmoid(z) + sigmoid(-z), 1.0, 1e-15);
  }
  EXPECT_EQ(sigmoid(1e6), sigmoid(kSigmoidClamp));
  EXPECT_EQ(sigmoid(-1e6), sigmoid(-kSigmoidClamp));
  EXPECT_GT(sigmoid(-1e6), 0.0);
  EXPECT_LT(sigmoid(1e6), 1.0);
}

TEST(ScalarMath, SoftplusIsStable) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_EQ(softplus(800.0), 800.0);
  EXPECT_GE(softplus(-800.0), 0.0);
  EXPECT_NEAR(softplus(-30.0), std::exp(-30.0), 1e-25);
  EXPECT_NEAR(softplus(3.0), std::log1p(std::exp(3.0)), 1e-14);
}

TEST(ScalarMath, GeluAndDerivative) {
  for (double x : {-3.0, -0.5, 0.0, 0.25, 2.0}) {
    EXPECT_NEAR(gelu(x), oracle::act(Activation::gelu, x), 1e-15);
    const double h = 1e-6;
    EXPECT_NEAR(gelu_derivative(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-8);
  }
}

TEST(MatrixMath, SoftmaxRowsSumToOneAndResistOverflow) {
  Matrix z{{1000, 1001, 999}, {-5, 0, 5}};
  Matrix p = softmax_rows(z);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (double v : p.row(r)) {
      EXPECT_TRUE(std::isfinite(v));
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  EXPECT_GT(p(0, 1), p(0, 0));
}

TEST(MatrixMath, ElementwiseMaps) {
  Matrix x{{-1, 0, 2}};
  EXPECT_EQ(relu(x), (Matrix{{0, 0, 2}}));
  EXPECT_NEAR(sigmoid(x)(0, 0), oracle::logistic(-1), 1e-15);
  EXPECT_NEAR(softplus(x)(0, 2), std::log1p(std::exp(2.0)), 1e-15);
  EXPECT_EQ(max_abs_diff(x, Matrix{{-1, 0.5, 2}}), 0.5);
  EXPECT_THROW(max_abs_diff(x, Matrix(1, 2)), DimensionError);
}
