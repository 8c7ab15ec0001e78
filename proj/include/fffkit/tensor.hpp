#pragma once

// Dense row-major matrices and the elementwise math shared by every layer.
//
// Accumulation order is fixed: C(i, j) = sum over k ascending of A(i, k) * B(k, j),
// evaluated as row axpy updates, with no fused multiply-add. Every code path
// that produces a dense product in this library follows the same schedule, so
// results are bit-stable across kernel variants.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fffkit {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition (stale trace, bad config, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  std::string shape_string() const;
  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a (m x k) * b (k x n)
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b, a is (k x m), b is (k x n)
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// a * b^T, a is (m x k), b is (n x k)
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

// x(r, c) += bias[c]
void add_row_bias(Matrix& x, std::span<const double> bias);
// out[c] += sum over rows of x(r, c)
void accumulate_column_sums(const Matrix& x, std::span<double> out);
// Selects rows of `x` in the given order.
Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows);

double sigmoid(double x) noexcept;
double softplus(double x) noexcept;
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

Matrix sigmoid(const Matrix& x);
Matrix relu(const Matrix& x);
Matrix softplus(const Matrix& x);
Matrix softmax_rows(const Matrix& x);

double max_abs_diff(const Matrix& a, const Matrix& b);

// Argument magnitude beyond which the logistic is evaluated at the clamp.
inline constexpr double kSigmoidClamp = 36.0;

}  // namespace fffkit
