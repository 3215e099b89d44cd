#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace poolbreaker {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Small by design: graphs here have at most
// a few hundred nodes, so every operation is a straightforward loop.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(const Vector& values);

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

  bool all_finite() const noexcept;
  void fill(double value) noexcept;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix& operator+=(Matrix& a, const Matrix& b);

// Matrix-vector product (m * v).
Vector matvec(const Matrix& m, const Vector& v);

// Rows of `m` restricted to `rows` (in the given order).
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);
// Principal submatrix on `idx` x `idx`.
Matrix submatrix(const Matrix& m, std::span<const std::size_t> idx);

double l1_distance(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& m) noexcept;

// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
// Throws StructuralError unless `a` and `b` have identical shape.
void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what);

}  // namespace poolbreaker
