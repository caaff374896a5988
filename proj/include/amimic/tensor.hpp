#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace amimic {

/// Dense real vector. Embeddings, gradients and parameter rows all use this.
using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  /// y = this * x
  Vector apply(std::span<const double> x) const;
  /// y = this^T * x
  Vector apply_transposed(std::span<const double> x) const;
  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double norm(std::span<const double> a);
/// y += scale * x
void axpy(double scale, std::span<const double> x, std::span<double> y);
/// Frobenius norm of (a - b).
double frobenius_distance(const Matrix& a, const Matrix& b);
/// Largest absolute entry of (a - b).
double max_abs_difference(const Matrix& a, const Matrix& b);
bool all_finite(std::span<const double> values);

}  // namespace amimic
