#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace radlab {

/// Raised when operand shapes do not compose.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for out-of-domain arguments (negative radius, bad labels, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative routine fails or a value stops being finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense matrix of doubles. Vectors are 1×n or n×1 matrices where a
/// shape matters, and plain std::vector<double> elsewhere.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> v);
  static Matrix column_vector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& values() const { return data_; }

  std::string shape_string() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// a·b with the k-sum accumulated left to right.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);

Matrix relu(const Matrix& m);
/// 1 where m > 0, else 0 (subgradient at 0 taken as 0).
Matrix relu_mask(const Matrix& m);

/// Row-wise softmax, stabilized by subtracting each row's maximum.
Matrix softmax_rows(const Matrix& m);

/// 1ᵀM as a 1×cols matrix.
Matrix column_sums(const Matrix& m);
/// Stacks the rows of every matrix in `parts` (all must share cols).
Matrix vstack(std::span<const Matrix> parts);
/// Rows `idx` of m, in the order given.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double frobenius_norm(const Matrix& m);
double trace(const Matrix& m);
bool all_finite(const Matrix& m);

enum class Norm21Orientation { kRows, kColumns };

/// Sum of Euclidean norms of the rows (default) or of the columns.
double norm_21(const Matrix& m, Norm21Orientation orientation = Norm21Orientation::kRows);

/// Largest singular value by power iteration on MᵀM. The start vector is the
/// normalized all-ones vector; `tol` bounds the relative change of the
/// Rayleigh quotient between sweeps. Throws NumericalError when `max_iter`
/// sweeps are not enough.
double spectral_norm(const Matrix& m, double tol = 1e-12, std::size_t max_iter = 20000);

struct NormReport {
  double spectral = 0.0;
  double frobenius = 0.0;
  double two_one = 0.0;
};

NormReport norm_report(const Matrix& m);

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues are returned in descending order; column j of `vectors` is the
/// eigenvector for values[j].
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
};

SymmetricEigen symmetric_eigen(const Matrix& s, double tol = 1e-14, std::size_t max_sweeps = 200);

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix; eigenvalues below
/// `rel_cutoff` × largest are treated as zero.
Matrix pinv_symmetric(const Matrix& s, double rel_cutoff = 1e-10);

}  // namespace radlab
