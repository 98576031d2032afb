#include "radlab/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace radlab {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> v) {
  return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

Matrix Matrix::column_vector(std::span<const double> v) {
  return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape_string() + " * " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  // i-k-j order keeps the per-entry sum ordered by k.
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* brow = &b.data()[p * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
  }
  Matrix out(a.cols(), b.cols());
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = &a.data()[p * n];
    const double* brow = &b.data()[p * m];
    for (std::size_t i = 0; i < n; ++i) {
      const double api = arow[i];
      double* orow = &out(i, 0);
      for (std::size_t j = 0; j < m; ++j) orow[j] += api * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(ar, b.row(j));
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto od = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  return out;
}

Matrix relu(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
  return out;
}

Matrix relu_mask(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  auto md = m.data();
  auto od = out.data();
  for (std::size_t i = 0; i < md.size(); ++i) od[i] = md[i] > 0.0 ? 1.0 : 0.0;
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& x : o) x /= sum;
  }
  return out;
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  return out;
}

Matrix vstack(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("vstack: column mismatch");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Matrix(rows, cols, std::move(data));
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(m.row(idx[r]).begin(), m.cols(), out.row(r).begin());
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double frobenius_norm(const Matrix& m) { return norm2(m.data()); }

double trace(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("trace: non-square " + m.shape_string());
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double x) { return std::isfinite(x); });
}

double norm_21(const Matrix& m, Norm21Orientation orientation) {
  double total = 0.0;
  if (orientation == Norm21Orientation::kRows) {
    for (std::size_t i = 0; i < m.rows(); ++i) total += norm2(m.row(i));
  } else {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j) * m(i, j);
      total += std::sqrt(s);
    }
  }
  return total;
}

double spectral_norm(const Matrix& m, double tol, std::size_t max_iter) {
  if (m.empty()) throw ValidationError("spectral_norm: empty matrix");
  if (!(tol > 0.0)) throw ValidationError("spectral_norm: tol must be positive");
  if (frobenius_norm(m) == 0.0) return 0.0;

  const std::size_t n = m.cols();
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<double> mv(m.rows());
  std::vector<double> next(n);

  auto apply = [&](const std::vector<double>& x) {
    for (std::size_t i = 0; i < m.rows(); ++i) mv[i] = dot(m.row(i), x);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const auto r = m.row(i);
      for (std::size_t j = 0; j < n; ++j) next[j] += r[j] * mv[i];
    }
    return dot(mv, mv);  // Rayleigh quotient of MᵀM at unit x
  };

  double lambda = apply(v);
  if (lambda == 0.0) {
    // all-ones start lies in the null space; nudge it off
    v[0] += 1e-6;
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    lambda = apply(v);
  }

  double gap = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const double nn = norm2(next);
    if (nn == 0.0) return 0.0;
    for (std::size_t j = 0; j < n; ++j) v[j] = next[j] / nn;
    const double updated = apply(v);
    gap = std::abs(updated - lambda);
    lambda = updated;
    if (gap <= tol * lambda) return std::sqrt(lambda);
  }
  std::ostringstream os;
  os << "spectral_norm: no convergence after " << max_iter << " iterations (last gap " << gap
     << ", estimate " << std::sqrt(lambda) << ")";
  throw NumericalError(os.str());
}

NormReport norm_report(const Matrix& m) {
  return {spectral_norm(m), frobenius_norm(m), norm_21(m)};
}

SymmetricEigen symmetric_eigen(const Matrix& s, double tol, std::size_t max_sweeps) {
  if (s.rows() != s.cols()) throw DimensionError("symmetric_eigen: non-square " + s.shape_string());
  const std::size_t n = s.rows();
  Matrix a = s;
  Matrix v = Matrix::identity(n);

  auto off_norm = [&] {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) t += a(i, j) * a(i, j);
    return std::sqrt(t);
  };
  const double scale = std::max(frobenius_norm(a), 1e-300);

  std::size_t sweep = 0;
  for (; sweep < max_sweeps && off_norm() > tol * scale; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  if (off_norm() > tol * scale * 1e3) {
    throw NumericalError("symmetric_eigen: Jacobi sweeps did not converge");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

Matrix pinv_symmetric(const Matrix& s, double rel_cutoff) {
  const auto eig = symmetric_eigen(s);
  const std::size_t n = s.rows();
  Matrix out(n, n);
  if (n == 0) return out;
  const double largest = std::max(std::abs(eig.values.front()), std::abs(eig.values.back()));
  if (largest == 0.0) return out;
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = eig.values[k];
    if (std::abs(lam) <= rel_cutoff * largest) continue;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out(i, j) += eig.vectors(i, k) * eig.vectors(j, k) / lam;
  }
  return out;
}

}  // namespace radlab
