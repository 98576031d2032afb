#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "radlab/matrix.hpp"
#include "radlab/rng.hpp"

using namespace radlab;

namespace {

Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

}  // namespace

TEST_CASE("matmul") {
  Rng rng(7, "test");
  const Matrix m = gaussian_matrix(3, 3, 1.0, rng);
  CHECK(matmul(Matrix::identity(3), m) == m);
  CHECK(matmul(m, Matrix(3, 3)) == Matrix(3, 3));

  const Matrix a = gaussian_matrix(3, 4, 1.0, rng);
  const Matrix b = gaussian_matrix(4, 2, 1.0, rng);
  CHECK(matmul(a, b) == naive_product(a, b));
  CHECK(matmul_tn(transpose(a), b) == naive_product(a, b));
  CHECK(matmul_nt(a, transpose(b)) == naive_product(a, b));

  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  try {
    matmul(a, a);
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("3x4") != std::string::npos);
  }
}

TEST_CASE("spectral norm") {
  CHECK(spectral_norm(Matrix{{2, 0}, {0, 1}}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(spectral_norm(Matrix(3, 2)) == 0.0);

  Rng rng(11, "test");
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = gaussian_matrix(5, 4, 1.0, rng);
    const Eigen::MatrixXd e = to_eigen(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.transpose() * e);
    const double oracle = std::sqrt(es.eigenvalues().maxCoeff());
    CHECK(std::abs(spectral_norm(m) - oracle) / oracle < 1e-8);

    const double c = 4.0 * rng.uniform() - 2.0;
    CHECK(spectral_norm(m * c) == doctest::Approx(std::abs(c) * spectral_norm(m)).epsilon(1e-9));
  }

  // all-ones start orthogonal to the top singular direction
  const Matrix orth{{1, -1}, {0, 0}};
  CHECK(spectral_norm(orth) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("spectral norm reports non-convergence") {
  Rng rng(3, "test");
  const Matrix m = gaussian_matrix(6, 6, 1.0, rng);
  CHECK_THROWS_AS(spectral_norm(m, 1e-15, 2), NumericalError);
}

TEST_CASE("norm_21") {
  CHECK(norm_21(Matrix::identity(4)) == 4.0);
  CHECK(norm_21(Matrix(2, 3)) == 0.0);
  CHECK(norm_21(Matrix{{3, 4}, {0, 0}}) == 5.0);
  CHECK(norm_21(Matrix{{3, 4}, {0, 0}}, Norm21Orientation::kColumns) == 7.0);
}

TEST_CASE("norm ordering on random matrices") {
  Rng rng(5, "test");
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.below(6);
    const std::size_t c = 1 + rng.below(6);
    const NormReport n = norm_report(gaussian_matrix(r, c, 1.0, rng));
    CHECK(n.spectral <= n.frobenius * (1.0 + 1e-12));
    CHECK(n.frobenius <= n.two_one * (1.0 + 1e-12));
  }
}

TEST_CASE("softmax rows") {
  const Matrix u = softmax_rows(Matrix(1, 4));
  for (double v : u.data()) CHECK(v == doctest::Approx(0.25));

  const Matrix s = softmax_rows(Matrix{{0.0, std::log(3.0)}});
  CHECK(s(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s(0, 1) == doctest::Approx(0.75).epsilon(1e-14));

  Rng rng(9, "test");
  const Matrix x = gaussian_matrix(5, 6, 4.0, rng);
  Matrix shifted = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) shifted(i, j) += 3.5 * static_cast<double>(i) + 100.0;
  const Matrix a = softmax_rows(x);
  const Matrix b = softmax_rows(shifted);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a.data()[k] - b.data()[k]) < 1e-12);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double sum = 0.0;
    for (double v : a.row(i)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }

  const Matrix big = softmax_rows(Matrix{{1000.0, 0.0}});
  CHECK(all_finite(big));
}

TEST_CASE("relu") {
  Rng rng(2, "test");
  const Matrix x = gaussian_matrix(4, 4, 1.0, rng);
  const Matrix r = relu(x);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(r.data()[k] == std::max(0.0, x.data()[k]));
  CHECK(relu(r) == r);
  CHECK(relu_mask(Matrix{{0.0, 1.0, -1.0}}) == Matrix{{0.0, 1.0, 0.0}});
}

TEST_CASE("symmetric eigen and pseudo-inverse") {
  Rng rng(4, "test");
  const Matrix g = gaussian_matrix(4, 4, 1.0, rng);
  const Matrix s = matmul_nt(g, g);
  const SymmetricEigen e = symmetric_eigen(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(s));
  for (int i = 0; i < 4; ++i) {
    CHECK(e.values[i] == doctest::Approx(es.eigenvalues()(3 - i)).epsilon(1e-10));
  }
  const Matrix p = pinv_symmetric(s);
  const Matrix should_be_id = matmul(s, p);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(should_be_id(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));

  // rank-deficient: P = v vᵀ, pinv = v vᵀ / ‖v‖⁴
  const Matrix v{{1.0}, {2.0}, {2.0}};
  const Matrix pinv = pinv_symmetric(matmul_nt(v, v));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(pinv(i, j) == doctest::Approx(v(i, 0) * v(j, 0) / 81.0));
}

TEST_CASE("rng determinism and streams") {
  Rng a(42, "mask");
  Rng b(42, "mask");
  Rng c(42, "init");
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  Rng d(1, "x");
  const auto idx = d.sample_without_replacement(10, 4);
  CHECK(idx.size() == 4);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    CHECK(idx[i] < 10);
    for (std::size_t j = 0; j < i; ++j) CHECK(idx[i] != idx[j]);
  }
}
