#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "radlab/bounds.hpp"
#include "radlab/pretrain.hpp"

using namespace radlab;

namespace {

// m = 1 gives ln(2m²) = ln 2; rescaling ‖Z̃‖ turns it into 1.
BoundParams unit_params() {
  BoundParams p;
  p.w_caps = {1.0};
  p.b_caps = {1.0};
  p.m = 1;
  p.z_norm = 1.0 / std::sqrt(std::log(2.0));
  return p;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

BoundParams random_params(Rng& rng, std::size_t layers) {
  BoundParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    p.w_caps.push_back(0.5 + 2.0 * rng.uniform());
    p.b_caps.push_back(0.5 + 2.0 * rng.uniform());
  }
  p.z_norm = 0.5 + 3.0 * rng.uniform();
  p.x_norm = 0.5 + 3.0 * rng.uniform();
  p.x_star = 0.5 + 2.0 * rng.uniform();
  p.d = 4 + rng.below(8);
  p.m = 8 + rng.below(32);
  p.k = 1 + rng.below(4);
  p.d_k = 1 + rng.below(4);
  p.alpha1 = 0.05 + 0.5 * rng.uniform();
  p.alpha2 = 0.05 + 0.5 * rng.uniform();
  p.n = 10 + rng.below(100);
  p.big_n = 100 + rng.below(10000);
  p.nu = 0.01 + 0.5 * rng.uniform();
  p.tv = 0.3 * rng.uniform();
  return p;
}

}  // namespace

TEST_CASE("covering number of the CE network") {
  BoundParams p = unit_params();
  CHECK(nn_covering_ln(p, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(nn_covering_ln(p, 2.0) == doctest::Approx(0.25).epsilon(1e-14));
  p.w_caps.push_back(1.0);
  p.b_caps.push_back(1.0);
  CHECK(nn_covering_ln(p, 1.0) == doctest::Approx(8.0).epsilon(1e-14));

  // (Σ ρ^{2/3})³ against (Σ ρ)³: W = 1, B = 8 gives 4³ vs 8³ on one layer
  BoundParams q = unit_params();
  q.b_caps = {8.0};
  CHECK(nn_covering_ln(q, 1.0) == doctest::Approx(64.0));
  q.variant = FormulaVariant::kCompact;
  CHECK(nn_covering_ln(q, 1.0) == doctest::Approx(512.0));
  CHECK_THROWS_AS(nn_covering_ln(q, 0.0), ValidationError);
}

TEST_CASE("transformer constants") {
  BoundParams p;
  p.w_caps = {1.0, 2.0, 3.0};
  p.b_caps = {1.0, 1.0, 1.0};
  p.alpha1 = 0.0;
  p.alpha2 = 0.0;
  for (double s : transformer_constants(p).s) CHECK(s == 1.0);

  p.w_caps = {2.0};
  p.b_caps = {1.0};
  p.alpha1 = 0.1;
  p.alpha2 = 0.1;
  p.k = 4;
  CHECK(transformer_constants(p).s[0] == doctest::Approx(3.64).epsilon(1e-14));

  // hand-evaluated two-layer instance (both variants)
  BoundParams h;
  h.alpha1 = 0.5;
  h.alpha2 = 0.3;
  h.k = 4;
  h.d = 8;
  h.m = 16;
  h.d_k = 4;
  h.x_star = 1.2;
  h.w_caps = {2.0, 1.5};
  h.b_caps = {1.5, 1.0};
  auto a = transformer_constants(h);
  CHECK(a.s[0] == doctest::Approx(19.8));
  CHECK(a.s[1] == doctest::Approx(182.4075));
  CHECK(a.rho[0] == doctest::Approx(310.6972626202427).epsilon(1e-12));
  CHECK(a.rho[1] == doctest::Approx(607.4387229325741).epsilon(1e-12));
  h.variant = FormulaVariant::kCompact;
  auto b = transformer_constants(h);
  CHECK(b.rho[0] == doctest::Approx(342.4946021132331).epsilon(1e-12));
  CHECK(b.rho[1] == doctest::Approx(686428.7806666647).epsilon(1e-12));
  CHECK(b.s == a.s);

  Rng rng(21, "test");
  for (int t = 0; t < 20; ++t) {
    const auto c = transformer_constants(random_params(rng, 4));
    for (std::size_t l = 1; l < c.s.size(); ++l) CHECK(c.s[l] >= c.s[l - 1]);
  }
}

TEST_CASE("local Rademacher fixed point") {
  CHECK(local_rad_fixed_point(1.0, 1.0, 1.0, 100.0) == doctest::Approx(1.92181).epsilon(1e-5));
  const double ln4 = std::log(4.0);
  CHECK(local_rad_fixed_point(1.0, 1.0, 1.0, 100.0) == doctest::Approx(ln4 * ln4).epsilon(1e-14));

  // clamp branch: (2/5)√(bN/(Hc)) ≤ e
  CHECK(local_rad_fixed_point(1.0, 10.0, 1.0, 100.0) == doctest::Approx(10.0));
  CHECK(local_rad_fixed_point(1.0, 10.0, 1.0, 10.0) == doctest::Approx(100.0));
  CHECK(local_rad_fixed_point(1.0, 10.0, 1.0, 100.0) == doctest::Approx(local_rad_fixed_point(1.0, 10.0, 1.0, 10.0) / 10.0));

  Rng rng(22, "test");
  for (int t = 0; t < 200; ++t) {
    const double h = std::exp(rng.uniform() * 6 - 3), c = std::exp(rng.uniform() * 10 - 5);
    const double b = std::exp(rng.uniform() * 6 - 3), n = std::exp(rng.uniform() * 14);
    CHECK(fixed_point_residual(h, c, b, n) < 1e-10);
  }
  CHECK_THROWS_AS(local_rad_fixed_point(0.0, 1.0, 1.0, 1.0), ValidationError);
}

TEST_CASE("CE bound on the all-unit instance") {
  BoundParams p;
  p.w_caps = {1.0};
  p.b_caps = {1.0};
  p.m = 1;
  p.n = 10;
  p.big_n = 100;
  p.nu = 0.05;
  const auto b = ce_bound(p);
  // c = 12 ln 2, clamped log branch, r* = c
  CHECK(b.c == doctest::Approx(8.317766166719343).epsilon(1e-14));
  CHECK(b.fixed_point == doctest::Approx(8.317766166719343).epsilon(1e-14));
  CHECK(b.complexity == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(b.pretrain == doctest::Approx(2.8892427190277528).epsilon(1e-13));
  CHECK(b.confidence == doctest::Approx(2.1893313220447896).epsilon(1e-13));
  CHECK(b.tv_term == 0.0);
  CHECK(b.total == doctest::Approx(5.478574041072543).epsilon(1e-13));

  BoundParams certain = p;
  certain.nu = 1.0;
  CHECK(ce_bound(certain).confidence == 0.0);

  BoundParams shifted = p;
  shifted.tv = 0.25;
  CHECK(ce_bound(shifted).total - b.total == doctest::Approx(1.0));

  // clamped branch: 10N divides r* by 10
  BoundParams small = p;
  small.b = 0.01;
  BoundParams big = small;
  big.big_n = 1000;
  CHECK(ce_bound(big).fixed_point == doctest::Approx(ce_bound(small).fixed_point / 10.0));

  const auto json = bound_json(b);
  CHECK(json.find("\"total\"") != std::string::npos);
  CHECK(json.find("\"complexity\"") < json.find("\"total\""));

  BoundParams bad = p;
  bad.w_caps = {1.0, 2.0};
  CHECK_THROWS_AS(ce_bound(bad), ValidationError);
  bad = p;
  bad.nu = 0.0;
  CHECK_THROWS_AS(ce_bound(bad), ValidationError);
}

TEST_CASE("MAE bound") {
  BoundParams p;
  p.w_caps = {2.0, 3.0};
  p.b_caps = {1.0, 1.0};
  p.alpha1 = 0.0;
  p.alpha2 = 0.0;
  p.k = 4;
  p.x_norm = 2.0;
  p.radius = 1.5;
  p.n = 10;
  p.big_n = 100;
  const auto b = mae_bound(p);
  CHECK(b.complexity == doctest::Approx(2.4).epsilon(1e-14));
  CHECK(b.pretrain == doctest::Approx(0.17308183826022852).epsilon(1e-10));

  BoundParams v = p;
  v.alpha1 = 0.5;
  v.alpha2 = 0.3;
  v.x_star = 1.5;
  const double detailed = mae_bound(v).total;
  v.variant = FormulaVariant::kCompact;
  CHECK(mae_bound(v).total != doctest::Approx(detailed));
}

TEST_CASE("bound monotonicity sweeps") {
  Rng rng(23, "test");
  using Eval = std::function<BoundDecomposition(const BoundParams&)>;
  const std::vector<std::pair<const char*, Eval>> evals{{"ce", ce_bound}, {"mae", mae_bound}};
  for (int point = 0; point < 20; ++point) {
    const BoundParams base = random_params(rng, 1 + point % 3);
    for (const auto& [name, eval] : evals) {
      CAPTURE(name);
      CAPTURE(point);
      const double t0 = eval(base).total;
      auto up = [&](const std::function<void(BoundParams&)>& bump) {
        BoundParams q = base;
        bump(q);
        return eval(q).total;
      };
      for (std::size_t l = 0; l < base.w_caps.size(); ++l) {
        CHECK(up([&](BoundParams& q) { q.w_caps[l] *= 1.1; }) >= t0);
        CHECK(up([&](BoundParams& q) { q.b_caps[l] *= 1.1; }) >= t0);
      }
      CHECK(up([](BoundParams& q) { q.z_norm *= 1.1; }) >= t0);
      CHECK(up([](BoundParams& q) { q.x_norm *= 1.1; }) >= t0);
      CHECK(up([](BoundParams& q) { q.x_star *= 1.1; }) >= t0);
      CHECK(up([](BoundParams& q) { q.n += 5; }) <= t0);
      CHECK(up([](BoundParams& q) { q.big_n *= 2; }) <= t0);
    }
  }
}

TEST_CASE("total variation") {
  const std::vector<double> p{0.5, 0.5}, q{1.0, 0.0}, r{0.0, 1.0};
  CHECK(tv_distance(p, p) == 0.0);
  CHECK(tv_distance(q, r) == 1.0);
  CHECK(tv_distance(p, q) == 0.5);
  const std::vector<double> unnormalized{0.5, 0.6};
  CHECK_THROWS_AS(tv_distance(unnormalized, p), ValidationError);
  const std::vector<double> negative{1.5, -0.5};
  CHECK_THROWS_AS(tv_distance(negative, p), ValidationError);

  Rng rng(24, "test");
  auto draw = [&](std::size_t k) {
    std::vector<double> v(k);
    double s = 0.0;
    for (double& x : v) s += (x = rng.uniform());
    for (double& x : v) x /= s;
    return v;
  };
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 2 + rng.below(8);
    const auto a = draw(k), b = draw(k), c = draw(k);
    // sup over all 2^k events
    double sup = 0.0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
      double diff = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        if (mask >> i & 1U) diff += a[i] - b[i];
      sup = std::max(sup, std::abs(diff));
    }
    const double tv = tv_distance(a, b);
    CHECK(tv == doctest::Approx(sup).epsilon(1e-12));
    CHECK(tv_event_sup(a, b) == doctest::Approx(sup).epsilon(1e-12));
    CHECK((tv >= 0.0 && tv <= 1.0));
    CHECK(tv == tv_distance(b, a));
    CHECK(tv_distance(a, c) <= tv + tv_distance(b, c) + 1e-15);
  }
}

TEST_CASE("Ruhe trace inequality") {
  const auto eye = ruhe_check(Matrix::identity(2), Matrix::identity(2));
  CHECK(eye.ok);
  CHECK(eye.lower == doctest::Approx(2.0));
  CHECK(eye.upper == doctest::Approx(2.0));
  CHECK(eye.trace == doctest::Approx(2.0));

  const auto diag = ruhe_check(Matrix{{2.0, 0.0}, {0.0, 1.0}}, Matrix{{3.0, 0.0}, {0.0, 1.0}});
  CHECK(diag.ok);
  CHECK(diag.lower == doctest::Approx(5.0));
  CHECK(diag.trace == doctest::Approx(7.0));
  CHECK(diag.upper == doctest::Approx(7.0));

  Rng rng(25, "test");
  for (int t = 0; t < 100; ++t) {
    const Matrix ma = gaussian_matrix(4, 4, 1.0, rng), mb = gaussian_matrix(4, 4, 1.0, rng);
    const Matrix a = matmul_nt(ma, ma), b = matmul_nt(mb, mb);
    const auto r = ruhe_check(a, b);
    CHECK(r.ok);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(to_eigen(a)), eb(to_eigen(b));
    const Eigen::VectorXd va = ea.eigenvalues(), vb = eb.eigenvalues();  // ascending
    CHECK(r.upper == doctest::Approx(va.dot(vb)).epsilon(1e-9));
    CHECK(r.lower == doctest::Approx(va.dot(vb.reverse())).epsilon(1e-9));
    CHECK(r.trace == doctest::Approx((to_eigen(a) * to_eigen(b)).trace()).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ruhe_check(Matrix{{1.0, 0.0}, {0.0, -1.0}}, Matrix::identity(2)), ValidationError);
  CHECK_THROWS_AS(ruhe_check(Matrix::identity(2), Matrix::identity(3)), DimensionError);
}

TEST_CASE("transferability probe: identical and rotated representations") {
  Rng rng(26, "test");
  const Matrix h = gaussian_matrix(60, 4, 1.0, rng);
  const Matrix w_star = gaussian_matrix(3, 4, 1.0, rng);
  const Matrix theta = gaussian_matrix(4, 1, 1.0, rng);
  const Matrix score = matmul(h, theta);
  std::vector<double> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = score(i, 0) >= 0.0 ? 1.0 : -1.0;
  TransferProbeConfig cfg;
  cfg.radius = 3.0;

  const auto same = transferability_probe(h, h, w_star, y, cfg);
  CHECK(std::abs(same.delta_ft) < 1e-9);
  CHECK(same.delta_pt < 1e-9);
  CHECK(frobenius_norm(same.lambda_schur) < 1e-9);
  CHECK(same.bound_ok);

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(to_eigen(gaussian_matrix(4, 4, 1.0, rng)));
  const Matrix q = from_eigen(qr.householderQ() * Eigen::MatrixXd::Identity(4, 4));
  const Matrix rotated = matmul_nt(h, q);
  const auto rot = transferability_probe(rotated, h, w_star, y, cfg);
  // both best-head risks agree: a rotated head attains the same value inside the ball
  CHECK(std::abs(rot.delta_ft) < 1e-6);
  CHECK(rot.delta_pt < 1e-9);
  CHECK(frobenius_norm(rot.lambda_schur) < 1e-9);
  const Matrix back = matmul(q, rot.head_star);
  CHECK(std::abs(head_risk(rotated, Matrix(60, 1, y), back).loss - head_risk(h, Matrix(60, 1, y), rot.head_star).loss) < 1e-12);
}

TEST_CASE("transferability probe: planted perturbation sweep") {
  Rng rng(27, "test");
  const Matrix x = gaussian_matrix(200, 6, 1.0, rng);
  const Matrix p = gaussian_matrix(4, 6, 1.0, rng);
  const Matrix e = gaussian_matrix(4, 6, 1.0, rng);
  const Matrix w_star = gaussian_matrix(5, 4, 1.0, rng);
  const Matrix theta = gaussian_matrix(4, 1, 1.0, rng);
  const Matrix h_star = matmul_nt(x, p);
  const Matrix score = matmul(h_star, theta);
  std::vector<double> y(200);
  for (std::size_t i = 0; i < 200; ++i) y[i] = score(i, 0) >= 0.0 ? 1.0 : -1.0;
  TransferProbeConfig cfg;
  cfg.radius = 5.0;
  for (int k = 0; k < 10; ++k) {
    const double eps = std::pow(10.0, -3.0 + k / 3.0);
    const Matrix h_hat = matmul_nt(x, p + e * eps);
    const auto r = transferability_probe(h_hat, h_star, w_star, y, cfg);
    CAPTURE(eps);
    CHECK(std::isfinite(r.ratio));
    CHECK(r.delta_pt >= 0.0);
    CHECK(r.bound_ok);
    CHECK(r.ratio <= r.ceiling * (1.0 + 1e-9) + 1e-12);
    CHECK(r.ceiling <= r.loose_ceiling * (1.0 + 1e-9));
  }
}

TEST_CASE("self-attention contraction and norm growth") {
  Rng rng(28, "test");
  const TransformerEncoder plain = init_transformer(3, 4, 2, 5, 1, 0.0, 0.0, rng);
  const auto identity = verify_sa_contraction(plain.layers[0], 3, 20, 1);
  CHECK(identity.passed);
  CHECK(identity.worst_ratio == doctest::Approx(1.0).epsilon(1e-12));

  for (int draw = 0; draw < 5; ++draw) {
    TransformerEncoder enc = init_transformer(3, 4, 2, 8, 1, 0.5, 0.5, rng);
    for (auto* w : {&enc.layers[0].w_v, &enc.layers[0].w_k, &enc.layers[0].w_q, &enc.layers[0].w_fc1, &enc.layers[0].w_fc2})
      *w = gaussian_matrix(w->rows(), w->cols(), 0.3, rng);
    const auto out = verify_sa_contraction(enc.layers[0], 3, 100, static_cast<std::uint64_t>(draw));
    CHECK(out.passed);
    CHECK(out.trials == 100);
    CHECK(out.worst_ratio < 1.0);
  }

  const TransformerEncoder deep = init_transformer(4, 5, 3, 6, 3, 0.5, 0.5, rng);
  for (int t = 0; t < 100; ++t) {
    const auto out = verify_norm_growth(deep, gaussian_matrix(4, 5, 1.0 + t, rng));
    CHECK(out.passed);
  }
  for (double c : norm_growth_caps(deep)) CHECK(c >= 0.5);
}
