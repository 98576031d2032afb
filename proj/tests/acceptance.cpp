// Acceptance run: one PASS/FAIL line per criterion, exit code = number of failures.
#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fd_oracle.hpp"
#include "radlab/bounds.hpp"
#include "radlab/cli.hpp"
#include "radlab/experiment.hpp"
#include "radlab/minimax.hpp"

using namespace radlab;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-5;
constexpr double kFdStep = 1e-5;
constexpr double kInnerSupTol = 1e-3;
constexpr double kFixedPointTol = 1e-10;
constexpr double kHandFixedPoint = 1.92181;
constexpr double kHandTol = 1e-4;
constexpr double kTvTol = 1e-12;
constexpr double kRuheSlack = 1e-9;
constexpr double kQuadraticTol = 1e-6;
constexpr double kCosTol = 1e-3;
constexpr double kProbeTol = 1e-9;
constexpr double kOneStepTol = 1e-10;
constexpr double kGoldenRel = 1e-6;
constexpr double kGradSeconds = 30.0;
constexpr double kSgdaSeconds = 120.0;
constexpr double kRadRegSeconds = 300.0;

// Reference end-to-end run (m = 256, L = 2, N = 50, n = 10, seed 0).
constexpr double kGoldenMaxPretrainDrift = 2.3571788432989509;
constexpr double kGoldenFinalFinetuneLoss = 2.3810951869910713e-05;

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

SaLayer random_layer(std::size_t d, std::size_t dk, std::size_t m, double var, Rng& rng) {
  SaLayer l;
  l.w_v = gaussian_matrix(d, d, var, rng);
  l.w_k = gaussian_matrix(d, dk, var, rng);
  l.w_q = gaussian_matrix(d, dk, var, rng);
  l.w_fc1 = gaussian_matrix(d, m, var, rng);
  l.w_fc2 = gaussian_matrix(m, d, var, rng);
  l.alpha1 = 0.5;
  l.alpha2 = 0.5;
  l.d_k = dk;
  return l;
}

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101, "acceptance");
  double worst = 0.0;
  std::size_t bad = 0;
  auto tally = [&](double err) {
    worst = std::max(worst, err);
    if (!(err < kGradTol)) ++bad;
  };
  for (int draw = 0; draw < 20; ++draw) {
    // MSE composite
    CeModel model{init_mlp_encoder(4, 6, 2, rng), gaussian_matrix(4, 6, 0.3, rng)};
    const Matrix in = gaussian_matrix(5, 4, 1.0, rng), target = gaussian_matrix(5, 4, 1.0, rng);
    tally(fd::worst_relative_error(
        [&](const std::vector<Matrix>& p) {
          CeModel m = model;
          m.set_params(p);
          return ce_mse_loss(m, in, target).loss;
        },
        model.params(), ce_mse_loss(model, in, target).grads, kFdStep));

    // logistic composite
    const MlpEncoder enc = init_mlp_encoder(4, 6, 2, rng);
    const Matrix theta = gaussian_matrix(6, 1, 1.0, rng), x = gaussian_matrix(7, 4, 1.0, rng);
    std::vector<double> y(7);
    for (double& v : y) v = rng.sign();
    std::vector<Matrix> params = enc.layers;
    params.push_back(theta);
    tally(fd::worst_relative_error(
        [&](const std::vector<Matrix>& p) {
          MlpEncoder e;
          e.layers.assign(p.begin(), p.end() - 1);
          return mlp_logistic_loss(e, p.back(), x, y).loss;
        },
        params, mlp_logistic_loss(enc, theta, x, y).grads, kFdStep));

    // one self-attention layer, weights and input
    const SaLayer layer = random_layer(3, 2, 4, 0.3, rng);
    const Matrix xs = gaussian_matrix(3, 3, 1.0, rng), dir = gaussian_matrix(3, 3, 1.0, rng);
    const SaGrad g = sa_backward(layer, sa_forward_cached(layer, xs), dir);
    tally(fd::worst_relative_error(
        [&](const std::vector<Matrix>& p) {
          SaLayer l = layer;
          l.w_v = p[0];
          l.w_k = p[1];
          l.w_q = p[2];
          l.w_fc1 = p[3];
          l.w_fc2 = p[4];
          return dot(sa_forward(l, p[5]).data(), dir.data());
        },
        {layer.w_v, layer.w_k, layer.w_q, layer.w_fc1, layer.w_fc2, xs},
        {g.w_v, g.w_k, g.w_q, g.w_fc1, g.w_fc2, g.input}, kFdStep));

    // full regularized objective
    CeModel rm{init_mlp_encoder(3, 5, 2, rng), gaussian_matrix(3, 5, 0.4, rng)};
    const CeData data{gaussian_matrix(6, 3, 1.0, rng), gaussian_matrix(6, 3, 1.0, rng), Matrix(6, 3)};
    const Matrix down = gaussian_matrix(7, 3, 1.0, rng);
    const auto rb = sample_rademacher(3, 7, 1, rng.next_u64());
    std::vector<Matrix> duals;
    for (int j = 0; j < 3; ++j) duals.push_back(gaussian_matrix(5, 1, 1.0, rng));
    const std::vector<std::size_t> batch{0, 2, 3, 6};
    tally(fd::worst_relative_error(
        [&](const std::vector<Matrix>& p) {
          CeModel m = rm;
          m.set_params(p);
          return radreg_loss_and_grad(m, duals, rb, data, down, batch, 0.3).loss;
        },
        rm.params(), radreg_loss_and_grad(rm, duals, rb, data, down, batch, 0.3).grad_w, kFdStep));
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < kGradSeconds,
          "80 draws, worst rel err " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome inner_sup() {
  Rng rng(102, "acceptance");
  double worst = 0.0;
  std::size_t bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + rng.below(12), p = 2 + rng.below(6), o = 2 + rng.below(4);
    const Matrix reps = gaussian_matrix(n, p, 1.0, rng);
    std::vector<double> sigma(n);
    for (double& v : sigma) v = rng.sign();
    const double r = 0.2 + 3.0 * rng.uniform();
    // R‖(1/n) Hᵀσ‖ and R‖(1/n) HᵀS‖_F
    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(sigma.data(), n);
    const double binary = r * (to_eigen(reps).transpose() * s).norm() / n;
    Matrix signs(n, o);
    for (double& v : signs.data()) v = rng.sign();
    const double multi = r * (to_eigen(reps).transpose() * to_eigen(signs)).norm() / n;
    const Matrix mom = rademacher_moment(reps, signs);
    const double e = std::max({std::abs(inner_sup_binary(reps, sigma, r).value - binary),
                               std::abs(inner_sup_binary_ascent(reps, sigma, r, 500).value - binary),
                               std::abs(inner_sup_multiclass(mom, r).value - multi),
                               std::abs(inner_sup_multiclass_ascent(mom, r, 500).value - multi)});
    worst = std::max(worst, e);
    if (!(e < kInnerSupTol)) ++bad;
  }
  return {bad == 0, "50 instances, worst abs gap " + fmt("%.2e", worst)};
}

Outcome sa_verifiers() {
  Rng rng(103, "acceptance");
  std::size_t contraction_bad = 0, growth_bad = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t d = 2 + rng.below(4), k = 2 + rng.below(3);
    const SaLayer layer = random_layer(d, 1 + rng.below(d), 2 + rng.below(6), 0.1 + 0.5 * rng.uniform(), rng);
    if (!verify_sa_contraction(layer, k, 3, rng.next_u64()).passed) ++contraction_bad;
  }
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t k = 2 + rng.below(3), d = 2 + rng.below(4);
    const TransformerEncoder enc = init_transformer(k, d, 1 + rng.below(d), 2 + rng.below(6), 1 + rng.below(3),
                                                    0.1 + 0.8 * rng.uniform(), 0.1 + 0.8 * rng.uniform(), rng);
    if (!verify_norm_growth(enc, gaussian_matrix(k, d, 1.0 + 3.0 * rng.uniform(), rng)).passed) ++growth_bad;
  }
  return {contraction_bad == 0 && growth_bad == 0,
          "contraction violations " + std::to_string(contraction_bad) + "/100, norm-growth violations " +
              std::to_string(growth_bad) + "/100"};
}

// φ(r) = 10√(Hcr/N)·max{1, ln((2/5)√(bN/(Hc)))}, written out independently
double phi_oracle(double r, double h, double c, double b, double n) {
  const double lf = std::max(1.0, std::log(0.4 * std::sqrt(b * n / (h * c))));
  return 10.0 * std::sqrt(h * c * r / n) * lf;
}

Outcome fixed_point() {
  Rng rng(104, "acceptance");
  const double hand = local_rad_fixed_point(1.0, 1.0, 1.0, 100.0);
  double worst = std::abs(phi_oracle(hand, 1.0, 1.0, 1.0, 100.0) - hand) / hand;
  bool ok = std::abs(hand - kHandFixedPoint) < kHandTol && worst < kFixedPointTol;
  for (int draw = 0; draw < 100; ++draw) {
    const double h = std::exp(rng.uniform() * 6 - 3), c = std::exp(rng.uniform() * 10 - 5);
    const double b = std::exp(rng.uniform() * 6 - 3), n = std::exp(rng.uniform() * 14);
    const double r = local_rad_fixed_point(h, c, b, n);
    const double res = std::abs(phi_oracle(r, h, c, b, n) - r) / r;
    worst = std::max(worst, res);
    ok = ok && res < kFixedPointTol;
  }
  return {ok, "hand r* " + fmt("%.6f", hand) + ", worst residual " + fmt("%.2e", worst)};
}

Outcome tv_and_ruhe() {
  Rng rng(105, "acceptance");
  std::size_t tv_bad = 0, ruhe_bad = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t k = 2 + rng.below(9);
    std::vector<double> p(k), q(k);
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      sp += (p[i] = rng.uniform());
      sq += (q[i] = rng.uniform());
    }
    for (std::size_t i = 0; i < k; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    // sup over all 2^k events
    double sup = 0.0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
      double gap = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        if (mask >> i & 1) gap += p[i] - q[i];
      sup = std::max(sup, std::abs(gap));
    }
    if (!(std::abs(tv_distance(p, q) - sup) < kTvTol)) ++tv_bad;
  }
  for (int draw = 0; draw < 100; ++draw) {
    const Matrix a0 = gaussian_matrix(4, 4, 1.0, rng), b0 = gaussian_matrix(4, 4, 1.0, rng);
    const Matrix a = matmul_nt(a0, a0), b = matmul_nt(b0, b0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(to_eigen(a)), eb(to_eigen(b));
    const Eigen::VectorXd la = ea.eigenvalues(), lb = eb.eigenvalues();  // ascending
    const double tr = (to_eigen(a) * to_eigen(b)).trace();
    double lower = 0.0, upper = 0.0;
    for (int i = 0; i < 4; ++i) {
      lower += la(i) * lb(3 - i);
      upper += la(i) * lb(i);
    }
    const double scale = 1.0 + std::abs(upper);
    const bool holds = lower <= tr + kRuheSlack * scale && tr <= upper + kRuheSlack * scale;
    const auto lib = ruhe_check(a, b);
    if (!holds || !lib.ok || std::abs(lib.lower - lower) > kRuheSlack * scale ||
        std::abs(lib.upper - upper) > kRuheSlack * scale)
      ++ruhe_bad;
  }
  return {tv_bad == 0 && ruhe_bad == 0,
          "TV mismatches " + std::to_string(tv_bad) + "/100, Ruhe failures " + std::to_string(ruhe_bad) + "/100"};
}

Outcome monotonicity() {
  BoundParams base;
  base.w_caps = {1.2, 0.8};
  base.b_caps = {1.5, 0.9};
  base.z_norm = 2.0;
  base.x_norm = 1.5;
  base.x_star = 1.1;
  base.k = 3;
  base.n = 40;
  base.big_n = 2000;
  base.nu = 0.05;
  base.tv = 0.1;
  using Bump = std::function<void(BoundParams&, int)>;
  const double step = 1.08;
  std::vector<std::pair<Bump, int>> sweeps;  // +1: nondecreasing along the sweep, −1: nonincreasing
  for (std::size_t l = 0; l < base.w_caps.size(); ++l) {
    sweeps.push_back({[=](BoundParams& p, int i) { p.w_caps[l] *= std::pow(step, i); }, +1});
    sweeps.push_back({[=](BoundParams& p, int i) { p.b_caps[l] *= std::pow(step, i); }, +1});
  }
  sweeps.push_back({[=](BoundParams& p, int i) { p.z_norm *= std::pow(step, i); }, +1});
  sweeps.push_back({[=](BoundParams& p, int i) { p.x_norm *= std::pow(step, i); }, +1});
  sweeps.push_back({[=](BoundParams& p, int i) { p.x_star *= std::pow(step, i); }, +1});
  sweeps.push_back({[](BoundParams& p, int i) { p.n += 5 * i; }, -1});
  sweeps.push_back({[](BoundParams& p, int i) { p.big_n = static_cast<std::size_t>(p.big_n * std::pow(1.5, i)); }, -1});

  std::size_t bad = 0, checked = 0;
  for (auto variant : {FormulaVariant::kDetailed, FormulaVariant::kCompact}) {
    for (auto eval : {ce_bound, mae_bound}) {
      for (const auto& [bump, sign] : sweeps) {
        double prev = 0.0;
        for (int i = 0; i < 20; ++i) {
          BoundParams p = base;
          p.variant = variant;
          bump(p, i);
          const double v = eval(p).total;
          if (i > 0 && sign * (v - prev) < -1e-12 * std::abs(prev)) ++bad;
          prev = v;
          ++checked;
        }
      }
      BoundParams sure = base;
      sure.variant = variant;
      sure.nu = 1.0;
      if (eval(sure).confidence != 0.0) ++bad;
    }
  }
  return {bad == 0, std::to_string(checked) + " sweep points, violations " + std::to_string(bad)};
}

// Ψ_ρ(w) by grid search plus golden-section refinement
double envelope_1d(double w, double rho) {
  auto obj = [&](double x) { return std::cos(x) + (x - w) * (x - w) / (2.0 * rho); };
  double best_x = w, best = obj(w);
  for (int k = -4000; k <= 4000; ++k) {
    const double x = w + 2.0 * k / 4000.0;
    if (obj(x) < best) {
      best = obj(x);
      best_x = x;
    }
  }
  double lo = best_x - 1e-3, hi = best_x + 1e-3;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (obj(a) < obj(b)) hi = b; else lo = a;
  }
  return obj(0.5 * (lo + hi));
}

Outcome moreau() {
  Oracle quad = [](std::span<const double> w, std::vector<double>* g) {
    if (g) g->assign(w.begin(), w.end());
    double v = 0.0;
    for (double x : w) v += 0.5 * x * x;
    return v;
  };
  MoreauProbe probe;
  probe.l_hat = 1.0;
  probe.rho = 0.25;
  Rng rng(107, "acceptance");
  double quad_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> w(1 + rng.below(6));
    for (double& x : w) x = 4.0 * rng.uniform() - 2.0;
    const auto g = moreau_gradient(quad, w, probe);
    for (std::size_t k = 0; k < w.size(); ++k) quad_err = std::max(quad_err, std::abs(g[k] - 0.8 * w[k]));
  }

  Oracle cosine = [](std::span<const double> w, std::vector<double>* g) {
    if (g) g->assign(1, -std::sin(w[0]));
    return std::cos(w[0]);
  };
  MoreauProbe cp;
  cp.l_hat = 1.0;
  cp.rho = 0.1;
  double cos_err = 0.0;
  for (double w0 : {-2.0, -0.7, 0.3, 1.1, 2.5}) {
    const std::vector<double> w{w0};
    const double g = moreau_gradient(cosine, w, cp)[0];
    const double h = 1e-4;
    const double fd = (envelope_1d(w0 + h, 0.1) - envelope_1d(w0 - h, 0.1)) / (2.0 * h);
    cos_err = std::max(cos_err, std::abs(g - fd) / std::abs(fd));
  }
  return {quad_err < kQuadraticTol && cos_err < kCosTol,
          "quadratic err " + fmt("%.2e", quad_err) + ", cos rel err " + fmt("%.2e", cos_err)};
}

Outcome sgda() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t good = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const double lambda = 0.1, noise = 0.1;
    ToyBilinearProblem toy = ToyBilinearProblem::random(5, 3, 2, 1.0, noise, seed);
    StepSizeInputs in;
    in.epsilon = 0.3;
    in.smoothness = toy.smoothness(lambda);
    in.dual_radius = 1.0;
    in.grad_bound = toy.gradient_bound(5.0, lambda);
    in.noise = noise;
    const auto steps = theoretical_step_sizes(in);
    SgdaConfig cfg;
    cfg.eta = steps.eta;
    cfg.gamma = steps.gamma;
    cfg.iterations = 5000;
    cfg.probe_every = 50;
    cfg.seed = seed;
    const auto r = radreg_train(toy, lambda, cfg);
    const auto rep = convergence_report(r.state.traces);
    double at50 = NAN;
    for (std::size_t k = 0; k < r.state.traces.probe_iters.size(); ++k)
      if (r.state.traces.probe_iters[k] == 50) at50 = rep.running_average[k];
    const bool ok = rep.final_average < at50;
    if (ok) ++good;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " " +
              fmt("%.3e", at50) + " -> " + fmt("%.3e", rep.final_average);
  }
  const double secs = seconds_since(t0);
  return {good == 3 && secs < kSgdaSeconds, detail + ", " + fmt("%.1f", secs) + " s"};
}

Outcome radreg_effect() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg;  // N = 200, n = 32, d = 16, two-layer MLP
  cfg.variants = {Regularizer::kNone, Regularizer::kRadReg};
  const auto rep = run_comparison(cfg);
  std::size_t wins = 0;
  std::string detail;
  const std::size_t seeds = cfg.seeds.size();
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto& none = rep.runs[s];
    const auto& rad = rep.runs[seeds + s];
    if (none.error.empty() && rad.error.empty() && rad.rad_est <= none.rad_est) ++wins;
    detail += fmt("%.3f", rad.rad_est) + " vs " + fmt("%.3f", none.rad_est) + (s + 1 < seeds ? ", " : "");
  }

  // λ = 0 against the unregularized trajectory
  ExperimentConfig zero = cfg;
  zero.radreg_lambda = 0.0;
  bool exact = true;
  for (std::uint64_t seed : cfg.seeds) {
    const SplitTask st = make_split_task(zero, seed);
    const TrainedEncoder plain = pretrain_model(zero, Regularizer::kNone, seed, st);
    const TrainedEncoder reg = pretrain_model(zero, Regularizer::kRadReg, seed, st);
    exact = exact && plain.loss_trace == reg.loss_trace && plain.ce.params() == reg.ce.params();
  }
  const double secs = seconds_since(t0);
  return {wins >= 2 && exact && secs < kRadRegSeconds,
          "radreg <= none in " + std::to_string(wins) + "/3 (" + detail + "), lambda=0 bit-exact " +
              (exact ? "yes" : "no") + ", " + fmt("%.1f", secs) + " s"};
}

Outcome transfer_probe() {
  Rng rng(110, "acceptance");
  const Matrix h = gaussian_matrix(60, 4, 1.0, rng);
  const Matrix w_star = gaussian_matrix(3, 4, 1.0, rng);
  const Matrix theta = gaussian_matrix(4, 1, 1.0, rng);
  const Matrix score = matmul(h, theta);
  std::vector<double> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = score(i, 0) >= 0.0 ? 1.0 : -1.0;
  TransferProbeConfig pc;
  pc.radius = 3.0;
  const auto same = transferability_probe(h, h, w_star, y, pc);
  const bool identical = std::abs(same.delta_ft) < kProbeTol && same.delta_pt < kProbeTol &&
                         frobenius_norm(same.lambda_schur) < kProbeTol;

  const Matrix x = gaussian_matrix(200, 6, 1.0, rng);
  const Matrix p = gaussian_matrix(4, 6, 1.0, rng);
  const Matrix e = gaussian_matrix(4, 6, 1.0, rng);
  const Matrix ws = gaussian_matrix(5, 4, 1.0, rng);
  const Matrix th = gaussian_matrix(4, 1, 1.0, rng);
  const Matrix h_star = matmul_nt(x, p);
  const Matrix sc = matmul(h_star, th);
  std::vector<double> yy(200);
  for (std::size_t i = 0; i < 200; ++i) yy[i] = sc(i, 0) >= 0.0 ? 1.0 : -1.0;
  pc.radius = 5.0;
  std::size_t violations = 0;
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double eps = std::pow(10.0, -3.0 + k / 3.0);
    const auto r = transferability_probe(matmul_nt(x, p + e * eps), h_star, ws, yy, pc);
    if (!std::isfinite(r.ratio) || !(r.ratio <= r.ceiling * (1.0 + 1e-9) + 1e-12)) ++violations;
    if (r.ceiling > 0.0) worst = std::max(worst, r.ratio / r.ceiling);
  }
  return {identical && violations == 0,
          std::string("identical ") + (identical ? "ok" : "FAILED") + ", sweep violations " +
              std::to_string(violations) + "/10, worst ratio/ceiling " + fmt("%.3f", worst)};
}

Outcome endtoend() {
  EndToEndConfig zero_cfg;
  zero_cfg.pretrain_iters = 0;
  zero_cfg.finetune_iters = 0;
  const DriftTrace zero = endtoend_gd_experiment(zero_cfg);
  bool zero_ok = true;
  for (const auto& layer : zero.drift_fro) zero_ok = zero_ok && layer.size() == 1 && layer[0] == 0.0;

  EndToEndConfig cfg;  // m = 256, L = 2, N = 50, n = 10
  const DriftTrace tr = endtoend_gd_experiment(cfg);
  bool finite = tr.failure.empty();
  double one_step = 0.0, max_pre = 0.0;
  for (std::size_t l = 0; l < tr.drift_fro.size(); ++l) {
    finite = finite && tr.drift_fro[l][0] == 0.0;
    for (double v : tr.drift_fro[l]) finite = finite && std::isfinite(v);
    one_step = std::max(one_step, std::abs(tr.drift_fro[l][1] - tr.eta * tr.initial_grad_fro[l]));
    max_pre = std::max(max_pre, tr.drift_fro[l][tr.pretrain_iters]);
  }
  const bool decreases = tr.final_finetune_loss < tr.initial_finetune_loss;
  const bool golden = std::abs(max_pre - kGoldenMaxPretrainDrift) <= kGoldenRel * kGoldenMaxPretrainDrift &&
                      std::abs(tr.final_finetune_loss - kGoldenFinalFinetuneLoss) <=
                          kGoldenRel * kGoldenFinalFinetuneLoss;
  return {zero_ok && finite && one_step < kOneStepTol && decreases && golden,
          "one-step gap " + fmt("%.1e", one_step) + ", max pretrain drift " + fmt("%.10g", max_pre) +
              ", finetune loss " + fmt("%.6g", tr.initial_finetune_loss) + " -> " +
              fmt("%.10g", tr.final_finetune_loss) + (golden ? "" : " (golden mismatch)")};
}

std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::ifstream f(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    files[entry.path().filename().string()] = ss.str();
  }
  return files;
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "radlab_acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto cfg_path = (dir / "smallest.toml").string();
  {
    std::ofstream(cfg_path) << "[task]\npretrain_count = 20\ndownstream_count = 8\ndim = 4\ntest_count = 20\n"
                               "[model]\nwidth = 8\ndepth = 1\n"
                               "[pretrain]\niterations = 40\n"
                               "[regularizer]\nconfigs = 4\n"
                               "[finetune]\niterations = 30\n"
                               "[eval]\nrad_configs = 20\n"
                               "[run]\nseeds = [7]\n";
  }
  const auto out = (dir / "out").string();
  const char* argv[] = {"radlab", "experiment", "--config", cfg_path.c_str(), "--out", out.c_str()};
  std::ostringstream o1, o2, err;
  const int c1 = cli_main(6, argv, o1, err);
  const auto first = snapshot(out);
  std::filesystem::remove_all(out);
  const int c2 = cli_main(6, argv, o2, err);
  const auto second = snapshot(out);
  std::filesystem::remove_all(dir);
  const bool same = c1 == 0 && c2 == 0 && o1.str() == o2.str() && first == second && !first.empty();
  return {same, std::to_string(first.size()) + " files " + (same ? "identical" : "differ")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"gradient fidelity", gradient_fidelity},
      {"closed-form vs iterative inner sup", inner_sup},
      {"self-attention contraction and norm growth", sa_verifiers},
      {"local Rademacher fixed point", fixed_point},
      {"total variation and Ruhe trace inequality", tv_and_ruhe},
      {"bound monotonicity", monotonicity},
      {"Moreau envelope gradient", moreau},
      {"SGDA Moreau running average", sgda},
      {"Rademacher regularization effect", radreg_effect},
      {"transferability probe", transfer_probe},
      {"end-to-end GD drift", endtoend},
      {"experiment determinism", determinism},
  };
  int failures = 0;
  int index = 1;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.ok) ++failures;
    std::printf("%s %2d %s: %s\n", o.ok ? "PASS" : "FAIL", index++, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/12 criteria passed\n", 12 - failures);
  return failures;
}
