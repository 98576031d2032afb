#include "radlab/verify.hpp"

#include <algorithm>
#include <cmath>

#include "radlab/bounds.hpp"
#include "radlab/experiment.hpp"
#include "radlab/minimax.hpp"

namespace radlab {

double gradient_check(const std::function<double(const std::vector<Matrix>&)>& f, std::vector<Matrix> params,
                      const std::vector<Matrix>& grads, double h) {
  if (grads.size() != params.size()) throw DimensionError("gradient_check: gradient count");
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      double& x = params[p].data()[k];
      const double orig = x;
      x = orig + h;
      const double up = f(params);
      x = orig - h;
      const double down = f(params);
      x = orig;
      const double num = (up - down) / (2.0 * h);
      const double ana = grads[p].data()[k];
      diff2 += (num - ana) * (num - ana);
      a2 += ana * ana;
      n2 += num * num;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8}));
  }
  return worst;
}

namespace {

class Tally {
 public:
  explicit Tally(std::string name) { r_.name = std::move(name); }
  void add(bool ok, double measure = 0.0) {
    ++r_.total;
    if (ok) ++r_.passed;
    r_.worst = std::max(r_.worst, measure);
  }
  CheckResult done() const { return r_; }

 private:
  CheckResult r_;
};

constexpr double kGradTol = 1e-5;

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

CheckResult mlp_gradients(Rng& rng) {
  Tally t("gradient.mlp_mse");
  for (int draw = 0; draw < 20; ++draw) {
    CeModel model{init_mlp_encoder(4, 6, 2, rng), gaussian_matrix(4, 6, 0.3, rng)};
    const Matrix in = gaussian_matrix(5, 4, 1.0, rng), target = gaussian_matrix(5, 4, 1.0, rng);
    const auto g = ce_mse_loss(model, in, target);
    const double err = gradient_check(
        [&](const std::vector<Matrix>& p) {
          CeModel m = model;
          m.set_params(p);
          return ce_mse_loss(m, in, target).loss;
        },
        model.params(), g.grads);
    t.add(err < kGradTol, err);
  }
  return t.done();
}

CheckResult logistic_gradients(Rng& rng) {
  Tally t("gradient.mlp_logistic");
  for (int draw = 0; draw < 20; ++draw) {
    const MlpEncoder enc = init_mlp_encoder(4, 6, 2, rng);
    const Matrix theta = gaussian_matrix(6, 1, 1.0, rng), x = gaussian_matrix(7, 4, 1.0, rng);
    std::vector<double> y(7);
    for (double& v : y) v = rng.sign();
    std::vector<Matrix> params = enc.layers;
    params.push_back(theta);
    const auto g = mlp_logistic_loss(enc, theta, x, y);
    const double err = gradient_check(
        [&](const std::vector<Matrix>& p) {
          MlpEncoder e;
          e.layers.assign(p.begin(), p.end() - 1);
          return mlp_logistic_loss(e, p.back(), x, y).loss;
        },
        params, g.grads);
    t.add(err < kGradTol, err);
  }
  return t.done();
}

CheckResult sa_gradients(Rng& rng) {
  Tally t("gradient.sa_layer");
  for (int draw = 0; draw < 20; ++draw) {
    const SaLayer layer = random_layer(3, 2, 4, 0.3, rng);
    const Matrix x = gaussian_matrix(3, 3, 1.0, rng), dir = gaussian_matrix(3, 3, 1.0, rng);
    const SaGrad g = sa_backward(layer, sa_forward_cached(layer, x), dir);
    auto value = [&](const std::vector<Matrix>& p) {
      SaLayer l = layer;
      l.w_v = p[0];
      l.w_k = p[1];
      l.w_q = p[2];
      l.w_fc1 = p[3];
      l.w_fc2 = p[4];
      return dot(sa_forward(l, p[5]).data(), dir.data());
    };
    const double err = gradient_check(value, {layer.w_v, layer.w_k, layer.w_q, layer.w_fc1, layer.w_fc2, x},
                                      {g.w_v, g.w_k, g.w_q, g.w_fc1, g.w_fc2, g.input});
    t.add(err < kGradTol, err);
  }
  return t.done();
}

CheckResult radreg_gradients(Rng& rng) {
  Tally t("gradient.radreg");
  for (int draw = 0; draw < 20; ++draw) {
    CeModel model{init_mlp_encoder(3, 5, 2, rng), gaussian_matrix(3, 5, 0.4, rng)};
    const CeData data{gaussian_matrix(6, 3, 1.0, rng), gaussian_matrix(6, 3, 1.0, rng), Matrix(6, 3)};
    const Matrix down = gaussian_matrix(7, 3, 1.0, rng);
    const auto rb = sample_rademacher(3, 7, 1, rng.next_u64());
    std::vector<Matrix> duals;
    for (int j = 0; j < 3; ++j) duals.push_back(gaussian_matrix(5, 1, 1.0, rng));
    const std::vector<std::size_t> batch{0, 2, 3, 6};
    const auto r = radreg_loss_and_grad(model, duals, rb, data, down, batch, 0.3);
    const double err = gradient_check(
        [&](const std::vector<Matrix>& p) {
          CeModel m = model;
          m.set_params(p);
          return radreg_loss_and_grad(m, duals, rb, data, down, batch, 0.3).loss;
        },
        model.params(), r.grad_w);
    t.add(err < kGradTol, err);
  }
  return t.done();
}

CheckResult inner_sups(Rng& rng) {
  Tally t("inner_sup.closed_vs_ascent");
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix reps = gaussian_matrix(8, 5, 1.0, rng);
    std::vector<double> sigma(8);
    for (double& v : sigma) v = rng.sign();
    const double r = 0.5 + rng.uniform();
    const double e1 = std::abs(inner_sup_binary(reps, sigma, r).value - inner_sup_binary_ascent(reps, sigma, r).value);
    Matrix s(8, 3);
    for (double& v : s.data()) v = rng.sign();
    const Matrix mom = rademacher_moment(reps, s);
    const double e2 = std::abs(inner_sup_multiclass(mom, r).value - inner_sup_multiclass_ascent(mom, r).value);
    t.add(e1 < 1e-3 && e2 < 1e-3, std::max(e1, e2));
  }
  return t.done();
}

CheckResult contraction(Rng& rng) {
  Tally t("sa.contraction");
  for (int draw = 0; draw < 100; ++draw) {
    const SaLayer layer = random_layer(4, 2, 6, 0.3, rng);
    const auto out = verify_sa_contraction(layer, 3, 2, rng.next_u64());
    t.add(out.passed, out.worst_ratio);
  }
  return t.done();
}

CheckResult norm_growth(Rng& rng) {
  Tally t("sa.norm_growth");
  for (int draw = 0; draw < 100; ++draw) {
    const TransformerEncoder enc = init_transformer(3, 4, 2, 6, 3, 0.5, 0.5, rng);
    const auto out = verify_norm_growth(enc, gaussian_matrix(3, 4, 1.0, rng));
    t.add(out.passed, out.worst_ratio);
  }
  return t.done();
}

CheckResult fixed_points(Rng& rng) {
  Tally t("bounds.fixed_point");
  const double hand = local_rad_fixed_point(1.0, 1.0, 1.0, 100.0);
  t.add(std::abs(hand - 1.92181) < 1e-4 && fixed_point_residual(1.0, 1.0, 1.0, 100.0) < 1e-10);
  for (int draw = 0; draw < 100; ++draw) {
    const double h = std::exp(rng.uniform() * 6 - 3), c = std::exp(rng.uniform() * 10 - 5);
    const double b = std::exp(rng.uniform() * 6 - 3), n = std::exp(rng.uniform() * 14);
    const double res = fixed_point_residual(h, c, b, n);
    t.add(res < 1e-10, res);
  }
  return t.done();
}

std::vector<double> random_distribution(std::size_t k, Rng& rng) {
  std::vector<double> v(k);
  double s = 0.0;
  for (double& x : v) s += (x = rng.uniform());
  for (double& x : v) x /= s;
  return v;
}

CheckResult total_variation(Rng& rng) {
  Tally t("bounds.tv");
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t k = 2 + rng.below(10);
    const auto p = random_distribution(k, rng), q = random_distribution(k, rng);
    const double gap = std::abs(tv_distance(p, q) - tv_event_sup(p, q));
    t.add(gap < 1e-12, gap);
  }
  return t.done();
}

CheckResult ruhe(Rng& rng) {
  Tally t("bounds.ruhe");
  for (int draw = 0; draw < 100; ++draw) {
    const Matrix a = gaussian_matrix(4, 4, 1.0, rng), b = gaussian_matrix(4, 4, 1.0, rng);
    t.add(ruhe_check(matmul_nt(a, a), matmul_nt(b, b)).ok);
  }
  return t.done();
}

CheckResult monotonicity(Rng& rng) {
  Tally t("bounds.monotonicity");
  for (int point = 0; point < 20; ++point) {
    BoundParams p;
    const std::size_t layers = 1 + rng.below(3);
    for (std::size_t l = 0; l < layers; ++l) {
      p.w_caps.push_back(0.5 + 2.0 * rng.uniform());
      p.b_caps.push_back(0.5 + 2.0 * rng.uniform());
    }
    p.z_norm = 0.5 + 3.0 * rng.uniform();
    p.x_norm = 0.5 + 3.0 * rng.uniform();
    p.x_star = 0.5 + 2.0 * rng.uniform();
    p.k = 1 + rng.below(4);
    p.alpha1 = 0.05 + 0.5 * rng.uniform();
    p.alpha2 = 0.05 + 0.5 * rng.uniform();
    p.n = 10 + rng.below(100);
    p.big_n = 100 + rng.below(10000);
    bool ok = true;
    for (auto eval : {ce_bound, mae_bound}) {
      const double base = eval(p).total;
      auto moved = [&](auto bump) {
        BoundParams q = p;
        bump(q);
        return eval(q).total;
      };
      for (std::size_t l = 0; l < layers; ++l) {
        ok = ok && moved([&](BoundParams& q) { q.w_caps[l] *= 1.1; }) >= base;
        ok = ok && moved([&](BoundParams& q) { q.b_caps[l] *= 1.1; }) >= base;
      }
      ok = ok && moved([](BoundParams& q) { q.z_norm *= 1.1; }) >= base;
      ok = ok && moved([](BoundParams& q) { q.x_norm *= 1.1; }) >= base;
      ok = ok && moved([](BoundParams& q) { q.x_star *= 1.1; }) >= base;
      ok = ok && moved([](BoundParams& q) { q.n += 5; }) <= base;
      ok = ok && moved([](BoundParams& q) { q.big_n *= 2; }) <= base;
      BoundParams sure = p;
      sure.nu = 1.0;
      ok = ok && eval(sure).confidence == 0.0;
    }
    t.add(ok);
  }
  return t.done();
}

CheckResult moreau(Rng&) {
  Tally t("moreau.quadratic");
  Oracle q = [](std::span<const double> w, std::vector<double>* g) {
    if (g) g->assign(w.begin(), w.end());
    double v = 0.0;
    for (double x : w) v += 0.5 * x * x;
    return v;
  };
  MoreauProbe probe;
  probe.l_hat = 1.0;
  probe.rho = 0.25;
  const std::vector<double> w{1.0, -2.0, 0.5};
  const auto g = moreau_gradient(q, w, probe);
  double err = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) err = std::max(err, std::abs(g[k] - 0.8 * w[k]));
  t.add(err < 1e-6, err);
  return t.done();
}

CheckResult formats(Rng& rng) {
  Tally t("io.round_trip");
  std::vector<NamedTensor> tensors{{"a", gaussian_matrix(3, 2, 1.0, rng)}, {"empty", Matrix(0, 4)}};
  const auto back = decode_weights(encode_weights(tensors));
  bool same = back.size() == tensors.size();
  for (std::size_t i = 0; same && i < back.size(); ++i) same = back[i].name == tensors[i].name && back[i].value == tensors[i].value;
  t.add(same);

  ComparisonReport rep;
  RunRecord r;
  r.lambda = 0.1;
  r.final_acc = rng.uniform();
  r.best_acc = rng.uniform();
  r.train_acc = rng.uniform();
  r.rad_est = rng.uniform();
  rep.runs.push_back(r);
  const auto rows = parse_comparison_csv(comparison_csv(rep));
  t.add(!rows.empty() && rows[0].values == std::vector<double>{r.lambda, r.final_acc, r.best_acc, r.train_acc, r.rad_est});
  return t.done();
}

}  // namespace

std::vector<CheckResult> run_property_suite(std::uint64_t seed) {
  Rng rng(seed, "verify");
  std::vector<CheckResult> out;
  for (auto check : {mlp_gradients, logistic_gradients, sa_gradients, radreg_gradients, inner_sups, contraction,
                     norm_growth, fixed_points, total_variation, ruhe, monotonicity, moreau, formats}) {
    out.push_back(check(rng));
  }
  return out;
}

}  // namespace radlab
