#include "radlab/bounds.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "radlab/pretrain.hpp"
#include "radlab/rng.hpp"

namespace radlab {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("BoundParams: ") + name + " must be positive");
}

double sq(double x) { return x * x; }

// Σ x_iᵀ x_i / n for row samples.
Matrix second_moment(const Matrix& a, const Matrix& b) {
  Matrix s = matmul_tn(a, b);
  s *= 1.0 / static_cast<double>(a.rows());
  return s;
}

double mean_logistic(const Matrix& reps, std::span<const double> y, const Matrix& theta, Matrix* grad) {
  const Matrix out = matmul(reps, theta);
  const double n = static_cast<double>(reps.rows());
  double loss = 0.0;
  Matrix d(reps.rows(), 1);
  for (std::size_t i = 0; i < reps.rows(); ++i) {
    const double z = y[i] * out(i, 0);
    loss += logistic_loss(z);
    d(i, 0) = y[i] * logistic_derivative(z) / n;
  }
  if (grad) *grad = matmul_tn(reps, d);
  return loss / n;
}

// Projected GD with step 1/L̂, L̂ = σmax(Σ)/4 bounding the Hessian of the mean
// logistic risk; monotone from any feasible start.
Matrix fit_head(const Matrix& reps, std::span<const double> y, Matrix theta, double radius, std::size_t iters) {
  const double smooth = spectral_norm(second_moment(reps, reps)) / 4.0;
  if (smooth <= 0.0) return theta;
  const double step = 1.0 / smooth;
  project_frobenius_ball(theta, radius);
  Matrix g;
  for (std::size_t t = 0; t < iters; ++t) {
    mean_logistic(reps, y, theta, &g);
    theta -= g * step;
    project_frobenius_ball(theta, radius);
  }
  return theta;
}

// mean ‖z_i − W r_i‖² at the least-squares decoder W = Σ_zr Σ_rr†.
double decoder_residual(const Matrix& reps, const Matrix& targets, double cutoff) {
  const Matrix w = matmul(second_moment(targets, reps), pinv_symmetric(second_moment(reps, reps), cutoff));
  const Matrix resid = targets - matmul_nt(reps, w);
  return sq(frobenius_norm(resid)) / static_cast<double>(reps.rows());
}

double pretrain_term(const BoundParams& p, double c, BoundDecomposition& out) {
  out.c = c;
  // c = 0 (nothing to cover) is the r* → 0 limit
  out.fixed_point = c > 0.0 ? local_rad_fixed_point(p.h, c, p.b, static_cast<double>(p.big_n)) : 0.0;
  out.pretrain_excess = out.fixed_point + std::log(1.0 / p.nu) / static_cast<double>(p.big_n);
  return p.c_beta * std::pow(out.pretrain_excess, p.beta);
}

void finish(const BoundParams& p, BoundDecomposition& out) {
  const double n = static_cast<double>(p.n);
  out.confidence = 4.0 * p.b_phi * std::sqrt(std::log(1.0 / p.nu) / n);
  out.tv_term = 4.0 * p.b_phi * p.tv;
  out.total = out.complexity + out.pretrain + out.confidence + out.tv_term;
}

}  // namespace

void BoundParams::validate() const {
  if (w_caps.empty() || w_caps.size() != b_caps.size()) {
    throw ValidationError("BoundParams: w_caps and b_caps must be non-empty and of equal length");
  }
  for (double w : w_caps) require_positive(w, "W(l)");
  for (double b_cap : b_caps) require_positive(b_cap, "B(l)");
  require_positive(z_norm, "z_norm");
  require_positive(x_norm, "x_norm");
  require_positive(x_star, "x_star");
  for (auto [v, name] : {std::pair{d, "d"}, {m, "m"}, {k, "k"}, {d_k, "d_k"}, {n, "n"}, {big_n, "big_n"}}) {
    if (v == 0) throw ValidationError(std::string("BoundParams: ") + name + " must be at least 1");
  }
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0)) throw ValidationError("BoundParams: alpha1, alpha2 must be non-negative");
  if (!(nu > 0.0 && nu <= 1.0)) throw ValidationError("BoundParams: nu must lie in (0, 1]");
  require_positive(h, "h");
  require_positive(b, "b");
  require_positive(g_phi, "g_phi");
  require_positive(b_phi, "b_phi");
  require_positive(radius, "radius");
  require_positive(c_beta, "c_beta");
  if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("BoundParams: beta must lie in (0, 1]");
  if (!(tv >= 0.0 && tv <= 1.0)) throw ValidationError("BoundParams: tv must lie in [0, 1]");
}

double nn_covering_ln(const BoundParams& p, double eps) {
  if (!(eps > 0.0)) throw ValidationError("nn_covering_ln: eps must be positive");
  p.validate();
  double prod = 1.0, sum = 0.0;
  for (std::size_t l = 0; l < p.w_caps.size(); ++l) {
    prod *= sq(p.w_caps[l]);
    const double ratio = p.b_caps[l] / p.w_caps[l];
    sum += p.variant == FormulaVariant::kDetailed ? std::cbrt(ratio * ratio) : ratio;
  }
  const double md = static_cast<double>(p.m);
  return sq(p.z_norm) * std::log(2.0 * md * md) / sq(eps) * prod * sum * sum * sum;
}

TransformerConstants transformer_constants(const BoundParams& p) {
  p.validate();
  const double a1 = p.alpha1, a2 = p.alpha2;
  const double kk = static_cast<double>(p.k), dd = static_cast<double>(p.d);
  const double dk = static_cast<double>(p.d_k), mm = static_cast<double>(p.m);
  TransformerConstants out;
  double s_prev = 1.0;
  for (std::size_t l = 0; l < p.w_caps.size(); ++l) {
    const double w2 = sq(p.w_caps[l]), b2 = sq(p.b_caps[l]);
    const double s = s_prev * (a2 * w2 + 1.0) * (w2 * a1 * kk + 1.0);
    const double grown = s_prev * p.x_star;
    double rho;
    if (p.variant == FormulaVariant::kDetailed) {
      rho = sq(a1) * sq(a2 * w2 + 1.0) * b2 * std::log(2.0 * dd * dd) * (kk * kk + a1 * w2 * sq(grown) / dk) +
            sq(a2) * w2 * b2 * (w2 + sq(a1) * kk * kk * w2) * std::log(2.0 * dd * mm);
    } else {
      rho = sq(a1 * a2 * w2 + a1) * b2 * std::log(2.0 * dd * dd) * (kk * kk + a1 * w2 * w2 * sq(sq(grown)) / dk) +
            sq(a2) * w2 * b2 * (1.0 + sq(a1) * kk * kk * w2) * std::log(2.0 * dd * mm);
    }
    out.s.push_back(s);
    out.rho.push_back(rho);
    s_prev = s;
  }
  return out;
}

namespace {

double log_factor(double h, double c, double b, double big_n) {
  return std::max(1.0, std::log(0.4 * std::sqrt(b * big_n / (h * c))));
}

}  // namespace

double local_rad_fixed_point(double h, double c, double b, double big_n) {
  if (!(h > 0.0 && c > 0.0 && b > 0.0 && big_n > 0.0)) {
    throw ValidationError("local_rad_fixed_point: inputs must be positive");
  }
  return 100.0 * h * c / big_n * sq(log_factor(h, c, b, big_n));
}

double local_rad_phi(double r, double h, double c, double b, double big_n) {
  return 10.0 * std::sqrt(h * c * r / big_n) * log_factor(h, c, b, big_n);
}

double fixed_point_residual(double h, double c, double b, double big_n) {
  const double r = local_rad_fixed_point(h, c, b, big_n);
  return std::abs(local_rad_phi(r, h, c, b, big_n) - r) / r;
}

BoundDecomposition ce_bound(const BoundParams& p) {
  p.validate();
  BoundDecomposition out;
  double prod = 1.0;
  for (double w : p.w_caps) prod *= sq(w);
  out.complexity = 4.0 * p.radius * p.g_phi * std::sqrt(prod * sq(p.x_norm)) / static_cast<double>(p.n);
  out.pretrain = pretrain_term(p, 12.0 * nn_covering_ln(p, 1.0), out);
  finish(p, out);
  return out;
}

BoundDecomposition mae_bound(const BoundParams& p) {
  const auto tc = transformer_constants(p);
  BoundDecomposition out;
  const double s_l = tc.s.back();
  double rho_sum = 0.0;
  for (double r : tc.rho) rho_sum += r;
  out.complexity = 4.0 * p.radius * p.g_phi * std::sqrt(static_cast<double>(p.k) * sq(s_l) * sq(p.x_norm)) /
                   static_cast<double>(p.n);
  out.pretrain = pretrain_term(p, 12.0 * sq(s_l) * sq(p.z_norm) * rho_sum, out);
  finish(p, out);
  return out;
}

std::string bound_json(const BoundDecomposition& b) {
  nlohmann::ordered_json j;
  j["complexity"] = b.complexity;
  j["pretrain"] = b.pretrain;
  j["pretrain_excess"] = b.pretrain_excess;
  j["fixed_point"] = b.fixed_point;
  j["c"] = b.c;
  j["confidence"] = b.confidence;
  j["tv"] = b.tv_term;
  j["total"] = b.total;
  return j.dump(2);
}

namespace {

void require_distribution(std::span<const double> p, const char* name) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError(std::string("tv_distance: negative mass in ") + name);
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ValidationError(std::string("tv_distance: ") + name + " does not sum to 1");
}

}  // namespace

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("tv_distance: support sizes differ");
  require_distribution(p, "P");
  require_distribution(q, "Q");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double tv_event_sup(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("tv_event_sup: support sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::max(p[i] - q[i], 0.0);
  return s;
}

RuheResult ruhe_check(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    throw DimensionError("ruhe_check: need square matrices of equal size, got " + a.shape_string() + " and " +
                         b.shape_string());
  }
  const Matrix as = (a + transpose(a)) * 0.5;
  const Matrix bs = (b + transpose(b)) * 0.5;
  auto ea = symmetric_eigen(as).values;
  auto eb = symmetric_eigen(bs).values;
  for (double* v : {&ea.back(), &eb.back()}) {
    if (*v < -1e-10) throw ValidationError("ruhe_check: matrix is not positive semi-definite");
  }
  for (auto* e : {&ea, &eb})
    for (double& v : *e) v = std::max(v, 0.0);
  RuheResult r;
  const std::size_t n = ea.size();
  for (std::size_t i = 0; i < n; ++i) {
    r.upper += ea[i] * eb[i];
    r.lower += ea[i] * eb[n - 1 - i];
  }
  r.trace = trace(matmul(as, bs));
  const double tol = 1e-9 * (1.0 + std::abs(r.upper));
  r.ok = r.lower <= r.trace + tol && r.trace <= r.upper + tol;
  return r;
}

TransferProbeResult transferability_probe(const Matrix& h_hat, const Matrix& h_star, const Matrix& w_star,
                                          std::span<const double> labels, const TransferProbeConfig& cfg) {
  if (h_hat.rows() == 0) throw ValidationError("transferability_probe: no samples");
  if (h_hat.rows() != h_star.rows() || h_hat.cols() != h_star.cols()) {
    throw DimensionError("transferability_probe: representation shapes differ: " + h_hat.shape_string() + " vs " +
                         h_star.shape_string());
  }
  if (w_star.cols() != h_star.cols()) throw DimensionError("transferability_probe: W* does not match h*");
  if (labels.size() != h_hat.rows()) throw DimensionError("transferability_probe: label count");
  require_binary_labels(labels);
  if (!(cfg.radius > 0.0) || !(cfg.g_phi > 0.0)) throw ValidationError("transferability_probe: radius, g_phi > 0");

  const std::size_t p = h_hat.cols();
  const Matrix s_hh = second_moment(h_hat, h_hat);
  const Matrix s_ss = second_moment(h_star, h_star);
  const Matrix s_hs = second_moment(h_hat, h_star);  // E[ĥ h*ᵀ]
  const Matrix s_sh = transpose(s_hs);

  TransferProbeResult r;
  r.lambda_schur = s_hh - matmul(matmul(s_hs, pinv_symmetric(s_ss, cfg.pinv_cutoff)), s_sh);
  // Λ′ = Σ** − Σ*ĥ Σĥĥ† Σĥ*: error of the best linear map ĥ → h*.
  Matrix lam = s_ss - matmul(matmul(s_sh, pinv_symmetric(s_hh, cfg.pinv_cutoff)), s_hs);
  lam = (lam + transpose(lam)) * 0.5;

  // heads
  r.head_star = fit_head(h_star, labels, Matrix(p, 1), cfg.radius, cfg.head_iters);
  const Matrix transported = matmul(matmul(pinv_symmetric(s_hh, cfg.pinv_cutoff), s_hs), r.head_star);
  r.head_hat = fit_head(h_hat, labels, transported, cfg.radius, cfg.head_iters);
  r.delta_ft = mean_logistic(h_hat, labels, r.head_hat, nullptr) - mean_logistic(h_star, labels, r.head_star, nullptr);

  const Matrix targets = matmul_nt(h_star, w_star);
  r.delta_pt = std::max(0.0, decoder_residual(h_hat, targets, cfg.pinv_cutoff) -
                                 decoder_residual(h_star, targets, cfg.pinv_cutoff));

  const double num = std::max(0.0, dot(r.head_star.data(), matmul(lam, r.head_star).data()));
  const double den = std::max(0.0, trace(matmul(lam, matmul_tn(w_star, w_star))));
  const double tiny = 1e-12;
  if (den <= tiny) {
    r.ceiling = num <= tiny ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    r.ceiling = cfg.g_phi * std::sqrt(num / den);
  }
  const auto ew = symmetric_eigen(matmul_tn(w_star, w_star)).values;
  const double sigma_min = ew.empty() ? 0.0 : ew.back();
  r.loose_ceiling = sigma_min > tiny ? cfg.g_phi * frobenius_norm(r.head_star) / std::sqrt(sigma_min)
                                     : std::numeric_limits<double>::infinity();

  if (r.delta_pt <= tiny) {
    r.ratio = std::abs(r.delta_ft) <= 1e-9 ? 0.0 : std::numeric_limits<double>::infinity();
    r.bound_ok = r.delta_ft <= 1e-9;
  } else {
    r.ratio = r.delta_ft / std::sqrt(r.delta_pt);
    r.bound_ok = r.ratio <= r.ceiling * (1.0 + 1e-9) + 1e-12;
  }
  return r;
}

TransferProbeResult transferability_probe(const MlpEncoder& h_hat, const MlpEncoder& h_star, const Matrix& x,
                                          const Matrix& w_star, std::span<const double> labels,
                                          const TransferProbeConfig& cfg) {
  return transferability_probe(representations(h_hat, x), representations(h_star, x), w_star, labels, cfg);
}

VerifyOutcome verify_sa_contraction(const SaLayer& layer, std::size_t patches, std::size_t trials,
                                    std::uint64_t seed) {
  if (trials == 0) throw ValidationError("verify_sa_contraction: trials must be at least 1");
  layer.validate();
  const double w = layer.max_spectral_norm();
  const double kk = static_cast<double>(patches);
  const double lip = (layer.alpha2 * w * w + 1.0) * (layer.alpha1 * kk * w + 1.0);
  const std::size_t d = layer.model_dim();
  Rng rng(seed, "verify");
  VerifyOutcome out;
  out.trials = trials;
  auto unit = [](Matrix m) {
    const double f = frobenius_norm(m);
    if (f > 0.0) m *= 1.0 / f;
    return m;
  };
  for (std::size_t t = 0; t < trials; ++t) {
    const Matrix x = unit(gaussian_matrix(patches, d, 1.0, rng));
    // first trial pairs X with itself; later ones use perturbations of varying size
    const double scale = t == 0 ? 0.0 : std::pow(10.0, -3.0 + 3.0 * rng.uniform());
    const Matrix xh = t == 0 ? x : unit(x + gaussian_matrix(patches, d, scale * scale, rng));
    const double gap = frobenius_norm(x - xh);
    const double diff = frobenius_norm(sa_forward(layer, x) - sa_forward(layer, xh));
    if (gap == 0.0) {
      if (diff != 0.0) {
        out.passed = false;
        ++out.violations;
      }
      continue;
    }
    const double ratio = diff / (lip * gap);
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    if (ratio > 1.0 + 1e-12) {
      out.passed = false;
      ++out.violations;
    }
  }
  return out;
}

std::vector<double> norm_growth_caps(const TransformerEncoder& enc) {
  const double floor = 1.0 / std::sqrt(static_cast<double>(enc.patch_count));
  std::vector<double> caps;
  for (const auto& layer : enc.layers) caps.push_back(std::max(layer.max_spectral_norm(), floor));
  return caps;
}

VerifyOutcome verify_norm_growth(const TransformerEncoder& enc, const Matrix& x) {
  enc.validate();
  const auto caps = norm_growth_caps(enc);
  const auto outs = transformer_prefix_outputs(enc, x);
  const double x0 = frobenius_norm(x);
  VerifyOutcome out;
  out.trials = enc.layers.size();
  if (x0 == 0.0) return out;
  const double kk = static_cast<double>(enc.patch_count);
  double s = 1.0;
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    const double w2 = caps[l] * caps[l];
    s *= (enc.layers[l].alpha2 * w2 + 1.0) * (w2 * enc.layers[l].alpha1 * kk + 1.0);
    const double ratio = frobenius_norm(outs[l + 1]) / (s * x0);
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    if (ratio > 1.0 + 1e-12) {
      out.passed = false;
      ++out.violations;
    }
  }
  return out;
}

}  // namespace radlab
