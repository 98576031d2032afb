#include "radlab/minimax.hpp"

#include <cmath>

#include "radlab/format.hpp"

namespace radlab {

namespace {

double vec_norm(const std::vector<double>& v) { return norm2(v); }

}  // namespace

// ---------------------------------------------------------------------------
// Moreau envelope

void MoreauProbe::validate() const {
  if (!(l_hat > 0.0)) throw ValidationError("Moreau probe needs a positive smoothness estimate");
  const double r = resolved_rho();
  if (!(r > 0.0) || !(r < 1.0 / l_hat)) {
    throw ValidationError("Moreau parameter rho=" + format_double(r) + " must lie in (0, 1/L) with L=" +
                          format_double(l_hat));
  }
  if (inner_iters == 0 || !(inner_tol > 0.0)) throw ValidationError("Moreau probe needs inner iterations and tolerance");
}

std::vector<double> moreau_prox(const Oracle& psi, std::span<const double> w, const MoreauProbe& probe) {
  probe.validate();
  const double rho = probe.resolved_rho();
  const std::size_t n = w.size();
  std::vector<double> x(w.begin(), w.end());
  std::vector<double> g(n), trial(n), g_trial(n);

  auto inner = [&](const std::vector<double>& at, std::vector<double>& grad) {
    double v = psi(at, &grad);
    for (std::size_t k = 0; k < n; ++k) {
      const double d = at[k] - w[k];
      v += d * d / (2.0 * rho);
      grad[k] += d / rho;
    }
    return v;
  };

  double step = 1.0 / (probe.l_hat + 1.0 / rho);
  double f = inner(x, g);
  double gnorm = vec_norm(g);
  for (std::size_t it = 0; it < probe.inner_iters; ++it) {
    if (gnorm <= probe.inner_tol) return x;
    // Armijo backtracking keeps the descent safe when L̂ underestimates.
    for (int halvings = 0;; ++halvings) {
      for (std::size_t k = 0; k < n; ++k) trial[k] = x[k] - step * g[k];
      const double ft = inner(trial, g_trial);
      const double slack = 1e-14 * (std::abs(f) + 1.0);  // rounding floor on f
      if (ft <= f - 0.5 * step * gnorm * gnorm + slack || halvings == 60) {
        x.swap(trial);
        g.swap(g_trial);
        f = ft;
        break;
      }
      step *= 0.5;
    }
    gnorm = vec_norm(g);
  }
  if (gnorm <= probe.inner_tol) return x;
  throw NumericalError("Moreau inner solve did not converge; final gradient norm " + format_double(gnorm));
}

std::vector<double> moreau_gradient(const Oracle& psi, std::span<const double> w, const MoreauProbe& probe) {
  const std::vector<double> x = moreau_prox(psi, w, probe);
  const double rho = probe.resolved_rho();
  std::vector<double> out(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) out[k] = (w[k] - x[k]) / rho;
  return out;
}

double moreau_envelope(const Oracle& psi, std::span<const double> w, const MoreauProbe& probe) {
  const std::vector<double> x = moreau_prox(psi, w, probe);
  const double rho = probe.resolved_rho();
  double d2 = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) d2 += (x[k] - w[k]) * (x[k] - w[k]);
  return psi(x, nullptr) + d2 / (2.0 * rho);
}

double estimate_smoothness(const Oracle& psi, std::span<const double> center, double spread, std::size_t pairs,
                           std::uint64_t seed) {
  if (pairs == 0 || !(spread > 0.0)) throw ValidationError("estimate_smoothness: need pairs and a positive spread");
  Rng rng(seed, "smoothness");
  const std::size_t n = center.size();
  std::vector<double> a(n), b(n), ga(n), gb(n);
  double best = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = center[k] + spread * (2.0 * rng.uniform() - 1.0);
      b[k] = center[k] + spread * (2.0 * rng.uniform() - 1.0);
    }
    psi(a, &ga);
    psi(b, &gb);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      num += (ga[k] - gb[k]) * (ga[k] - gb[k]);
      den += (a[k] - b[k]) * (a[k] - b[k]);
    }
    if (den > 0.0) best = std::max(best, std::sqrt(num / den));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Step sizes

StepSizes theoretical_step_sizes(const StepSizeInputs& in) {
  for (double v : {in.epsilon, in.smoothness, in.dual_radius, in.grad_bound, in.noise, in.batch, in.configs,
                   in.envelope_gap, in.eta_multiplier, in.gamma_multiplier}) {
    if (!(v > 0.0)) throw ValidationError("theoretical_step_sizes: all inputs must be positive");
  }
  const double e = in.epsilon, l = in.smoothness, d = in.dual_radius, g = in.grad_bound;
  const double var = in.noise * in.noise;
  StepSizes s;
  s.eta = in.eta_multiplier * std::pow(e, 6) / (l * l * l * d * d * g);
  s.gamma = in.gamma_multiplier * e * e / (l * var);
  s.gradient_complexity = in.configs * l * l * l * (g * g + var / in.batch) * d * d * (var / in.batch) *
                          in.envelope_gap / std::pow(e, 8);
  return s;
}

// ---------------------------------------------------------------------------
// SGDA

double SgdaProblem::envelope(std::span<const double>, std::vector<double>*, double) const {
  throw ValidationError("this problem has no closed-form envelope for Moreau probes");
}

void SgdaConfig::validate() const {
  if (!(eta > 0.0)) throw ValidationError("SGDA: eta must be positive");
  if (gamma < 0.0) throw ValidationError("SGDA: gamma must be non-negative");
  if (project && !(dual_radius > 0.0)) throw ValidationError("SGDA: dual radius must be positive");
}

std::vector<double> flatten(const std::vector<Matrix>& params) {
  std::vector<double> out;
  for (const auto& p : params) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

void unflatten(std::span<const double> flat, std::vector<Matrix>& params) {
  std::size_t off = 0;
  for (auto& p : params) {
    if (off + p.size() > flat.size()) throw DimensionError("unflatten: vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + p.size()), p.data().begin());
    off += p.size();
  }
  if (off != flat.size()) throw DimensionError("unflatten: vector too long");
}

SgdaResult radreg_train(SgdaProblem& problem, double lambda, const SgdaConfig& cfg) {
  cfg.validate();
  if (lambda < 0.0) throw ValidationError("regularization weight must be non-negative");
  SgdaResult res;
  SgdaState& st = res.state;
  st.w = problem.initial_primal();
  st.duals = problem.initial_duals();
  if (st.duals.empty()) throw ValidationError("SGDA: at least one dual variable (B ≥ 1) required");
  st.eta = cfg.eta;
  st.gamma = cfg.gamma;

  const std::size_t t_total = cfg.iterations;
  Rng out_rng(cfg.seed, "output");
  res.sampled_index = t_total > 0 ? 1 + out_rng.below(t_total) : 0;
  if (res.sampled_index == 0) res.sampled_w = st.w;

  const bool probing = cfg.probe_every > 0 && problem.has_envelope();
  MoreauProbe probe = cfg.probe;
  Oracle psi = [&](std::span<const double> w, std::vector<double>* g) { return problem.envelope(w, g, lambda); };
  if (probing && !(probe.l_hat > 0.0)) probe.l_hat = estimate_smoothness(psi, flatten(st.w), 1.0, 100, cfg.seed);
  auto maybe_probe = [&](std::size_t t) {
    if (!probing || t % cfg.probe_every != 0) return;
    const auto g = moreau_gradient(psi, flatten(st.w), probe);
    const double n = norm2(g);
    st.traces.probe_iters.push_back(t);
    st.traces.moreau_sq.push_back(n * n);
  };

  st.traces.loss.push_back(problem.trace_loss(st.w));
  maybe_probe(0);
  for (std::size_t t = 0; t < t_total; ++t) {
    const RadRegEval e = problem.evaluate(st.w, st.duals, lambda);
    double g2 = 0.0;
    bool finite = std::isfinite(e.loss);
    for (const auto& g : e.grad_w) {
      finite = finite && all_finite(g);
      const double f = frobenius_norm(g);
      g2 += f * f;
    }
    for (const auto& g : e.grad_v) finite = finite && all_finite(g);
    if (!finite) {
      throw NumericalError("SGDA: non-finite gradient at iteration " + std::to_string(t) + " (loss " +
                           format_double(e.loss) + ", last recorded loss " + format_double(st.traces.loss.back()) +
                           ")");
    }
    if (lambda != 0.0) {
      for (std::size_t j = 0; j < st.duals.size(); ++j) {
        st.duals[j] += e.grad_v[j] * cfg.gamma;
        if (cfg.project) project_frobenius_ball(st.duals[j], cfg.dual_radius);
      }
    }
    for (std::size_t p = 0; p < st.w.size(); ++p) st.w[p] -= e.grad_w[p] * cfg.eta;
    st.iter = t + 1;
    st.traces.regularizer.push_back(e.regularizer);
    st.traces.grad_norm.push_back(std::sqrt(g2));
    const double loss = problem.trace_loss(st.w);
    if (!std::isfinite(loss)) {
      throw NumericalError("SGDA diverged at iteration " + std::to_string(t + 1) + "; last finite loss " +
                           format_double(st.traces.loss.back()));
    }
    st.traces.loss.push_back(loss);
    if (st.iter == res.sampled_index) res.sampled_w = st.w;
    maybe_probe(st.iter);
  }
  return res;
}

ConvergenceReport convergence_report(const SgdaTraces& traces) {
  if (traces.moreau_sq.empty()) throw ValidationError("convergence_report: no Moreau probes recorded");
  ConvergenceReport r;
  double sum = 0.0;
  r.best_value = traces.moreau_sq.front();
  r.best_iter = traces.probe_iters.front();
  for (std::size_t k = 0; k < traces.moreau_sq.size(); ++k) {
    sum += traces.moreau_sq[k];
    r.running_average.push_back(sum / static_cast<double>(k + 1));
    if (traces.moreau_sq[k] <= r.best_value) {
      r.best_value = traces.moreau_sq[k];
      r.best_iter = traces.probe_iters[k];
    }
  }
  r.final_average = r.running_average.back();
  return r;
}

std::string sgda_csv(const SgdaTraces& traces) {
  std::string out = "iteration,loss,reg_value,grad_norm,moreau_sq\n";
  std::size_t probe = 0;
  for (std::size_t t = 0; t < traces.loss.size(); ++t) {
    out += std::to_string(t) + "," + format_double(traces.loss[t]) + ",";
    if (t < traces.regularizer.size()) out += format_double(traces.regularizer[t]);
    out += ",";
    if (t < traces.grad_norm.size()) out += format_double(traces.grad_norm[t]);
    out += ",";
    if (probe < traces.probe_iters.size() && traces.probe_iters[probe] == t) {
      out += format_double(traces.moreau_sq[probe]);
      ++probe;
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Toy problem

ToyBilinearProblem::ToyBilinearProblem(Matrix q, Matrix b, std::vector<Matrix> a, Matrix w0, double dual_radius,
                                       double noise, std::uint64_t seed)
    : q_(std::move(q)),
      b_(std::move(b)),
      a_(std::move(a)),
      w0_(std::move(w0)),
      dual_radius_(dual_radius),
      noise_(noise),
      rng_(seed, "toy-noise") {
  const std::size_t n = q_.rows();
  if (q_.cols() != n || b_.rows() != n || b_.cols() != 1 || w0_.rows() != n || w0_.cols() != 1) {
    throw DimensionError("ToyBilinearProblem: Q must be n×n with b, w0 n×1");
  }
  if (a_.empty()) throw ValidationError("ToyBilinearProblem: at least one coupling matrix required");
  for (const auto& m : a_) {
    if (m.cols() != n || m.rows() != a_.front().rows()) throw DimensionError("ToyBilinearProblem: A_j shapes");
  }
  if (noise_ < 0.0 || !(dual_radius_ > 0.0)) throw ValidationError("ToyBilinearProblem: noise ≥ 0 and D > 0");
}

ToyBilinearProblem ToyBilinearProblem::random(std::size_t dim, std::size_t dual_dim, std::size_t configs,
                                              double dual_radius, double noise, std::uint64_t seed) {
  Rng rng(seed, "toy-problem");
  const Matrix g = gaussian_matrix(dim, dim, 1.0, rng);
  const SymmetricEigen e = symmetric_eigen(matmul_nt(g, g));
  Matrix diag(dim, dim);
  for (std::size_t k = 0; k < dim; ++k) diag(k, k) = 0.5 + rng.uniform();
  Matrix q = matmul(matmul(e.vectors, diag), transpose(e.vectors));
  // symmetrize away rounding
  q = (q + transpose(q)) * 0.5;
  const Matrix b = gaussian_matrix(dim, 1, 1.0, rng);
  std::vector<Matrix> a;
  for (std::size_t j = 0; j < configs; ++j) a.push_back(gaussian_matrix(dual_dim, dim, 1.0 / static_cast<double>(dim), rng));
  Matrix w0 = gaussian_matrix(dim, 1, 4.0, rng);
  return ToyBilinearProblem(std::move(q), b, std::move(a), std::move(w0), dual_radius, noise, seed);
}

std::vector<Matrix> ToyBilinearProblem::initial_duals() const {
  return std::vector<Matrix>(a_.size(), Matrix(a_.front().rows(), 1));
}

RadRegEval ToyBilinearProblem::evaluate(const std::vector<Matrix>& w, const std::vector<Matrix>& v, double lambda) {
  const Matrix& x = w.at(0);
  RadRegEval r;
  const Matrix qx = matmul(q_, x);
  r.pretrain_loss = 0.5 * dot(x.data(), qx.data()) + dot(b_.data(), x.data());
  Matrix gw = qx + b_;
  for (double& g : gw.data()) g += noise_ * rng_.normal();
  const double inv_b = 1.0 / static_cast<double>(a_.size());
  for (std::size_t j = 0; j < a_.size(); ++j) {
    Matrix ax = matmul(a_[j], x);
    r.regularizer += inv_b * dot(v[j].data(), ax.data());
    if (lambda != 0.0) gw += matmul_tn(a_[j], v[j]) * (lambda * inv_b);
    for (double& g : ax.data()) g += noise_ * rng_.normal();
    r.grad_v.push_back(std::move(ax));
  }
  r.loss = r.pretrain_loss + lambda * r.regularizer;
  r.grad_w.push_back(std::move(gw));
  return r;
}

double ToyBilinearProblem::trace_loss(const std::vector<Matrix>& w) {
  const Matrix& x = w.at(0);
  return 0.5 * dot(x.data(), matmul(q_, x).data()) + dot(b_.data(), x.data());
}

double ToyBilinearProblem::envelope(std::span<const double> w, std::vector<double>* grad, double lambda) const {
  const std::size_t n = q_.rows();
  const Matrix x(n, 1, std::vector<double>(w.begin(), w.end()));
  const Matrix qx = matmul(q_, x);
  double v = 0.5 * dot(x.data(), qx.data()) + dot(b_.data(), x.data());
  Matrix g = qx + b_;
  const double inv_b = 1.0 / static_cast<double>(a_.size());
  for (const auto& a : a_) {
    const Matrix ax = matmul(a, x);
    const double nrm = frobenius_norm(ax);
    v += lambda * inv_b * dual_radius_ * nrm;
    if (nrm > 0.0) g += matmul_tn(a, ax) * (lambda * inv_b * dual_radius_ / nrm);
  }
  if (grad) grad->assign(g.data().begin(), g.data().end());
  return v;
}

double ToyBilinearProblem::smoothness(double lambda) const {
  double a_max = 0.0;
  for (const auto& a : a_) a_max = std::max(a_max, spectral_norm(a));
  return spectral_norm(q_) + lambda * a_max;
}

double ToyBilinearProblem::gradient_bound(double r, double lambda) const {
  double a_max = 0.0;
  for (const auto& a : a_) a_max = std::max(a_max, spectral_norm(a));
  return spectral_norm(q_) * r + frobenius_norm(b_) + lambda * a_max * dual_radius_;
}

}  // namespace radlab
