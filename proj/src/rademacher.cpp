#include "radlab/rademacher.hpp"

#include <cmath>

namespace radlab {

RademacherBatch sample_rademacher(std::size_t b, std::size_t n, std::size_t o, std::uint64_t seed) {
  if (b == 0 || n == 0 || o == 0) throw ValidationError("sample_rademacher: B, n, o must be positive");
  Rng rng(seed, "rademacher");
  RademacherBatch rb;
  rb.seed = seed;
  for (std::size_t j = 0; j < b; ++j) {
    Matrix s(n, o);
    for (double& v : s.data()) v = rng.sign();
    rb.configs.push_back(std::move(s));
  }
  return rb;
}

namespace {

void require_radius(double r) {
  if (!(r > 0.0)) throw ValidationError("radius must be positive, got " + std::to_string(r));
}

Matrix signed_mean(const Matrix& reps, std::span<const double> sigma) {
  if (sigma.size() != reps.rows()) {
    throw DimensionError("sign vector of length " + std::to_string(sigma.size()) + " for " +
                         std::to_string(reps.rows()) + " representations");
  }
  Matrix u(reps.cols(), 1);
  for (std::size_t i = 0; i < reps.rows(); ++i)
    for (std::size_t k = 0; k < reps.cols(); ++k) u(k, 0) += sigma[i] * reps(i, k);
  u *= 1.0 / static_cast<double>(reps.rows());
  return u;
}

InnerSup ball_argmax(const Matrix& dir, double radius) {
  const double n = frobenius_norm(dir);
  InnerSup s;
  s.value = radius * n;
  s.argmax = n > 0.0 ? dir * (radius / n) : Matrix(dir.rows(), dir.cols());
  return s;
}

// Linear objective ⟨g, θ⟩ maximized over the Frobenius ball.
InnerSup ascend(const Matrix& g, double radius, std::size_t steps, double step) {
  Matrix theta(g.rows(), g.cols());
  for (std::size_t t = 0; t < steps; ++t) {
    theta += g * step;
    project_frobenius_ball(theta, radius);
  }
  double value = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) value += theta.data()[k] * g.data()[k];
  return {value, theta};
}

}  // namespace

InnerSup inner_sup_binary(const Matrix& reps, std::span<const double> sigma, double radius) {
  require_radius(radius);
  return ball_argmax(signed_mean(reps, sigma), radius);
}

Matrix rademacher_moment(const Matrix& reps, const Matrix& sigma) {
  if (sigma.rows() != reps.rows()) throw DimensionError("rademacher_moment: row mismatch");
  Matrix m = matmul_tn(reps, sigma);
  m *= 1.0 / static_cast<double>(reps.rows());
  return m;
}

InnerSup inner_sup_multiclass(const Matrix& moment, double radius) {
  require_radius(radius);
  return ball_argmax(transpose(moment), radius);
}

InnerSup inner_sup_binary_ascent(const Matrix& reps, std::span<const double> sigma, double radius,
                                 std::size_t steps, double step) {
  require_radius(radius);
  return ascend(signed_mean(reps, sigma), radius, steps, step);
}

InnerSup inner_sup_multiclass_ascent(const Matrix& moment, double radius, std::size_t steps, double step) {
  require_radius(radius);
  return ascend(transpose(moment), radius, steps, step);
}

RegularizerValue estimate_complexity(const Matrix& reps, const RademacherBatch& rb, double radius) {
  require_radius(radius);
  if (reps.rows() == 0) throw ValidationError("estimate_complexity: empty batch");
  if (rb.count() == 0) throw ValidationError("estimate_complexity: no sign configurations");
  RegularizerValue r;
  for (const auto& s : rb.configs) {
    if (s.rows() != reps.rows()) throw DimensionError("estimate_complexity: signs for " + std::to_string(s.rows()) +
                                                      " samples, batch has " + std::to_string(reps.rows()));
    r.values.push_back(s.cols() == 1 ? inner_sup_binary(reps, s.data(), radius).value
                                     : inner_sup_multiclass(rademacher_moment(reps, s), radius).value);
  }
  const double b = static_cast<double>(r.values.size());
  for (double v : r.values) r.mean += v;
  r.mean /= b;
  if (r.values.size() > 1) {
    double ss = 0.0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.std_err = std::sqrt(ss / (b - 1.0) / b);
  }
  return r;
}

RegularizerValue estimate_complexity(const MlpEncoder& enc, const Matrix& x, const RademacherBatch& rb,
                                     double radius) {
  return estimate_complexity(representations(enc, x), rb, radius);
}

RegularizerValue estimate_complexity(const TransformerEncoder& enc, const std::vector<Matrix>& x,
                                     const RademacherBatch& rb, double radius) {
  return estimate_complexity(representations(enc, x), rb, radius);
}

namespace {

void check_reg_inputs(std::span<const Matrix> duals, const RademacherBatch& rb, std::size_t n_down, double lambda,
                      std::size_t rep_dim) {
  if (lambda < 0.0) throw ValidationError("regularization weight must be non-negative, got " + std::to_string(lambda));
  if (duals.size() != rb.count()) throw DimensionError("one dual variable per sign configuration required");
  for (const auto& s : rb.configs) {
    if (s.cols() != 1) throw DimensionError("the regularized objective uses binary sign vectors");
    if (s.rows() != n_down) throw DimensionError("sign vectors must cover the downstream set");
  }
  for (const auto& v : duals) {
    if (v.rows() != rep_dim || v.cols() != 1) throw DimensionError("dual " + v.shape_string() + " for representation dim " + std::to_string(rep_dim));
  }
}

// c_i = (scale) Σ_j σ_{batch[i]}^j v_jᵀ as a |batch|×p matrix, and per-config
// signed means u_j.
struct RegParts {
  Matrix combined;
  std::vector<Matrix> u;
  double mean_value = 0.0;
};

RegParts reg_parts(const Matrix& reps, std::span<const Matrix> duals, const RademacherBatch& rb,
                   const std::vector<std::size_t>& batch, double scale) {
  const std::size_t nb = batch.size();
  RegParts p;
  p.combined = Matrix(nb, reps.cols());
  std::vector<double> sigma(nb);
  for (std::size_t j = 0; j < duals.size(); ++j) {
    for (std::size_t i = 0; i < nb; ++i) sigma[i] = rb.configs[j](batch[i], 0);
    Matrix u = signed_mean(reps, sigma);
    p.mean_value += dot(u.data(), duals[j].data());
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t k = 0; k < reps.cols(); ++k) p.combined(i, k) += scale * sigma[i] * duals[j](k, 0);
    p.u.push_back(std::move(u));
  }
  p.mean_value /= static_cast<double>(duals.size());
  return p;
}

}  // namespace

RadRegEval radreg_loss_and_grad(const CeModel& model, std::span<const Matrix> duals, const RademacherBatch& rb,
                                const CeData& pretrain_batch, const Matrix& downstream_x,
                                const std::vector<std::size_t>& batch, double lambda,
                                const PretrainExtras& extras) {
  const std::size_t p = model.encoder.layers.empty() ? model.decoder.cols() : model.encoder.layers.back().rows();
  check_reg_inputs(duals, rb, downstream_x.rows(), lambda, p);
  LossAndGrads base = pretrain_objective(model, pretrain_batch, extras);
  RadRegEval r;
  r.pretrain_loss = base.loss;
  r.loss = base.loss;
  r.grad_w = std::move(base.grads);
  if (lambda == 0.0) {
    for (const auto& v : duals) r.grad_v.emplace_back(v.rows(), 1);
    return r;
  }
  const double b = static_cast<double>(duals.size());
  const Matrix xb = gather_rows(downstream_x, batch);
  const MlpForward fwd = mlp_forward(model.encoder, xb);
  const double scale = lambda / (b * static_cast<double>(batch.size()));
  RegParts parts = reg_parts(fwd.representation(), duals, rb, batch, scale);
  r.regularizer = parts.mean_value;
  r.loss += lambda * parts.mean_value;
  const auto enc_grads = mlp_backward(model.encoder, fwd, std::move(parts.combined));
  for (std::size_t l = 0; l < enc_grads.size(); ++l) r.grad_w[l] += enc_grads[l];
  r.grad_v = std::move(parts.u);
  return r;
}

RadRegEval radreg_loss_and_grad(const MaeModel& model, std::span<const Matrix> duals, const RademacherBatch& rb,
                                const MaeData& pretrain_batch, const std::vector<Matrix>& downstream_x,
                                const std::vector<std::size_t>& batch, double lambda,
                                const PretrainExtras& extras) {
  check_reg_inputs(duals, rb, downstream_x.size(), lambda, model.encoder.patch_dim);
  LossAndGrads base = pretrain_objective(model, pretrain_batch, extras);
  RadRegEval r;
  r.pretrain_loss = base.loss;
  r.loss = base.loss;
  r.grad_w = std::move(base.grads);
  if (lambda == 0.0) {
    for (const auto& v : duals) r.grad_v.emplace_back(v.rows(), 1);
    return r;
  }
  const double b = static_cast<double>(duals.size());
  std::vector<TransformerForward> fwds;
  std::vector<Matrix> rep_rows;
  for (std::size_t i : batch) {
    fwds.push_back(transformer_forward_cached(model.encoder, downstream_x[i]));
    rep_rows.push_back(column_sums(fwds.back().output));
  }
  const Matrix reps = vstack(rep_rows);
  const double scale = lambda / (b * static_cast<double>(batch.size()));
  const RegParts parts = reg_parts(reps, duals, rb, batch, scale);
  r.regularizer = parts.mean_value;
  r.loss += lambda * parts.mean_value;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Matrix d_h(model.encoder.patch_count, model.encoder.patch_dim);
    for (std::size_t k = 0; k < d_h.rows(); ++k)
      for (std::size_t c = 0; c < d_h.cols(); ++c) d_h(k, c) = parts.combined(i, c);
    const auto g = transformer_backward(model.encoder, fwds[i], d_h);
    for (std::size_t q = 0; q < g.size(); ++q) r.grad_w[q] += g[q];
  }
  r.grad_v = parts.u;
  return r;
}

}  // namespace radlab
