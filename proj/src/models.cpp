#include "radlab/models.hpp"

#include <algorithm>
#include <cmath>

namespace radlab {

// ---------------------------------------------------------------------------
// MLP

void MlpEncoder::validate() const {
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].cols() != layers[l - 1].rows()) {
      throw DimensionError("MlpEncoder: layer " + std::to_string(l + 1) + " has shape " +
                           layers[l].shape_string() + " but layer " + std::to_string(l) +
                           " outputs " + std::to_string(layers[l - 1].rows()));
    }
  }
}

std::vector<NormReport> MlpEncoder::norms() const {
  std::vector<NormReport> out;
  out.reserve(layers.size());
  for (const auto& w : layers) out.push_back(norm_report(w));
  return out;
}

MlpForward mlp_forward(const MlpEncoder& enc, const Matrix& x) {
  enc.validate();
  if (!enc.layers.empty() && x.cols() != enc.layers.front().cols()) {
    throw DimensionError("mlp_forward: input " + x.shape_string() + " vs first layer " +
                         enc.layers.front().shape_string());
  }
  MlpForward fwd;
  fwd.input = x;
  const Matrix* h = &fwd.input;
  for (const auto& w : enc.layers) {
    fwd.pre.push_back(matmul_nt(*h, w));
    fwd.activations.push_back(relu(fwd.pre.back()));
    h = &fwd.activations.back();
  }
  return fwd;
}

std::vector<Matrix> mlp_backward(const MlpEncoder& enc, const MlpForward& fwd, Matrix d_rep) {
  const std::size_t depth = enc.layers.size();
  std::vector<Matrix> grads(depth);
  Matrix d_h = std::move(d_rep);
  for (std::size_t l = depth; l-- > 0;) {
    Matrix d_pre = hadamard(d_h, relu_mask(fwd.pre[l]));
    const Matrix& h_prev = l == 0 ? fwd.input : fwd.activations[l - 1];
    grads[l] = matmul_tn(d_pre, h_prev);
    if (l > 0) d_h = matmul(d_pre, enc.layers[l]);
  }
  return grads;
}

MlpEncoder init_mlp_encoder(std::size_t input_dim, std::size_t width, std::size_t depth, Rng& rng) {
  MlpEncoder enc;
  for (std::size_t l = 0; l < depth; ++l) {
    enc.layers.push_back(gaussian_matrix(width, l == 0 ? input_dim : width, 2.0 / width, rng));
  }
  return enc;
}

// ---------------------------------------------------------------------------
// Self-attention

void SaLayer::validate() const {
  const std::size_t d = w_v.rows();
  const std::size_t m = w_fc1.cols();
  auto need = [](const Matrix& w, std::size_t r, std::size_t c, const char* name) {
    if (w.rows() != r || w.cols() != c) {
      throw DimensionError(std::string("SaLayer: ") + name + " is " + w.shape_string() +
                           ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
  };
  need(w_v, d, d, "w_v");
  need(w_k, d, d_k, "w_k");
  need(w_q, d, d_k, "w_q");
  need(w_fc1, d, m, "w_fc1");
  need(w_fc2, m, d, "w_fc2");
  if (d_k == 0) throw ValidationError("SaLayer: d_k must be positive");
  if (alpha1 < 0.0 || alpha2 < 0.0) throw ValidationError("SaLayer: alphas must be non-negative");
}

double SaLayer::max_spectral_norm() const {
  return std::max({spectral_norm(w_v), spectral_norm(w_k), spectral_norm(w_q),
                   spectral_norm(w_fc1), spectral_norm(w_fc2)});
}

SaCache sa_forward_cached(const SaLayer& layer, const Matrix& x) {
  if (x.cols() != layer.model_dim()) {
    throw DimensionError("sa_forward: input " + x.shape_string() + " vs model dim " +
                         std::to_string(layer.model_dim()));
  }
  SaCache c;
  c.x = x;
  c.keys = matmul(x, layer.w_k);
  c.queries = matmul(x, layer.w_q);
  Matrix logits = matmul_nt(c.keys, c.queries);
  logits *= 1.0 / std::sqrt(static_cast<double>(layer.d_k));
  c.scores = softmax_rows(logits);
  c.values = matmul(x, layer.w_v);
  c.z = matmul(c.scores, c.values);
  c.z *= layer.alpha1;
  c.z += x;
  c.hidden_pre = matmul(c.z, layer.w_fc1);
  return c;
}

Matrix sa_output(const SaLayer& layer, const SaCache& c) {
  Matrix out = matmul(relu(c.hidden_pre), layer.w_fc2);
  out *= layer.alpha2;
  out += c.z;
  return out;
}

Matrix sa_forward(const SaLayer& layer, const Matrix& x) {
  return sa_output(layer, sa_forward_cached(layer, x));
}

SaGrad sa_backward(const SaLayer& layer, const SaCache& c, const Matrix& d_out) {
  SaGrad g;
  const double scale = 1.0 / std::sqrt(static_cast<double>(layer.d_k));

  // MLP branch
  const Matrix hidden = relu(c.hidden_pre);
  g.w_fc2 = matmul_tn(hidden, d_out) * layer.alpha2;
  Matrix d_hidden = matmul_nt(d_out, layer.w_fc2) * layer.alpha2;
  Matrix d_hidden_pre = hadamard(d_hidden, relu_mask(c.hidden_pre));
  g.w_fc1 = matmul_tn(c.z, d_hidden_pre);
  Matrix d_z = d_out + matmul_nt(d_hidden_pre, layer.w_fc1);

  // attention branch
  g.input = d_z;
  const Matrix d_att = d_z * layer.alpha1;
  const Matrix d_scores = matmul_nt(d_att, c.values);
  const Matrix d_values = matmul_tn(c.scores, d_att);
  g.w_v = matmul_tn(c.x, d_values);
  g.input += matmul_nt(d_values, layer.w_v);

  Matrix d_logits(c.scores.rows(), c.scores.cols());
  for (std::size_t i = 0; i < c.scores.rows(); ++i) {
    const double inner = dot(d_scores.row(i), c.scores.row(i));
    for (std::size_t j = 0; j < c.scores.cols(); ++j) {
      d_logits(i, j) = c.scores(i, j) * (d_scores(i, j) - inner) * scale;
    }
  }
  const Matrix d_keys = matmul(d_logits, c.queries);
  const Matrix d_queries = matmul_tn(d_logits, c.keys);
  g.w_k = matmul_tn(c.x, d_keys);
  g.w_q = matmul_tn(c.x, d_queries);
  g.input += matmul_nt(d_keys, layer.w_k);
  g.input += matmul_nt(d_queries, layer.w_q);
  return g;
}

void TransformerEncoder::validate() const {
  for (const auto& l : layers) {
    l.validate();
    if (l.model_dim() != patch_dim) {
      throw DimensionError("TransformerEncoder: layer model dim " + std::to_string(l.model_dim()) +
                           " != patch dim " + std::to_string(patch_dim));
    }
    if (l.d_k != layers.front().d_k || l.w_fc1.cols() != layers.front().w_fc1.cols()) {
      throw DimensionError("TransformerEncoder: layers must share d_K and m");
    }
  }
}

static void check_patch_input(const TransformerEncoder& enc, const Matrix& x) {
  if (x.rows() != enc.patch_count || x.cols() != enc.patch_dim) {
    throw DimensionError("transformer: input " + x.shape_string() + ", expected " +
                         std::to_string(enc.patch_count) + "x" + std::to_string(enc.patch_dim));
  }
}

std::vector<Matrix> transformer_prefix_outputs(const TransformerEncoder& enc, const Matrix& x) {
  check_patch_input(enc, x);
  std::vector<Matrix> out{x};
  for (const auto& layer : enc.layers) out.push_back(sa_forward(layer, out.back()));
  return out;
}

Matrix transformer_forward(const TransformerEncoder& enc, const Matrix& x) {
  check_patch_input(enc, x);
  Matrix h = x;
  for (const auto& layer : enc.layers) h = sa_forward(layer, h);
  return h;
}

TransformerForward transformer_forward_cached(const TransformerEncoder& enc, const Matrix& x) {
  check_patch_input(enc, x);
  TransformerForward f;
  Matrix h = x;
  for (const auto& layer : enc.layers) {
    f.caches.push_back(sa_forward_cached(layer, h));
    h = sa_output(layer, f.caches.back());
  }
  f.output = std::move(h);
  return f;
}

std::vector<Matrix> transformer_backward(const TransformerEncoder& enc, const TransformerForward& fwd,
                                         const Matrix& d_out) {
  const std::size_t depth = enc.layers.size();
  std::vector<Matrix> grads(5 * depth);
  Matrix d = d_out;
  for (std::size_t l = depth; l-- > 0;) {
    SaGrad g = sa_backward(enc.layers[l], fwd.caches[l], d);
    grads[5 * l + 0] = std::move(g.w_v);
    grads[5 * l + 1] = std::move(g.w_k);
    grads[5 * l + 2] = std::move(g.w_q);
    grads[5 * l + 3] = std::move(g.w_fc1);
    grads[5 * l + 4] = std::move(g.w_fc2);
    d = std::move(g.input);
  }
  return grads;
}

TransformerEncoder init_transformer(std::size_t patch_count, std::size_t patch_dim, std::size_t d_k,
                                    std::size_t width, std::size_t depth, double alpha1,
                                    double alpha2, Rng& rng) {
  TransformerEncoder enc;
  enc.patch_count = patch_count;
  enc.patch_dim = patch_dim;
  const double var = 2.0 / static_cast<double>(width);
  for (std::size_t l = 0; l < depth; ++l) {
    SaLayer layer;
    layer.w_v = gaussian_matrix(patch_dim, patch_dim, var, rng);
    layer.w_k = gaussian_matrix(patch_dim, d_k, var, rng);
    layer.w_q = gaussian_matrix(patch_dim, d_k, var, rng);
    layer.w_fc1 = gaussian_matrix(patch_dim, width, var, rng);
    layer.w_fc2 = gaussian_matrix(width, patch_dim, var, rng);
    layer.alpha1 = alpha1;
    layer.alpha2 = alpha2;
    layer.d_k = d_k;
    enc.layers.push_back(std::move(layer));
  }
  enc.validate();
  return enc;
}

Matrix transformer_representation(const TransformerEncoder& enc, const Matrix& x) {
  return column_sums(transformer_forward(enc, x));
}

// ---------------------------------------------------------------------------
// Heads and losses

void project_frobenius_ball(Matrix& m, double r) {
  const double n = frobenius_norm(m);
  if (n > r && n > 0.0) m *= r / n;
}

void LinearHead::project() { project_frobenius_ball(theta, radius); }

double logistic_loss(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double logistic_derivative(double z) {
  if (z > 0.0) {
    const double e = std::exp(-z);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(z));
}

void require_binary_labels(std::span<const double> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1.0 && labels[i] != -1.0) {
      throw ValidationError("label " + std::to_string(i) + " is " + std::to_string(labels[i]) +
                            ", expected -1 or +1");
    }
  }
}

std::vector<Matrix> CeModel::params() const {
  std::vector<Matrix> p = encoder.layers;
  p.push_back(decoder);
  return p;
}

void CeModel::set_params(std::span<const Matrix> p) {
  if (p.size() != encoder.layers.size() + 1) throw DimensionError("CeModel: parameter count");
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) encoder.layers[l] = p[l];
  decoder = p.back();
}

std::vector<Matrix> MaeModel::params() const {
  std::vector<Matrix> p;
  for (const auto& l : encoder.layers) {
    p.push_back(l.w_v);
    p.push_back(l.w_k);
    p.push_back(l.w_q);
    p.push_back(l.w_fc1);
    p.push_back(l.w_fc2);
  }
  p.push_back(decoder);
  return p;
}

void MaeModel::set_params(std::span<const Matrix> p) {
  if (p.size() != 5 * encoder.layers.size() + 1) throw DimensionError("MaeModel: parameter count");
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    auto& layer = encoder.layers[l];
    layer.w_v = p[5 * l + 0];
    layer.w_k = p[5 * l + 1];
    layer.w_q = p[5 * l + 2];
    layer.w_fc1 = p[5 * l + 3];
    layer.w_fc2 = p[5 * l + 4];
  }
  decoder = p.back();
}

LossAndGrads ce_mse_loss(const CeModel& model, const Matrix& inputs, const Matrix& targets,
                         const Matrix* weights) {
  const MlpForward fwd = mlp_forward(model.encoder, inputs);
  const Matrix& rep = fwd.representation();
  const Matrix out = matmul_nt(rep, model.decoder);
  if (out.rows() != targets.rows() || out.cols() != targets.cols()) {
    throw DimensionError("ce_mse_loss: output " + out.shape_string() + " vs targets " +
                         targets.shape_string());
  }
  if (weights && (weights->rows() != targets.rows() || weights->cols() != targets.cols())) {
    throw DimensionError("ce_mse_loss: weight mask shape");
  }
  const double inv_n = 1.0 / static_cast<double>(inputs.rows());
  Matrix d_out = out - targets;
  if (weights) d_out = hadamard(d_out, *weights);

  LossAndGrads r;
  for (std::size_t i = 0; i < d_out.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d_out.cols(); ++j) {
      const double diff = out(i, j) - targets(i, j);
      s += (weights ? (*weights)(i, j) : 1.0) * diff * diff;
    }
    r.loss += s;
  }
  r.loss *= inv_n;
  d_out *= 2.0 * inv_n;

  Matrix d_dec = matmul_tn(d_out, rep);
  Matrix d_rep = matmul(d_out, model.decoder);
  r.grads = mlp_backward(model.encoder, fwd, std::move(d_rep));
  r.grads.push_back(std::move(d_dec));
  return r;
}

LossAndGrads mae_mse_loss(const MaeModel& model, std::span<const Matrix> inputs,
                          std::span<const Matrix> targets, std::span<const Matrix> weights) {
  if (inputs.size() != targets.size() || (!weights.empty() && weights.size() != inputs.size())) {
    throw DimensionError("mae_mse_loss: batch size mismatch");
  }
  const std::size_t n = inputs.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  LossAndGrads r;
  r.grads.resize(5 * model.encoder.layers.size());
  Matrix d_dec(model.decoder.rows(), model.decoder.cols());
  bool first = true;

  for (std::size_t i = 0; i < n; ++i) {
    const TransformerForward fwd = transformer_forward_cached(model.encoder, inputs[i]);
    const Matrix out = matmul(fwd.output, model.decoder);
    if (out.rows() != targets[i].rows() || out.cols() != targets[i].cols()) {
      throw DimensionError("mae_mse_loss: output " + out.shape_string() + " vs target " +
                           targets[i].shape_string());
    }
    Matrix resid = out - targets[i];
    if (!weights.empty()) resid = hadamard(resid, weights[i]);
    double s = 0.0;
    for (std::size_t k = 0; k < resid.size(); ++k) {
      const double diff = out.data()[k] - targets[i].data()[k];
      s += (weights.empty() ? 1.0 : weights[i].data()[k]) * diff * diff;
    }
    r.loss += s;
    resid *= 2.0 * inv_n;
    d_dec += matmul_tn(fwd.output, resid);
    const Matrix d_h = matmul_nt(resid, model.decoder);
    auto g = transformer_backward(model.encoder, fwd, d_h);
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (first) {
        r.grads[p] = std::move(g[p]);
      } else {
        r.grads[p] += g[p];
      }
    }
    first = false;
  }
  if (first) {
    for (std::size_t p = 0; p < r.grads.size(); ++p) {
      const auto params = model.params();
      r.grads[p] = Matrix(params[p].rows(), params[p].cols());
    }
  }
  r.loss *= inv_n;
  r.grads.push_back(std::move(d_dec));
  return r;
}

LossAndGrads mlp_logistic_loss(const MlpEncoder& enc, const Matrix& theta, const Matrix& x,
                               std::span<const double> labels) {
  require_binary_labels(labels);
  if (labels.size() != x.rows()) throw DimensionError("mlp_logistic_loss: label count");
  const MlpForward fwd = mlp_forward(enc, x);
  const Matrix& rep = fwd.representation();
  if (theta.rows() != rep.cols() || theta.cols() != 1) {
    throw DimensionError("mlp_logistic_loss: theta " + theta.shape_string() + " vs rep dim " +
                         std::to_string(rep.cols()));
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  const Matrix scores = matmul(rep, theta);
  LossAndGrads r;
  Matrix d_rep(rep.rows(), rep.cols());
  Matrix d_theta(theta.rows(), 1);
  for (std::size_t i = 0; i < rep.rows(); ++i) {
    const double z = labels[i] * scores(i, 0);
    r.loss += logistic_loss(z);
    const double dz = logistic_derivative(z) * labels[i] * inv_n;
    for (std::size_t j = 0; j < rep.cols(); ++j) {
      d_rep(i, j) = dz * theta(j, 0);
      d_theta(j, 0) += dz * rep(i, j);
    }
  }
  r.loss *= inv_n;
  r.grads = mlp_backward(enc, fwd, std::move(d_rep));
  r.grads.push_back(std::move(d_theta));
  return r;
}

LossAndGrads transformer_logistic_loss(const TransformerEncoder& enc, const Matrix& theta,
                                       std::span<const Matrix> x, std::span<const double> labels) {
  require_binary_labels(labels);
  if (labels.size() != x.size()) throw DimensionError("transformer_logistic_loss: label count");
  if (theta.rows() != enc.patch_dim || theta.cols() != 1) {
    throw DimensionError("transformer_logistic_loss: theta " + theta.shape_string());
  }
  const double inv_n = 1.0 / static_cast<double>(x.size());
  LossAndGrads r;
  r.grads.resize(5 * enc.layers.size());
  Matrix d_theta(theta.rows(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const TransformerForward fwd = transformer_forward_cached(enc, x[i]);
    const Matrix rep = column_sums(fwd.output);
    const double z = labels[i] * dot(rep.data(), theta.data());
    r.loss += logistic_loss(z);
    const double dz = logistic_derivative(z) * labels[i] * inv_n;
    Matrix d_h(fwd.output.rows(), fwd.output.cols());
    for (std::size_t k = 0; k < d_h.rows(); ++k)
      for (std::size_t j = 0; j < d_h.cols(); ++j) d_h(k, j) = dz * theta(j, 0);
    for (std::size_t j = 0; j < rep.cols(); ++j) d_theta(j, 0) += dz * rep(0, j);
    auto g = transformer_backward(enc, fwd, d_h);
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (i == 0) {
        r.grads[p] = std::move(g[p]);
      } else {
        r.grads[p] += g[p];
      }
    }
  }
  r.loss *= inv_n;
  r.grads.push_back(std::move(d_theta));
  return r;
}

}  // namespace radlab
