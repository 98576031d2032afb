#include "radlab/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "radlab/format.hpp"
#include "radlab/synth.hpp"

namespace radlab {

// ---------------------------------------------------------------------------
// Masking

void MaskTransform::validate() const {
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
    throw ValidationError("mask ratio " + std::to_string(mask_ratio) + " outside [0, 1]");
  }
}

MaskedSample apply_mask(const Matrix& x, const MaskTransform& t) {
  Rng rng(t.seed, "mask");
  return apply_mask(x, t, rng);
}

MaskedSample apply_mask(const Matrix& x, const MaskTransform& t, Rng& rng) {
  t.validate();
  const bool patch = t.granularity == MaskGranularity::kPatch;
  const std::size_t units = patch ? x.rows() : x.size();
  const auto count = static_cast<std::size_t>(std::llround(t.mask_ratio * static_cast<double>(units)));
  MaskedSample s;
  s.input = x;
  s.target = x;
  s.indicator = Matrix(x.rows(), x.cols());
  s.masked_units = rng.sample_without_replacement(units, count);
  std::sort(s.masked_units.begin(), s.masked_units.end());
  for (std::size_t u : s.masked_units) {
    if (patch) {
      for (double& v : s.input.row(u)) v = t.fill_value;
      for (double& v : s.indicator.row(u)) v = 1.0;
    } else {
      s.input.data()[u] = t.fill_value;
      s.indicator.data()[u] = 1.0;
    }
  }
  return s;
}

CeData make_ce_data(const Matrix& raw, const MaskTransform& t) {
  Rng rng(t.seed, "mask");
  CeData out{raw, raw, Matrix(raw.rows(), raw.cols())};
  MaskTransform row_t = t;
  row_t.granularity = MaskGranularity::kCoordinate;
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto r = raw.row(i);
    const MaskedSample s = apply_mask(Matrix(1, raw.cols(), std::vector<double>(r.begin(), r.end())), row_t, rng);
    std::copy(s.input.data().begin(), s.input.data().end(), out.inputs.row(i).begin());
    std::copy(s.indicator.data().begin(), s.indicator.data().end(), out.indicator.row(i).begin());
  }
  return out;
}

MaeData make_mae_data(const std::vector<Matrix>& raw, const MaskTransform& t) {
  Rng rng(t.seed, "mask");
  MaskTransform patch_t = t;
  patch_t.granularity = MaskGranularity::kPatch;
  MaeData out;
  for (const auto& x : raw) {
    MaskedSample s = apply_mask(x, patch_t, rng);
    out.inputs.push_back(std::move(s.input));
    out.targets.push_back(std::move(s.target));
    out.indicator.push_back(std::move(s.indicator));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (iterations == 0) throw ValidationError("iteration count must be positive");
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0 || batch_size >= n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  return rng.sample_without_replacement(n, batch_size);
}

CeData select(const CeData& data, const std::vector<std::size_t>& idx) {
  if (idx.size() == data.size()) {
    bool identity = true;
    for (std::size_t i = 0; i < idx.size() && identity; ++i) identity = idx[i] == i;
    if (identity) return data;
  }
  return {gather_rows(data.inputs, idx), gather_rows(data.targets, idx), gather_rows(data.indicator, idx)};
}

MaeData select(const MaeData& data, const std::vector<std::size_t>& idx) {
  MaeData out;
  for (std::size_t i : idx) {
    out.inputs.push_back(data.inputs[i]);
    out.targets.push_back(data.targets[i]);
    out.indicator.push_back(data.indicator[i]);
  }
  return out;
}

namespace {

LossAndGrads base_loss(const CeModel& m, const CeData& b, bool masked_only) {
  return ce_mse_loss(m, b.inputs, b.targets, masked_only ? &b.indicator : nullptr);
}

LossAndGrads base_loss(const MaeModel& m, const MaeData& b, bool masked_only) {
  return mae_mse_loss(m, b.inputs, b.targets, masked_only ? std::span<const Matrix>(b.indicator) : std::span<const Matrix>{});
}

template <class Model, class Data>
LossAndGrads objective(const Model& model, const Data& batch, const Data* aux, const PretrainExtras& ex) {
  LossAndGrads r = base_loss(model, batch, ex.masked_only);
  if (ex.aux_weight > 0.0 && aux != nullptr && aux->size() > 0) {
    const LossAndGrads a = base_loss(model, *aux, ex.masked_only);
    r.loss += ex.aux_weight * a.loss;
    for (std::size_t p = 0; p < r.grads.size(); ++p) r.grads[p] += a.grads[p] * ex.aux_weight;
  }
  if (ex.l2_lambda > 0.0) {
    const auto params = model.params();
    for (std::size_t p = 0; p < params.size(); ++p) {
      const double f = frobenius_norm(params[p]);
      r.loss += ex.l2_lambda * f * f;
      r.grads[p] += params[p] * (2.0 * ex.l2_lambda);
    }
  }
  return r;
}

template <class Model, class Data>
PretrainResult<Model> run_gd(Model model, const Data& data, const TrainConfig& cfg, const PretrainExtras& ex,
                             const Data* aux) {
  cfg.validate();
  if (data.size() == 0) throw ValidationError("pretrain: empty data");
  if (ex.l2_lambda < 0.0 || ex.aux_weight < 0.0) throw ValidationError("pretrain: negative regularizer weight");
  PretrainResult<Model> res;
  Rng batch_rng(cfg.seed, "batch");
  double last = objective(model, data, aux, ex).loss;
  if (!std::isfinite(last)) throw NumericalError("pretrain: initial loss is not finite");
  res.loss_trace.push_back(last);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const auto idx = sample_batch(data.size(), cfg.batch_size, batch_rng);
    const LossAndGrads g = objective(model, select(data, idx), aux, ex);
    auto params = model.params();
    for (std::size_t p = 0; p < params.size(); ++p) params[p] -= g.grads[p] * cfg.learning_rate;
    model.set_params(params);
    const double loss = objective(model, data, aux, ex).loss;
    if (!std::isfinite(loss)) {
      throw NumericalError("pretrain diverged at iteration " + std::to_string(t + 1) +
                           "; last finite loss " + format_double(last));
    }
    res.loss_trace.push_back(loss);
    last = loss;
  }
  res.model = std::move(model);
  return res;
}

}  // namespace

LossAndGrads pretrain_objective(const CeModel& model, const CeData& batch, const PretrainExtras& extras) {
  return objective(model, batch, extras.aux_ce, extras);
}

LossAndGrads pretrain_objective(const MaeModel& model, const MaeData& batch, const PretrainExtras& extras) {
  return objective(model, batch, extras.aux_mae, extras);
}

PretrainResult<CeModel> pretrain(CeModel init, const CeData& data, const TrainConfig& cfg,
                                 const PretrainExtras& extras) {
  return run_gd(std::move(init), data, cfg, extras, extras.aux_ce);
}

PretrainResult<MaeModel> pretrain(MaeModel init, const MaeData& data, const TrainConfig& cfg,
                                  const PretrainExtras& extras) {
  return run_gd(std::move(init), data, cfg, extras, extras.aux_mae);
}

// ---------------------------------------------------------------------------
// Fine-tuning

Matrix representations(const MlpEncoder& enc, const Matrix& x) { return mlp_forward(enc, x).representation(); }

Matrix representations(const TransformerEncoder& enc, const std::vector<Matrix>& x) {
  std::vector<Matrix> rows;
  rows.reserve(x.size());
  for (const auto& s : x) rows.push_back(transformer_representation(enc, s));
  return vstack(rows);
}

LossAndGrads head_risk(const Matrix& reps, const Matrix& labels, const Matrix& theta) {
  if (reps.rows() != labels.rows() || theta.rows() != reps.cols()) {
    throw DimensionError("head_risk: reps " + reps.shape_string() + ", labels " + labels.shape_string() +
                         ", theta " + theta.shape_string());
  }
  const std::size_t n = reps.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix scores = matmul(reps, theta);
  LossAndGrads r;
  Matrix d_scores(scores.rows(), scores.cols());
  if (labels.cols() == 1) {
    if (theta.cols() != 1) throw DimensionError("head_risk: binary head must be p×1");
    require_binary_labels(labels.data());
    for (std::size_t i = 0; i < n; ++i) {
      const double z = labels(i, 0) * scores(i, 0);
      r.loss += logistic_loss(z);
      d_scores(i, 0) = logistic_derivative(z) * labels(i, 0) * inv_n;
    }
  } else {
    if (theta.cols() != labels.cols()) throw DimensionError("head_risk: class count mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = scores.row(i);
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double v : s) z += std::exp(v - mx);
      const double lse = mx + std::log(z);
      double label_sum = 0.0;
      for (std::size_t c = 0; c < s.size(); ++c) {
        const double y = labels(i, c);
        if (y != 0.0 && y != 1.0) throw ValidationError("head_risk: one-hot labels must be 0 or 1");
        label_sum += y;
        r.loss += y * (lse - s[c]);
        d_scores(i, c) = (std::exp(s[c] - lse) - y) * inv_n;
      }
      if (label_sum != 1.0) throw ValidationError("head_risk: row " + std::to_string(i) + " is not one-hot");
    }
  }
  r.loss *= inv_n;
  r.grads.push_back(matmul_tn(reps, d_scores));
  return r;
}

double head_accuracy(const Matrix& reps, const Matrix& labels, const Matrix& theta) {
  const Matrix scores = matmul(reps, theta);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < reps.rows(); ++i) {
    if (labels.cols() == 1) {
      const double pred = scores(i, 0) >= 0.0 ? 1.0 : -1.0;
      correct += pred == labels(i, 0);
    } else {
      const auto s = scores.row(i);
      const auto pred = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
      correct += labels(i, pred) == 1.0;
    }
  }
  return reps.rows() ? static_cast<double>(correct) / static_cast<double>(reps.rows()) : 0.0;
}

FinetuneResult finetune_linear(const Matrix& reps, const Matrix& labels, const TrainConfig& cfg, double radius,
                               const Matrix* heldout_reps, const Matrix* heldout_labels) {
  if (!(radius > 0.0)) throw ValidationError("finetune_linear: radius must be positive");
  cfg.validate();
  if (reps.rows() == 0) throw ValidationError("finetune_linear: no labeled samples");
  const bool heldout = heldout_reps != nullptr && heldout_labels != nullptr;
  FinetuneResult res;
  res.head.radius = radius;
  res.head.theta = Matrix(reps.cols(), labels.cols());
  auto record = [&]() {
    res.train_risk.push_back(head_risk(reps, labels, res.head.theta).loss);
    if (heldout) {
      res.heldout_risk.push_back(head_risk(*heldout_reps, *heldout_labels, res.head.theta).loss);
      res.heldout_accuracy_trace.push_back(head_accuracy(*heldout_reps, *heldout_labels, res.head.theta));
    }
  };
  record();
  Rng batch_rng(cfg.seed, "finetune-batch");
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const auto idx = sample_batch(reps.rows(), cfg.batch_size, batch_rng);
    const bool full = idx.size() == reps.rows();
    const LossAndGrads g = full ? head_risk(reps, labels, res.head.theta)
                                : head_risk(gather_rows(reps, idx), gather_rows(labels, idx), res.head.theta);
    res.head.theta -= g.grads[0] * cfg.learning_rate;
    res.head.project();
    record();
    if (!std::isfinite(res.train_risk.back())) {
      throw NumericalError("finetune_linear diverged at iteration " + std::to_string(t + 1));
    }
  }
  res.train_accuracy = head_accuracy(reps, labels, res.head.theta);
  if (heldout) res.heldout_accuracy = head_accuracy(*heldout_reps, *heldout_labels, res.head.theta);
  return res;
}

// ---------------------------------------------------------------------------
// End-to-end experiment

void EndToEndConfig::validate() const {
  if (input_dim == 0 || width < 2 || depth == 0) throw ValidationError("endtoend: d, m, L must be positive (m ≥ 2)");
  if (pretrain_samples < 2 || finetune_samples < 2) throw ValidationError("endtoend: N and n must be at least 2");
  if (eta < 0.0 || gamma < 0.0 || head_step < 0.0) throw ValidationError("endtoend: negative step size");
  if (!(eta_multiplier > 0.0) || !(gamma_multiplier > 0.0)) throw ValidationError("endtoend: multipliers must be positive");
}

double EndToEndConfig::resolved_eta() const {
  return eta > 0.0 ? eta : eta_multiplier * static_cast<double>(input_dim) / static_cast<double>(width);
}

double EndToEndConfig::resolved_gamma() const {
  const double l3 = std::pow(static_cast<double>(depth), 3.0);
  return gamma > 0.0 ? gamma : gamma_multiplier / (static_cast<double>(width) * l3);
}

LossAndGrads u_head_loss(const MlpEncoder& enc, const Matrix& theta, const Matrix& x, std::span<const double> labels) {
  require_binary_labels(labels);
  const MlpForward fwd = mlp_forward(enc, x);
  const Matrix& h = fwd.representation();
  const std::size_t m = theta.rows();
  if (theta.cols() != h.cols()) throw DimensionError("u_head_loss: Θ " + theta.shape_string());
  const Matrix pre = matmul_nt(h, theta);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  LossAndGrads r;
  Matrix d_pre(pre.rows(), pre.cols());
  for (std::size_t i = 0; i < pre.rows(); ++i) {
    double f = 0.0;
    for (std::size_t k = 0; k < m; ++k) f += (k < m / 2 ? 1.0 : -1.0) * std::max(0.0, pre(i, k));
    const double z = labels[i] * f;
    r.loss += logistic_loss(z);
    const double df = logistic_derivative(z) * labels[i] * inv_n;
    for (std::size_t k = 0; k < m; ++k) d_pre(i, k) = pre(i, k) > 0.0 ? df * (k < m / 2 ? 1.0 : -1.0) : 0.0;
  }
  r.loss *= inv_n;
  Matrix d_theta = matmul_tn(d_pre, h);
  r.grads = mlp_backward(enc, fwd, matmul(d_pre, theta));
  r.grads.push_back(std::move(d_theta));
  return r;
}

DriftTrace endtoend_gd_experiment(const EndToEndConfig& cfg) {
  cfg.validate();
  SynthConfig sc;
  sc.pretrain_count = cfg.pretrain_samples;
  sc.downstream_count = cfg.finetune_samples;
  sc.dim = cfg.input_dim;
  sc.seed = cfg.seed;
  const SynthTask task = gen_synth(sc);
  MaskTransform mt;
  mt.mask_ratio = cfg.mask_ratio;
  mt.seed = cfg.seed;
  const CeData data = make_ce_data(task.pretrain_raw, mt);

  Rng init_rng(cfg.seed, "init");
  CeModel model;
  model.encoder = init_mlp_encoder(cfg.input_dim, cfg.width, cfg.depth, init_rng);
  model.decoder = gaussian_matrix(cfg.input_dim, cfg.width, 2.0 / static_cast<double>(cfg.width), init_rng);
  const std::vector<Matrix> w0 = model.encoder.layers;

  DriftTrace tr;
  tr.eta = cfg.resolved_eta();
  tr.gamma = cfg.resolved_gamma();
  tr.pretrain_iters = cfg.pretrain_iters;
  tr.finetune_iters = cfg.finetune_iters;
  tr.drift_fro.assign(cfg.depth, {});
  tr.drift_spec.assign(cfg.depth, {});

  auto record = [&](const MlpEncoder& enc, double loss) {
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      const Matrix diff = enc.layers[l] - w0[l];
      tr.drift_fro[l].push_back(frobenius_norm(diff));
      tr.drift_spec[l].push_back(spectral_norm(diff, cfg.spectral_tol, 100000));
    }
    tr.loss.push_back(loss);
  };

  LossAndGrads g = ce_mse_loss(model, data.inputs, data.targets);
  for (std::size_t l = 0; l < cfg.depth; ++l) tr.initial_grad_fro.push_back(frobenius_norm(g.grads[l]));
  record(model.encoder, g.loss);
  for (std::size_t t = 0; t < cfg.pretrain_iters; ++t) {
    auto params = model.params();
    for (std::size_t p = 0; p < params.size(); ++p) params[p] -= g.grads[p] * tr.eta;
    model.set_params(params);
    g = ce_mse_loss(model, data.inputs, data.targets);
    if (!std::isfinite(g.loss)) {
      tr.failure = "pre-training diverged at iteration " + std::to_string(t + 1);
      return tr;
    }
    record(model.encoder, g.loss);
  }

  Rng head_rng(cfg.seed, "head");
  Matrix theta = gaussian_matrix(cfg.width, cfg.width, 2.0 / static_cast<double>(cfg.width), head_rng);
  MlpEncoder enc = model.encoder;
  const std::vector<double> y(task.labels.data().begin(), task.labels.data().end());
  LossAndGrads f = u_head_loss(enc, theta, task.downstream_x, y);
  tr.initial_finetune_loss = f.loss;
  tr.final_finetune_loss = f.loss;
  if (cfg.finetune_iters == 0) return tr;
  // t = T_pre is shared: the pre-training loss is already recorded there.
  for (std::size_t t = 0; t < cfg.finetune_iters; ++t) {
    for (std::size_t l = 0; l < cfg.depth; ++l) enc.layers[l] -= f.grads[l] * tr.gamma;
    theta -= f.grads.back() * cfg.head_step;
    f = u_head_loss(enc, theta, task.downstream_x, y);
    if (!std::isfinite(f.loss)) {
      tr.failure = "fine-tuning diverged at iteration " + std::to_string(t + 1);
      return tr;
    }
    record(enc, f.loss);
    tr.final_finetune_loss = f.loss;
  }
  return tr;
}

std::string drift_csv(const DriftTrace& trace) {
  std::string out = "iteration,layer,drift_fro,drift_spec,loss\n";
  const std::size_t steps = trace.loss.size();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t l = 0; l < trace.drift_fro.size(); ++l) {
      out += std::to_string(t) + "," + std::to_string(l + 1) + "," + format_double(trace.drift_fro[l][t]) + "," +
             format_double(trace.drift_spec[l][t]) + "," + format_double(trace.loss[t]) + "\n";
    }
  }
  return out;
}

}  // namespace radlab
