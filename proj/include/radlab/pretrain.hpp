#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "radlab/models.hpp"

namespace radlab {

// ---------------------------------------------------------------------------
// Masking

enum class MaskGranularity { kCoordinate, kPatch };

struct MaskTransform {
  double mask_ratio = 0.0;
  double fill_value = 0.0;
  std::uint64_t seed = 0;
  MaskGranularity granularity = MaskGranularity::kCoordinate;

  void validate() const;
};

/// z̃ (input), y (target = the full original) and the 0/1 indicator of masked
/// entries.
struct MaskedSample {
  Matrix input;
  Matrix target;
  Matrix indicator;
  std::vector<std::size_t> masked_units;  // sorted
};

/// Units are entries (coordinate) or rows (patch) of `x`;
/// round(ratio × units) of them are replaced by the fill value.
MaskedSample apply_mask(const Matrix& x, const MaskTransform& t);
MaskedSample apply_mask(const Matrix& x, const MaskTransform& t, Rng& rng);

/// Pre-training data for the two encoder kinds.
struct CeData {
  Matrix inputs;   // N×d masked
  Matrix targets;  // N×d
  Matrix indicator;
  std::size_t size() const { return inputs.rows(); }
};

struct MaeData {
  std::vector<Matrix> inputs;  // K×d each
  std::vector<Matrix> targets;
  std::vector<Matrix> indicator;
  std::size_t size() const { return inputs.size(); }
};

/// Row-wise coordinate masking of an N×d batch from one mask stream.
CeData make_ce_data(const Matrix& raw, const MaskTransform& t);
/// Patch masking of each K×d sample from one mask stream.
MaeData make_mae_data(const std::vector<Matrix>& raw, const MaskTransform& t);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t iterations = 100;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;

  void validate() const;
};

/// Extra terms shared by the pre-training variants of the comparison
/// experiment: λ‖w‖² over every parameter and an α-weighted reconstruction
/// loss on the (unlabeled) downstream inputs.
struct PretrainExtras {
  double l2_lambda = 0.0;
  double aux_weight = 0.0;
  const CeData* aux_ce = nullptr;
  const MaeData* aux_mae = nullptr;
  bool masked_only = false;
};

template <class Model>
struct PretrainResult {
  Model model;
  std::vector<double> loss_trace;  // full-data pre-training objective, T+1 entries
};

/// Minibatch indices for one step: the full range when batch_size is 0 or
/// ≥ N, otherwise a sample without replacement from `rng`.
std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, Rng& rng);

CeData select(const CeData& data, const std::vector<std::size_t>& idx);
MaeData select(const MaeData& data, const std::vector<std::size_t>& idx);

/// Objective value and gradient of L_Û plus extras on a batch.
LossAndGrads pretrain_objective(const CeModel& model, const CeData& batch, const PretrainExtras& extras);
LossAndGrads pretrain_objective(const MaeModel& model, const MaeData& batch, const PretrainExtras& extras);

/// Plain (S)GD. Throws NumericalError naming the iteration and the last
/// finite loss when the objective diverges.
PretrainResult<CeModel> pretrain(CeModel init, const CeData& data, const TrainConfig& cfg,
                                 const PretrainExtras& extras = {});
PretrainResult<MaeModel> pretrain(MaeModel init, const MaeData& data, const TrainConfig& cfg,
                                  const PretrainExtras& extras = {});

// ---------------------------------------------------------------------------
// Linear fine-tuning on frozen representations

struct FinetuneResult {
  LinearHead head;
  std::vector<double> train_risk;    // T+1 entries
  std::vector<double> heldout_risk;  // T+1 entries, empty without held-out data
  std::vector<double> heldout_accuracy_trace;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
};

/// Binary labels are ±1 (`labels` is n×1); multiclass labels are one-hot
/// (n×o, o ≥ 2) and use a softmax cross-entropy head. θ starts at 0 and is
/// projected onto the Frobenius ball of radius R after every step.
FinetuneResult finetune_linear(const Matrix& reps, const Matrix& labels, const TrainConfig& cfg,
                               double radius, const Matrix* heldout_reps = nullptr,
                               const Matrix* heldout_labels = nullptr);

/// Risk and gradient of the head at θ.
LossAndGrads head_risk(const Matrix& reps, const Matrix& labels, const Matrix& theta);

/// Sign of the head output (0 counts as +1) or argmax with ties to the lower
/// class index.
double head_accuracy(const Matrix& reps, const Matrix& labels, const Matrix& theta);

/// Representation of an N×d batch (MLP) or of each K×d sample (1ᵀh(X)).
Matrix representations(const MlpEncoder& enc, const Matrix& x);
Matrix representations(const TransformerEncoder& enc, const std::vector<Matrix>& x);

// ---------------------------------------------------------------------------
// End-to-end gradient-descent experiment with weight-drift tracking

struct EndToEndConfig {
  std::size_t input_dim = 16;  // d
  std::size_t width = 256;     // m
  std::size_t depth = 2;       // L
  std::size_t pretrain_samples = 50;
  std::size_t finetune_samples = 10;
  std::size_t pretrain_iters = 50;
  std::size_t finetune_iters = 50;
  double eta = 0.0;    // 0 selects c·d/m
  double gamma = 0.0;  // 0 selects c′/(m L³)
  double eta_multiplier = 1.0;
  double gamma_multiplier = 1.0;
  double head_step = 1.0;
  double mask_ratio = 0.25;
  double spectral_tol = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  double resolved_eta() const;
  double resolved_gamma() const;
};

struct DriftTrace {
  // [layer][t], t = 0 … T_pre + T_ft
  std::vector<std::vector<double>> drift_fro;
  std::vector<std::vector<double>> drift_spec;
  std::vector<double> loss;  // pre-training loss then fine-tuning loss, same indexing
  std::size_t pretrain_iters = 0;
  std::size_t finetune_iters = 0;
  double initial_finetune_loss = 0.0;
  double final_finetune_loss = 0.0;
  std::vector<double> initial_grad_fro;  // ‖∇W_l‖_F at t = 0
  double eta = 0.0;
  double gamma = 0.0;
  std::string failure;  // set when the run diverged; traces stop there
};

/// Fine-tuning model ŷ = uᵀσ(Θ h(x)) with u = (+1 on the first half, −1 on the
/// rest) and logistic loss; grads are encoder layers then Θ.
LossAndGrads u_head_loss(const MlpEncoder& enc, const Matrix& theta, const Matrix& x,
                         std::span<const double> labels);

DriftTrace endtoend_gd_experiment(const EndToEndConfig& cfg);

/// CSV with columns iteration,layer,drift_fro,drift_spec,loss.
std::string drift_csv(const DriftTrace& trace);

}  // namespace radlab
