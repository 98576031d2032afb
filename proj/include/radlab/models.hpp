#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "radlab/matrix.hpp"
#include "radlab/rng.hpp"

namespace radlab {

// ---------------------------------------------------------------------------
// MLP context encoder: h(x) = σ(W_L ⋯ σ(W_1 x)), batch rows are samples.

struct MlpEncoder {
  /// W_1 is m×d, W_2…W_L are m×m. An empty list is the identity encoder.
  std::vector<Matrix> layers;

  void validate() const;
  std::size_t depth() const { return layers.size(); }
  std::vector<NormReport> norms() const;
};

/// Activations of one forward pass, kept for the backward pass.
struct MlpForward {
  Matrix input;
  std::vector<Matrix> pre;          // h_{l-1} W_lᵀ
  std::vector<Matrix> activations;  // h_l = ReLU(pre_l)

  const Matrix& representation() const {
    return activations.empty() ? input : activations.back();
  }
};

MlpForward mlp_forward(const MlpEncoder& enc, const Matrix& x);

/// Vector–Jacobian product: gradients of ⟨d_rep, h(x)⟩ with respect to each
/// layer, given the upstream gradient on the representation (same shape).
std::vector<Matrix> mlp_backward(const MlpEncoder& enc, const MlpForward& fwd, Matrix d_rep);

/// Rows drawn from N(0, 2I/m) where m is the layer's output width.
MlpEncoder init_mlp_encoder(std::size_t input_dim, std::size_t width, std::size_t depth, Rng& rng);

// ---------------------------------------------------------------------------
// Self-attention block with residual scalings:
//   A = softmax(X W_K (X W_Q)ᵀ / √d_K) X W_V
//   Z = α₁ A + X
//   SA(X) = α₂ σ(Z W_FC1) W_FC2 + Z

struct SaLayer {
  Matrix w_v;    // d×d
  Matrix w_k;    // d×d_K
  Matrix w_q;    // d×d_K
  Matrix w_fc1;  // d×m
  Matrix w_fc2;  // m×d
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  std::size_t d_k = 1;

  void validate() const;
  std::size_t model_dim() const { return w_v.rows(); }
  /// max over the five weights of the spectral norm.
  double max_spectral_norm() const;
};

struct SaCache {
  Matrix x;
  Matrix keys;     // X W_K
  Matrix queries;  // X W_Q
  Matrix scores;   // softmax rows
  Matrix values;   // X W_V
  Matrix z;
  Matrix hidden_pre;  // Z W_FC1
};

Matrix sa_forward(const SaLayer& layer, const Matrix& x);
SaCache sa_forward_cached(const SaLayer& layer, const Matrix& x);
Matrix sa_output(const SaLayer& layer, const SaCache& cache);

struct SaGrad {
  Matrix w_v, w_k, w_q, w_fc1, w_fc2;
  Matrix input;
};

SaGrad sa_backward(const SaLayer& layer, const SaCache& cache, const Matrix& d_out);

struct TransformerEncoder {
  std::vector<SaLayer> layers;
  std::size_t patch_count = 0;  // K
  std::size_t patch_dim = 0;    // d

  void validate() const;
};

/// X⁰…X^L for one sample (X⁰ is the input).
std::vector<Matrix> transformer_prefix_outputs(const TransformerEncoder& enc, const Matrix& x);
Matrix transformer_forward(const TransformerEncoder& enc, const Matrix& x);

struct TransformerForward {
  std::vector<SaCache> caches;
  Matrix output;
};

TransformerForward transformer_forward_cached(const TransformerEncoder& enc, const Matrix& x);

/// Gradients in parameter order (per layer: w_v, w_k, w_q, w_fc1, w_fc2) of
/// ⟨d_out, h(X)⟩.
std::vector<Matrix> transformer_backward(const TransformerEncoder& enc, const TransformerForward& fwd,
                                         const Matrix& d_out);

/// Each of the five weights gets i.i.d. N(0, 2/m) entries, m the FC width.
TransformerEncoder init_transformer(std::size_t patch_count, std::size_t patch_dim, std::size_t d_k,
                                    std::size_t width, std::size_t depth, double alpha1,
                                    double alpha2, Rng& rng);

/// 1ᵀh(X): patch-summed representation, 1×d.
Matrix transformer_representation(const TransformerEncoder& enc, const Matrix& x);

// ---------------------------------------------------------------------------
// Heads and losses.

/// θ is p×o (o = 1 for binary). The head lives in the Frobenius ball of
/// radius R.
struct LinearHead {
  Matrix theta;
  double radius = 1.0;

  void project();
};

/// Logistic loss φ(z) = log(1 + e^{-z}) evaluated without overflow.
double logistic_loss(double z);
/// φ′(z) = −1 / (1 + e^{z}).
double logistic_derivative(double z);

/// Projects m onto the Frobenius ball of radius r in place.
void project_frobenius_ball(Matrix& m, double r);

struct LossAndGrads {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

/// Context-encoder composite: g(h(x)) = W_{L+1} h(x).
struct CeModel {
  MlpEncoder encoder;
  Matrix decoder;  // d×m (or d×d with an identity encoder)

  std::vector<Matrix> params() const;
  void set_params(std::span<const Matrix> p);
  std::size_t encoder_param_count() const { return encoder.layers.size(); }
};

/// Masked-autoencoder composite: g(h(X)) = h(X) W_D.
struct MaeModel {
  TransformerEncoder encoder;
  Matrix decoder;  // d×d

  std::vector<Matrix> params() const;
  void set_params(std::span<const Matrix> p);
  std::size_t encoder_param_count() const { return 5 * encoder.layers.size(); }
};

/// (1/N) Σ_i Σ_j w_ij (g(h(z̃_i)) − y_i)_j²; `weights` (same shape as targets)
/// selects coordinates, nullptr means all.
LossAndGrads ce_mse_loss(const CeModel& model, const Matrix& inputs, const Matrix& targets,
                         const Matrix* weights = nullptr);

/// (1/N) Σ_i ‖A_i ⊙ (h(Z̃_i) W_D − Z_i)‖_F²; empty `weights` means all ones.
LossAndGrads mae_mse_loss(const MaeModel& model, std::span<const Matrix> inputs,
                          std::span<const Matrix> targets, std::span<const Matrix> weights = {});

/// (1/n) Σ φ(y_i θᵀh(x_i)); grads = encoder layers then θ (p×1).
LossAndGrads mlp_logistic_loss(const MlpEncoder& enc, const Matrix& theta, const Matrix& x,
                               std::span<const double> labels);

/// (1/n) Σ φ(y_i (1ᵀh(X_i)) θ); grads = transformer params then θ (d×1).
LossAndGrads transformer_logistic_loss(const TransformerEncoder& enc, const Matrix& theta,
                                       std::span<const Matrix> x, std::span<const double> labels);

void require_binary_labels(std::span<const double> labels);

}  // namespace radlab
