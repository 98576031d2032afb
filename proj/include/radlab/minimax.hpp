#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "radlab/rademacher.hpp"

namespace radlab {

// ---------------------------------------------------------------------------
// Moreau envelope diagnostics

/// Value and gradient of an objective on a flat parameter vector.
using Oracle = std::function<double(std::span<const double> w, std::vector<double>* grad)>;

struct MoreauProbe {
  double rho = 0.0;    // 0 selects 1/(4 L̂)
  double l_hat = 0.0;  // 0: estimated by the optimizer before the first probe
  std::size_t inner_iters = 20000;
  double inner_tol = 1e-10;

  double resolved_rho() const { return rho > 0.0 ? rho : 1.0 / (4.0 * l_hat); }
  void validate() const;
};

/// Proximal point ŵ = argmin Ψ(w′) + ‖w′ − w‖²/(2ρ) by gradient descent.
std::vector<double> moreau_prox(const Oracle& psi, std::span<const double> w, const MoreauProbe& probe);

/// ∇Ψ_ρ(w) = (w − ŵ)/ρ.
std::vector<double> moreau_gradient(const Oracle& psi, std::span<const double> w, const MoreauProbe& probe);

/// Ψ_ρ(w) = Ψ(ŵ) + ‖ŵ − w‖²/(2ρ).
double moreau_envelope(const Oracle& psi, std::span<const double> w, const MoreauProbe& probe);

/// Largest ‖∇Ψ(a) − ∇Ψ(b)‖/‖a − b‖ over random pairs in a box of half-width
/// `spread` around `center`.
double estimate_smoothness(const Oracle& psi, std::span<const double> center, double spread,
                           std::size_t pairs = 100, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Step sizes

struct StepSizes {
  double eta = 0.0;
  double gamma = 0.0;
  double gradient_complexity = 0.0;
};

struct StepSizeInputs {
  double epsilon = 0.1;
  double smoothness = 1.0;   // L
  double dual_radius = 1.0;  // D
  double grad_bound = 1.0;   // G
  double noise = 1.0;        // δ
  double batch = 1.0;        // n′
  double configs = 1.0;      // B
  double envelope_gap = 1.0; // Δ
  double eta_multiplier = 1.0;
  double gamma_multiplier = 1.0;
};

/// η = ε⁶/(L³D²G), γ = ε²/(Lδ²), complexity B L³ (G² + δ²/n′) D² (δ²/n′) Δ / ε⁸.
StepSizes theoretical_step_sizes(const StepSizeInputs& in);

// ---------------------------------------------------------------------------
// SGDA

/// A min–max problem min_w L(w) + (λ/B) Σ_j max_{‖v_j‖≤D} R_j(v_j, w) with
/// stochastic first-order access. `evaluate` is called exactly once per
/// iteration and may advance internal sampling streams.
class SgdaProblem {
 public:
  virtual ~SgdaProblem() = default;
  virtual std::vector<Matrix> initial_primal() const = 0;
  virtual std::vector<Matrix> initial_duals() const = 0;
  virtual RadRegEval evaluate(const std::vector<Matrix>& w, const std::vector<Matrix>& v, double lambda) = 0;
  /// Deterministic objective recorded in the loss trace.
  virtual double trace_loss(const std::vector<Matrix>& w) = 0;
  /// Ψ(w) with the inner max solved exactly, on the flattened primal.
  virtual bool has_envelope() const { return false; }
  virtual double envelope(std::span<const double> w, std::vector<double>* grad, double lambda) const;
};

struct SgdaConfig {
  double eta = 0.01;
  double gamma = 0.01;
  std::size_t iterations = 100;
  double dual_radius = 1.0;  // D
  bool project = true;
  std::size_t probe_every = 50;  // 0 disables Moreau probes
  MoreauProbe probe;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SgdaTraces {
  std::vector<double> loss;        // T+1 entries
  std::vector<double> regularizer; // T entries
  std::vector<double> grad_norm;   // T entries, ‖∇_w‖
  std::vector<std::size_t> probe_iters;
  std::vector<double> moreau_sq;   // ‖∇Ψ_ρ(w^t)‖² at probe_iters
};

struct SgdaState {
  std::vector<Matrix> w;
  std::vector<Matrix> duals;
  double eta = 0.0;
  double gamma = 0.0;
  std::size_t iter = 0;
  SgdaTraces traces;
};

struct SgdaResult {
  SgdaState state;               // final iterate
  std::vector<Matrix> sampled_w; // uniformly sampled from w¹…w^T
  std::size_t sampled_index = 0;
};

/// v_j ← Π_D(v_j + γ ∇_v R_j), w ← w − η(∇L + (λ/B) Σ_j ∇_w R_j), both
/// gradients taken at (w^t, v^t).
SgdaResult radreg_train(SgdaProblem& problem, double lambda, const SgdaConfig& cfg);

struct ConvergenceReport {
  std::vector<double> running_average;  // over probe prefixes
  double final_average = 0.0;
  std::size_t best_iter = 0;
  double best_value = 0.0;
};

ConvergenceReport convergence_report(const SgdaTraces& traces);

std::string sgda_csv(const SgdaTraces& traces);

std::vector<double> flatten(const std::vector<Matrix>& params);
void unflatten(std::span<const double> flat, std::vector<Matrix>& params);

// ---------------------------------------------------------------------------
// Problems

/// Ψ(w) = ½ wᵀQw + bᵀw + (λ/B) Σ_j max_{‖v‖≤D} vᵀA_j w, with Gaussian noise of
/// standard deviation δ on every stochastic gradient.
class ToyBilinearProblem : public SgdaProblem {
 public:
  ToyBilinearProblem(Matrix q, Matrix b, std::vector<Matrix> a, Matrix w0, double dual_radius, double noise,
                     std::uint64_t seed);

  /// Random PSD Q (eigenvalues in [0.5, 1.5]), b, A_j with the given sizes.
  static ToyBilinearProblem random(std::size_t dim, std::size_t dual_dim, std::size_t configs, double dual_radius,
                                   double noise, std::uint64_t seed);

  std::vector<Matrix> initial_primal() const override { return {w0_}; }
  std::vector<Matrix> initial_duals() const override;
  RadRegEval evaluate(const std::vector<Matrix>& w, const std::vector<Matrix>& v, double lambda) override;
  double trace_loss(const std::vector<Matrix>& w) override;
  bool has_envelope() const override { return true; }
  double envelope(std::span<const double> w, std::vector<double>* grad, double lambda) const override;

  /// ‖Q‖ + λ max_j ‖A_j‖: smoothness of the min–max objective.
  double smoothness(double lambda) const;
  /// Bound on the noiseless primal gradient over ‖w‖ ≤ r.
  double gradient_bound(double r, double lambda) const;

 private:
  Matrix q_, b_;
  std::vector<Matrix> a_;
  Matrix w0_;
  double dual_radius_;
  double noise_;
  Rng rng_;
};

/// The regularized pre-training problem on a neural model; the two sampling
/// streams ("batch" for pre-training data, "downstream-batch" for downstream
/// inputs) are independent so the λ = 0 trajectory matches `pretrain`.
template <class Model, class Data, class Downstream>
class RadRegProblem : public SgdaProblem {
 public:
  RadRegProblem(Model init, const Data& data, const Downstream& downstream, RademacherBatch signs,
                std::size_t batch_size, std::size_t downstream_batch, std::uint64_t seed, PretrainExtras extras = {})
      : model_(std::move(init)),
        data_(data),
        downstream_(downstream),
        signs_(std::move(signs)),
        batch_size_(batch_size),
        downstream_batch_(downstream_batch),
        extras_(extras),
        batch_rng_(seed, "batch"),
        down_rng_(seed, "downstream-batch") {}

  std::vector<Matrix> initial_primal() const override { return model_.params(); }

  std::vector<Matrix> initial_duals() const override {
    return std::vector<Matrix>(signs_.count(), Matrix(rep_dim(), 1));
  }

  RadRegEval evaluate(const std::vector<Matrix>& w, const std::vector<Matrix>& v, double lambda) override {
    model_.set_params(w);
    const auto idx = sample_batch(data_.size(), batch_size_, batch_rng_);
    const auto down_idx = sample_batch(downstream_size(), downstream_batch_, down_rng_);
    return radreg_loss_and_grad(model_, v, signs_, select(data_, idx), downstream_, down_idx, lambda, extras_);
  }

  double trace_loss(const std::vector<Matrix>& w) override {
    model_.set_params(w);
    return pretrain_objective(model_, data_, extras_).loss;
  }

  const Model& model_with(const std::vector<Matrix>& w) {
    model_.set_params(w);
    return model_;
  }

 private:
  std::size_t downstream_size() const {
    if constexpr (std::is_same_v<Downstream, Matrix>) {
      return downstream_.rows();
    } else {
      return downstream_.size();
    }
  }
  std::size_t rep_dim() const {
    if constexpr (std::is_same_v<Model, CeModel>) {
      return model_.encoder.layers.empty() ? model_.decoder.cols() : model_.encoder.layers.back().rows();
    } else {
      return model_.encoder.patch_dim;
    }
  }

  Model model_;
  const Data& data_;
  const Downstream& downstream_;
  RademacherBatch signs_;
  std::size_t batch_size_;
  std::size_t downstream_batch_;
  PretrainExtras extras_;
  Rng batch_rng_;
  Rng down_rng_;
};

using CeRadRegProblem = RadRegProblem<CeModel, CeData, Matrix>;
using MaeRadRegProblem = RadRegProblem<MaeModel, MaeData, std::vector<Matrix>>;

}  // namespace radlab
