#pragma once

#include <cstdint>
#include <vector>

#include "radlab/pretrain.hpp"

namespace radlab {

struct RademacherBatch {
  std::vector<Matrix> configs;  // B sign matrices, n×o (o = 1 for binary)
  std::uint64_t seed = 0;

  std::size_t count() const { return configs.size(); }
};

/// Signs from the "rademacher" stream of `seed`.
RademacherBatch sample_rademacher(std::size_t b, std::size_t n, std::size_t o, std::uint64_t seed);

struct InnerSup {
  double value = 0.0;
  Matrix argmax;  // θ (p×1) or V (o×p)
};

/// sup_{‖θ‖≤R} θᵀu with u = (1/n) Σ σ_i h(x_i): value R‖u‖, θ = R u/‖u‖.
InnerSup inner_sup_binary(const Matrix& reps, std::span<const double> sigma, double radius);

/// M = (1/n) Σ h(x_i) σ_iᵀ (p×o).
Matrix rademacher_moment(const Matrix& reps, const Matrix& sigma);

/// sup over the Frobenius ball of tr(V M): value R‖M‖_F, V = R Mᵀ/‖M‖_F.
InnerSup inner_sup_multiclass(const Matrix& moment, double radius);

/// Projected gradient ascent on the same objectives (checks for the closed
/// forms).
InnerSup inner_sup_binary_ascent(const Matrix& reps, std::span<const double> sigma, double radius,
                                 std::size_t steps = 500, double step = 1.0);
InnerSup inner_sup_multiclass_ascent(const Matrix& moment, double radius, std::size_t steps = 500,
                                     double step = 1.0);

struct RegularizerValue {
  std::vector<double> values;  // one per configuration
  double mean = 0.0;
  double std_err = 0.0;
};

/// Monte-Carlo average over the batch of the inner sup on fixed
/// representations (n×p). Binary configs use the vector form, others the
/// Frobenius-ball form.
RegularizerValue estimate_complexity(const Matrix& reps, const RademacherBatch& rb, double radius);
RegularizerValue estimate_complexity(const MlpEncoder& enc, const Matrix& x, const RademacherBatch& rb,
                                     double radius);
RegularizerValue estimate_complexity(const TransformerEncoder& enc, const std::vector<Matrix>& x,
                                     const RademacherBatch& rb, double radius);

struct RadRegEval {
  double loss = 0.0;             // pre-training objective + (λ/B) Σ_j R_j
  double pretrain_loss = 0.0;
  double regularizer = 0.0;      // (1/B) Σ_j R_j
  std::vector<Matrix> grad_w;    // model parameter order
  std::vector<Matrix> grad_v;    // ∇_{v_j} R_j = (1/n′) Σ_i σ_i^j h(x_i)
};

/// R_j = (1/n′) Σ_{i∈batch} σ_{i}^j v_jᵀ h_w(x_i) with binary duals v_j (p×1).
/// `batch` indexes both the downstream inputs and the sign vectors. λ = 0
/// skips the regularizer and returns zero dual gradients.
RadRegEval radreg_loss_and_grad(const CeModel& model, std::span<const Matrix> duals, const RademacherBatch& rb,
                                const CeData& pretrain_batch, const Matrix& downstream_x,
                                const std::vector<std::size_t>& batch, double lambda,
                                const PretrainExtras& extras = {});
RadRegEval radreg_loss_and_grad(const MaeModel& model, std::span<const Matrix> duals, const RademacherBatch& rb,
                                const MaeData& pretrain_batch, const std::vector<Matrix>& downstream_x,
                                const std::vector<std::size_t>& batch, double lambda,
                                const PretrainExtras& extras = {});

}  // namespace radlab
