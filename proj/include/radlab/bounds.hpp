#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radlab/models.hpp"

namespace radlab {

/// Two printed forms of the covering constants: kDetailed (default) uses
/// (Σ (B/W)^{2/3})³ and the longer ρ_l, kCompact uses (Σ B/W)³ and the short ρ_l.
enum class FormulaVariant { kDetailed, kCompact };

struct BoundParams {
  std::vector<double> w_caps;  // W(l): spectral-norm caps
  std::vector<double> b_caps;  // B(l): (2,1)-norm caps
  double z_norm = 1.0;         // ‖Z̃‖ of the pre-training data
  double x_norm = 1.0;         // ‖X‖ of the downstream data; its square stands for Σ‖x_i‖²
  double x_star = 1.0;         // max_i ‖X_i‖ (masked-autoencoder samples)
  std::size_t d = 1;
  std::size_t m = 1;
  std::size_t k = 1;    // patches
  std::size_t d_k = 1;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  std::size_t n = 1;    // downstream samples
  std::size_t big_n = 1;  // pre-training samples
  double nu = 0.05;
  double h = 1.0;        // smoothness of the pre-training loss
  double b = 1.0;        // bound on the pre-training loss
  double g_phi = 1.0;    // Lipschitz constant of the downstream loss
  double b_phi = 1.0;    // bound on the downstream loss
  double radius = 1.0;   // R
  double tv = 0.0;       // user-supplied estimate of the input-distribution TV distance
  double c_beta = 1.0;
  double beta = 0.5;
  FormulaVariant variant = FormulaVariant::kDetailed;

  void validate() const;
};

/// ln N∞ ≤ (‖Z̃‖² ln(2m²)/ε²) ∏W²(l) (Σ (B(l)/W(l))^{2/3})³; the main-text
/// variant uses (Σ B(l)/W(l))³.
double nn_covering_ln(const BoundParams& p, double eps);

struct TransformerConstants {
  std::vector<double> s;    // s_1 … s_L
  std::vector<double> rho;  // ρ_1 … ρ_L
};

TransformerConstants transformer_constants(const BoundParams& p);

/// r* = 100 (Hc/N) max{1, ln((2/5)√(bN/(Hc)))}².
double local_rad_fixed_point(double h, double c, double b, double big_n);
/// φ(r) = 10 √(Hcr/N) max{1, ln((2/5)√(bN/(Hc)))}.
double local_rad_phi(double r, double h, double c, double b, double big_n);
/// |φ(r*) − r*| / r*.
double fixed_point_residual(double h, double c, double b, double big_n);

struct BoundDecomposition {
  double complexity = 0.0;      // 4 G_φ · Rademacher bound of the head class
  double pretrain = 0.0;        // C_β (pre-training excess risk)^β
  double pretrain_excess = 0.0; // r* + log(1/ν)/N
  double fixed_point = 0.0;     // r*
  double c = 0.0;               // local-Rademacher covering constant
  double confidence = 0.0;      // 4 B_φ √(log(1/ν)/n)
  double tv_term = 0.0;         // 4 B_φ TV
  double total = 0.0;
};

BoundDecomposition ce_bound(const BoundParams& p);
BoundDecomposition mae_bound(const BoundParams& p);

/// {"complexity": …, …, "total": …}
std::string bound_json(const BoundDecomposition& b);

/// ½ Σ |p_i − q_i|; inputs must be non-negative and sum to 1 ± 1e-9.
double tv_distance(std::span<const double> p, std::span<const double> q);
/// sup over events |P(A) − Q(A)|, attained by A = {i : p_i > q_i}.
double tv_event_sup(std::span<const double> p, std::span<const double> q);

struct RuheResult {
  bool ok = false;
  double lower = 0.0;  // Σ a_i b_{n−i+1}
  double trace = 0.0;  // tr(AB)
  double upper = 0.0;  // Σ a_i b_i
};

RuheResult ruhe_check(const Matrix& a, const Matrix& b);

struct TransferProbeResult {
  double delta_ft = 0.0;
  double delta_pt = 0.0;
  double ratio = 0.0;             // Δft/√Δpt, 0 when both vanish
  Matrix lambda_schur;            // Σĥĥ − Σĥ* Σ**† Σ*ĥ
  double ceiling = 0.0;           // G_φ √(θ̃ᵀΛ′θ̃) / √(tr(Λ′ W*ᵀW*))
  double loose_ceiling = 0.0;     // G_φ √(σmax(θ̃θ̃ᵀ)/σmin(W*ᵀW*))
  bool bound_ok = false;
  Matrix head_star;               // θ̃ fitted on h*
  Matrix head_hat;
};

struct TransferProbeConfig {
  double radius = 10.0;        // R of the head ball
  double g_phi = 1.0;
  std::size_t head_iters = 2000;
  double pinv_cutoff = 1e-10;
};

/// Representations on a common labelled sample: ĥ (n×p), h* (n×p), the
/// reference decoder W* (q×p) defining pre-training targets W* h*, and ±1
/// labels.
TransferProbeResult transferability_probe(const Matrix& h_hat, const Matrix& h_star, const Matrix& w_star,
                                          std::span<const double> labels, const TransferProbeConfig& cfg);
TransferProbeResult transferability_probe(const MlpEncoder& h_hat, const MlpEncoder& h_star, const Matrix& x,
                                          const Matrix& w_star, std::span<const double> labels,
                                          const TransferProbeConfig& cfg);

struct VerifyOutcome {
  bool passed = true;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // lhs / rhs
};

/// Random (X, X̂) pairs of unit Frobenius norm against
/// ‖SA(X) − SA(X̂)‖ ≤ (α₂W² + 1)(α₁KW + 1)‖X − X̂‖, W the largest weight
/// spectral norm. Identical inputs count as a pass.
VerifyOutcome verify_sa_contraction(const SaLayer& layer, std::size_t patches, std::size_t trials,
                                    std::uint64_t seed);

/// ‖X^l‖ ≤ s_l ‖X⁰‖ for every prefix with W(j) = max(‖layer j‖, 1/√K).
VerifyOutcome verify_norm_growth(const TransformerEncoder& enc, const Matrix& x);

/// Caps W(j) = max(largest weight spectral norm, 1/√K) and s_l of an encoder.
std::vector<double> norm_growth_caps(const TransformerEncoder& enc);

}  // namespace radlab
