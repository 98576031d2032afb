#include "radlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "radlab/rng.hpp"

namespace radlab {

namespace {

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

// Score gap of the planted rule at v: |w·v| (binary) or top minus runner-up.
double rule_margin(const Matrix& w_star, std::span<const double> v) {
  if (w_star.rows() == 1) return std::abs(dot(w_star.row(0), v));
  double best = -std::numeric_limits<double>::infinity();
  double second = best;
  for (std::size_t c = 0; c < w_star.rows(); ++c) {
    const double s = dot(w_star.row(c), v);
    if (s > best) {
      second = best;
      best = s;
    } else if (s > second) {
      second = s;
    }
  }
  return best - second;
}

std::vector<double> summed_patches(std::span<const double> flat, std::size_t k, std::size_t d) {
  std::vector<double> s(d, 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t j = 0; j < d; ++j) s[j] += flat[r * d + j];
  return s;
}

struct Sampler {
  std::size_t count;
  std::size_t width;  // K·d
  double target;
  std::size_t max_rescales;
  const char* what;
};

// Returns count×width accepted points in generation order.
template <class Accept>
Matrix rejection_sample(const Sampler& s, Rng& rng, Accept&& extra) {
  Matrix out(s.count, s.width);
  std::vector<double> cand(s.width);
  double scale = 1.0;
  std::size_t rescales = 0;
  std::size_t rejections = 0;
  const double target2 = s.target * s.target;
  for (std::size_t i = 0; i < s.count;) {
    for (double& v : cand) v = scale * rng.normal();
    bool ok = extra(std::span<const double>(cand));
    for (std::size_t j = 0; ok && j < i; ++j) ok = sq_distance(out.row(j), cand) >= target2;
    if (ok) {
      std::copy(cand.begin(), cand.end(), out.row(i).begin());
      ++i;
      rejections = 0;
      continue;
    }
    if (++rejections > 10 * s.count) {
      if (rescales == s.max_rescales) {
        throw ValidationError(std::string("gen_synth: cannot place ") + std::to_string(s.count) + " " +
                              s.what + " points at separation " + std::to_string(s.target) +
                              " in dimension " + std::to_string(s.width) +
                              "; use a smaller sample count or a larger dimension");
      }
      scale *= 1.5;
      ++rescales;
      rejections = 0;
    }
  }
  return out;
}

std::vector<Matrix> split_samples(const Matrix& flat, std::size_t k, std::size_t d) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < flat.rows(); ++i) {
    const auto r = flat.row(i);
    out.emplace_back(k, d, std::vector<double>(r.begin(), r.end()));
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (pretrain_count < 2 || downstream_count < 2) throw ValidationError("gen_synth: N and n must be at least 2");
  if (dim == 0 || patches == 0) throw ValidationError("gen_synth: d and K must be positive");
  if (classes < 2) throw ValidationError("gen_synth: classes must be at least 2");
  if (!(c1_target > 0.0) || !(c2_target > 0.0)) throw ValidationError("gen_synth: separation targets must be positive");
  if (margin < 0.0) throw ValidationError("gen_synth: margin must be non-negative");
}

double min_pairwise_distance(const Matrix& rows) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) best = std::min(best, sq_distance(rows.row(i), rows.row(j)));
  return std::sqrt(best);
}

double min_pairwise_distance(const std::vector<Matrix>& samples) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) best = std::min(best, sq_distance(samples[i].data(), samples[j].data()));
  return std::sqrt(best);
}

Matrix planted_label(const Matrix& w_star, std::span<const double> v) {
  if (w_star.rows() == 1) return Matrix(1, 1, dot(w_star.row(0), v) >= 0.0 ? 1.0 : -1.0);
  Matrix y(1, w_star.rows());
  std::size_t best = 0;
  double best_score = dot(w_star.row(0), v);
  for (std::size_t c = 1; c < w_star.rows(); ++c) {
    const double s = dot(w_star.row(c), v);
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  y(0, best) = 1.0;
  return y;
}

std::optional<std::string> sample_size_warning(std::size_t big_n, std::size_t small_n, std::size_t depth) {
  if (depth == 0) return std::nullopt;
  const double need = std::pow(static_cast<double>(small_n), 1.5) * std::pow(static_cast<double>(depth), 2.0 / 3.0);
  if (static_cast<double>(big_n) >= need) return std::nullopt;
  return "pre-training sample count N=" + std::to_string(big_n) + " is below n^(3/2) L^(2/3) = " +
         std::to_string(need) + " for n=" + std::to_string(small_n) + ", L=" + std::to_string(depth);
}

SynthTask gen_synth(const SynthConfig& cfg) {
  cfg.validate();
  SynthTask task;
  task.seed = cfg.seed;
  const std::size_t k = cfg.patches;
  const std::size_t d = cfg.dim;
  const std::size_t width = k * d;

  Rng planted(cfg.seed, "synth-planted");
  const std::size_t o = cfg.classes == 2 ? 1 : cfg.classes;
  task.w_star = gaussian_matrix(o, d, 1.0, planted);
  for (std::size_t c = 0; c < o; ++c) {
    const double n = norm2(task.w_star.row(c));
    for (double& v : task.w_star.row(c)) v /= n;
  }

  Rng pre_rng(cfg.seed, "synth-pretrain");
  const Matrix pre = rejection_sample({cfg.pretrain_count, width, cfg.c1_target, cfg.max_rescales, "pre-training"},
                                      pre_rng, [](std::span<const double>) { return true; });

  Rng down_rng(cfg.seed, "synth-downstream");
  const Matrix down = rejection_sample(
      {cfg.downstream_count, width, cfg.c2_target, cfg.max_rescales, "downstream"}, down_rng,
      [&](std::span<const double> x) {
        const auto v = summed_patches(x, k, d);
        return rule_margin(task.w_star, v) >= cfg.margin;
      });

  task.labels = Matrix(cfg.downstream_count, cfg.classes == 2 ? 1 : cfg.classes);
  for (std::size_t i = 0; i < cfg.downstream_count; ++i) {
    const Matrix y = planted_label(task.w_star, summed_patches(down.row(i), k, d));
    std::copy(y.data().begin(), y.data().end(), task.labels.row(i).begin());
  }

  task.c1 = min_pairwise_distance(pre);
  task.c2 = min_pairwise_distance(down);
  if (k == 1) {
    task.pretrain_raw = pre;
    task.downstream_x = down;
  } else {
    task.pretrain_patches = split_samples(pre, k, d);
    task.downstream_patches = split_samples(down, k, d);
  }
  if (auto w = sample_size_warning(cfg.pretrain_count, cfg.downstream_count, cfg.depth_for_warning)) {
    task.warnings.push_back(*w);
  }
  return task;
}

}  // namespace radlab
