#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radlab/config.hpp"
#include "radlab/minimax.hpp"
#include "radlab/synth.hpp"
#include "radlab/weights.hpp"

namespace radlab {

enum class EncoderKind { kMlp, kTransformer };
enum class Regularizer { kNone, kL2, kRadReg };

std::string to_string(Regularizer r);
Regularizer regularizer_from_string(const std::string& s);

struct ExperimentConfig {
  SynthConfig task;              // downstream_count is the labeled training set size n
  std::size_t test_count = 200;  // extra labeled points for test accuracy
  std::string task_path;         // non-empty: load a gen-data container instead

  EncoderKind encoder = EncoderKind::kMlp;
  std::size_t width = 32;
  std::size_t depth = 2;
  std::size_t d_k = 4;
  double alpha1 = 0.5;
  double alpha2 = 0.5;
  double mask_ratio = 0.25;
  bool masked_only = false;

  std::vector<Regularizer> variants{Regularizer::kNone, Regularizer::kL2, Regularizer::kRadReg};
  double l2_lambda = 1e-3;
  double radreg_lambda = 0.1;
  std::size_t configs = 8;  // B
  double aux_weight = 0.01; // α
  double dual_step = 0.1;   // γ
  double dual_radius = 1.0; // D
  bool project = true;
  std::size_t downstream_batch = 0;

  TrainConfig pretrain{0.05, 2000, 0, 0};
  TrainConfig finetune{0.5, 500, 0, 0};
  double head_radius = 1.0;  // R
  std::size_t rad_eval_configs = 200;

  std::string weights_path;  // finetune subcommand: pre-trained model container

  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir;

  void validate() const;
  double lambda_for(Regularizer r) const;
};

/// Reads every known key and rejects the rest.
ExperimentConfig experiment_config_from(const Config& cfg);

struct RunRecord {
  Regularizer variant = Regularizer::kNone;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double final_acc = 0.0;
  double best_acc = 0.0;
  double train_acc = 0.0;
  double rad_est = 0.0;
  std::vector<double> loss_trace;
  std::string error;  // non-empty when a stage failed; numbers are NaN then
};

struct ComparisonReport {
  std::vector<RunRecord> runs;  // seed-major within each variant
};

/// Task of one seed split into train (first n downstream points) and test.
struct SplitTask {
  SynthTask task;
  Matrix train_labels, test_labels;
  Matrix train_x, test_x;                       // K = 1
  std::vector<Matrix> train_patches, test_patches;  // K > 1
};

SplitTask make_split_task(const ExperimentConfig& cfg, std::uint64_t seed);

struct TrainedEncoder {
  EncoderKind kind = EncoderKind::kMlp;
  CeModel ce;
  MaeModel mae;
  std::vector<double> loss_trace;
  SgdaTraces sgda;  // regularized variant only
};

TrainedEncoder pretrain_model(const ExperimentConfig& cfg, Regularizer variant, std::uint64_t seed,
                              const SplitTask& st);

struct Scores {
  double final_acc = 0.0;
  double best_acc = 0.0;
  double train_acc = 0.0;
  double rad_est = 0.0;  // R·E_σ‖(1/n)Σ σ_i h(x_i)‖ on the training split
  FinetuneResult finetune;
};

Scores evaluate_encoder(const ExperimentConfig& cfg, const TrainedEncoder& enc, const SplitTask& st,
                        std::uint64_t seed);

/// Pre-trains one variant and fine-tunes a linear head; stage failures are
/// recorded in `error` instead of thrown.
RunRecord run_variant(const ExperimentConfig& cfg, Regularizer variant, std::uint64_t seed);
ComparisonReport run_comparison(const ExperimentConfig& cfg);

/// Header `variant,lambda,final_acc,best_acc,train_acc,rad_est`, one row per
/// (variant, seed), then `<variant>:mean` and `<variant>:std` rows.
std::string comparison_csv(const ComparisonReport& report);

struct CsvRow {
  std::string variant;
  std::vector<double> values;  // lambda, final_acc, best_acc, train_acc, rad_est
};
std::vector<CsvRow> parse_comparison_csv(const std::string& text);

/// Writes comparison.csv, trace_<variant>_<seed>.csv and manifest.json.
void write_comparison(const ExperimentConfig& cfg, const ComparisonReport& report, const Config& raw);

/// {"tool": …, "version": …, "command": …, "seeds": […], "config": {…}} with
/// sorted keys and no timestamps.
std::string manifest_json(const std::string& command, const Config& raw, const std::vector<std::uint64_t>& seeds);

std::vector<NamedTensor> task_tensors(const SynthTask& task);
SynthTask task_from_tensors(const std::vector<NamedTensor>& tensors, std::size_t patches);

std::vector<NamedTensor> model_tensors(const CeModel& m);
std::vector<NamedTensor> model_tensors(const MaeModel& m);
CeModel ce_model_from(const std::vector<NamedTensor>& tensors);
MaeModel mae_model_from(const std::vector<NamedTensor>& tensors, std::size_t patches, std::size_t d_k,
                        double alpha1, double alpha2);

void write_text(const std::string& path, const std::string& text);

}  // namespace radlab
