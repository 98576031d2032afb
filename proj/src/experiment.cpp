#include "radlab/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>

#include "radlab/format.hpp"

namespace radlab {

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr std::uint64_t kEvalSeedOffset = 0x9e3779b97f4a7c15ULL;

std::vector<Matrix> as_samples(const Matrix& rows) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto r = rows.row(i);
    out.emplace_back(1, rows.cols(), std::vector<double>(r.begin(), r.end()));
  }
  return out;
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> idx;
  for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
  return idx;
}

template <class T>
std::vector<T> slice(const std::vector<T>& v, std::size_t lo, std::size_t hi) {
  return std::vector<T>(v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(hi));
}

template <class Model, class Data, class Downstream>
std::tuple<Model, std::vector<double>, SgdaTraces> pretrain_variant(const ExperimentConfig& cfg, Regularizer variant,
                                                       std::uint64_t seed, Model model, const Data& data,
                                                       const Downstream& down, const PretrainExtras& extras) {
  TrainConfig tc = cfg.pretrain;
  tc.seed = seed;
  if (variant != Regularizer::kRadReg) {
    auto res = pretrain(std::move(model), data, tc, extras);
    return {std::move(res.model), std::move(res.loss_trace), SgdaTraces{}};
  }
  std::size_t n = 0;
  if constexpr (std::is_same_v<Downstream, Matrix>) {
    n = down.rows();
  } else {
    n = down.size();
  }
  RadRegProblem<Model, Data, Downstream> prob(model, data, down, sample_rademacher(cfg.configs, n, 1, seed),
                                              tc.batch_size, cfg.downstream_batch, seed, extras);
  SgdaConfig sc;
  sc.eta = tc.learning_rate;
  sc.gamma = cfg.dual_step;
  sc.iterations = tc.iterations;
  sc.dual_radius = cfg.dual_radius;
  sc.project = cfg.project;
  sc.probe_every = 0;
  sc.seed = seed;
  auto res = radreg_train(prob, cfg.radreg_lambda, sc);
  for (double l : res.state.traces.loss) {
    if (!std::isfinite(l)) throw NumericalError("regularized pre-training diverged");
  }
  model.set_params(res.state.w);
  auto trace = res.state.traces.loss;
  return {std::move(model), std::move(trace), std::move(res.state.traces)};
}

}  // namespace

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::kNone: return "none";
    case Regularizer::kL2: return "l2";
    case Regularizer::kRadReg: return "radreg";
  }
  return "?";
}

Regularizer regularizer_from_string(const std::string& s) {
  if (s == "none") return Regularizer::kNone;
  if (s == "l2") return Regularizer::kL2;
  if (s == "radreg") return Regularizer::kRadReg;
  throw ValidationError("unknown variant '" + s + "' (expected none, l2 or radreg)");
}

void ExperimentConfig::validate() const {
  task.validate();
  if (width == 0 || depth == 0 || d_k == 0) throw ValidationError("experiment: width, depth, d_k must be positive");
  if (alpha1 < 0.0 || alpha2 < 0.0) throw ValidationError("experiment: alpha1, alpha2 must be non-negative");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw ValidationError("experiment: mask_ratio must lie in [0, 1]");
  if (variants.empty()) throw ValidationError("experiment: no variants selected");
  if (l2_lambda < 0.0 || radreg_lambda < 0.0) throw ValidationError("experiment: lambda must be non-negative");
  if (aux_weight < 0.0) throw ValidationError("experiment: aux_weight must be non-negative");
  if (configs == 0) throw ValidationError("experiment: configs (B) must be at least 1");
  if (dual_step < 0.0 || !(dual_radius > 0.0)) throw ValidationError("experiment: dual_step ≥ 0 and dual_radius > 0");
  if (!(head_radius > 0.0)) throw ValidationError("experiment: head radius must be positive");
  if (test_count == 0) throw ValidationError("experiment: test_count must be at least 1");
  if (rad_eval_configs == 0) throw ValidationError("experiment: rad_configs must be at least 1");
  if (seeds.empty()) throw ValidationError("experiment: no seeds");
  pretrain.validate();
  finetune.validate();
}

double ExperimentConfig::lambda_for(Regularizer r) const {
  switch (r) {
    case Regularizer::kNone: return 0.0;
    case Regularizer::kL2: return l2_lambda;
    case Regularizer::kRadReg: return radreg_lambda;
  }
  return 0.0;
}

ExperimentConfig experiment_config_from(const Config& c) {
  ExperimentConfig e;
  SynthConfig& t = e.task;
  t.pretrain_count = c.get_size("task.pretrain_count", t.pretrain_count);
  t.downstream_count = c.get_size("task.downstream_count", t.downstream_count);
  t.dim = c.get_size("task.dim", t.dim);
  t.patches = c.get_size("task.patches", t.patches);
  t.classes = c.get_size("task.classes", t.classes);
  t.c1_target = c.get_double("task.c1_target", t.c1_target);
  t.c2_target = c.get_double("task.c2_target", t.c2_target);
  t.margin = c.get_double("task.margin", t.margin);
  t.max_rescales = c.get_size("task.max_rescales", t.max_rescales);
  e.test_count = c.get_size("task.test_count", e.test_count);
  e.task_path = c.get_string("task.path", e.task_path);

  const std::string kind = c.get_string("model.encoder", "mlp");
  if (kind == "mlp") {
    e.encoder = EncoderKind::kMlp;
  } else if (kind == "transformer") {
    e.encoder = EncoderKind::kTransformer;
  } else {
    throw ConfigError("model.encoder must be mlp or transformer, got '" + kind + "'");
  }
  e.width = c.get_size("model.width", e.width);
  e.depth = c.get_size("model.depth", e.depth);
  t.depth_for_warning = e.depth;
  e.d_k = c.get_size("model.d_k", e.d_k);
  e.alpha1 = c.get_double("model.alpha1", e.alpha1);
  e.alpha2 = c.get_double("model.alpha2", e.alpha2);

  e.pretrain.learning_rate = c.get_double("pretrain.learning_rate", e.pretrain.learning_rate);
  e.pretrain.iterations = c.get_size("pretrain.iterations", e.pretrain.iterations);
  e.pretrain.batch_size = c.get_size("pretrain.batch_size", e.pretrain.batch_size);
  e.mask_ratio = c.get_double("pretrain.mask_ratio", e.mask_ratio);
  e.masked_only = c.get_bool("pretrain.masked_only", e.masked_only);
  e.aux_weight = c.get_double("pretrain.aux_weight", e.aux_weight);

  const std::string variant = c.get_string("regularizer.variant", "all");
  if (variant != "all") e.variants = {regularizer_from_string(variant)};
  e.l2_lambda = c.get_double("regularizer.l2_lambda", e.l2_lambda);
  e.radreg_lambda = c.get_double("regularizer.radreg_lambda", e.radreg_lambda);
  e.configs = c.get_size("regularizer.configs", e.configs);
  e.dual_step = c.get_double("regularizer.dual_step", e.dual_step);
  e.dual_radius = c.get_double("regularizer.dual_radius", e.dual_radius);
  e.project = c.get_bool("regularizer.project", e.project);
  e.downstream_batch = c.get_size("regularizer.downstream_batch", e.downstream_batch);

  e.finetune.learning_rate = c.get_double("finetune.learning_rate", e.finetune.learning_rate);
  e.finetune.iterations = c.get_size("finetune.iterations", e.finetune.iterations);
  e.finetune.batch_size = c.get_size("finetune.batch_size", e.finetune.batch_size);
  e.head_radius = c.get_double("finetune.radius", e.head_radius);
  e.weights_path = c.get_string("finetune.weights", e.weights_path);

  e.rad_eval_configs = c.get_size("eval.rad_configs", e.rad_eval_configs);
  e.seeds = c.get_u64s("run.seeds", e.seeds);
  e.out_dir = c.get_string("run.out", e.out_dir);
  c.reject_unknown();
  e.validate();
  return e;
}

SplitTask make_split_task(const ExperimentConfig& cfg, std::uint64_t seed) {
  SplitTask st;
  const std::size_t n = cfg.task.downstream_count;
  if (!cfg.task_path.empty()) {
    st.task = task_from_tensors(load_weights(cfg.task_path), cfg.task.patches);
  } else {
    SynthConfig sc = cfg.task;
    sc.seed = seed;
    sc.downstream_count = n + cfg.test_count;
    st.task = gen_synth(sc);
  }
  const std::size_t total = st.task.labels.rows();
  if (total <= n) {
    throw ValidationError("task has " + std::to_string(total) + " labeled points, need more than n = " +
                          std::to_string(n));
  }
  st.train_labels = gather_rows(st.task.labels, range(0, n));
  st.test_labels = gather_rows(st.task.labels, range(n, total));
  if (cfg.task.patches > 1) {
    st.train_patches = slice(st.task.downstream_patches, 0, n);
    st.test_patches = slice(st.task.downstream_patches, n, total);
  } else {
    st.train_x = gather_rows(st.task.downstream_x, range(0, n));
    st.test_x = gather_rows(st.task.downstream_x, range(n, total));
    if (cfg.encoder == EncoderKind::kTransformer) {
      st.train_patches = as_samples(st.train_x);
      st.test_patches = as_samples(st.test_x);
    }
  }
  return st;
}

TrainedEncoder pretrain_model(const ExperimentConfig& cfg, Regularizer variant, std::uint64_t seed,
                              const SplitTask& st) {
  const std::size_t d = cfg.task.dim;
  PretrainExtras extras;
  extras.l2_lambda = variant == Regularizer::kL2 ? cfg.l2_lambda : 0.0;
  extras.aux_weight = cfg.aux_weight;
  extras.masked_only = cfg.masked_only;
  Rng init(seed, "init");
  TrainedEncoder out;
  out.kind = cfg.encoder;
  if (cfg.encoder == EncoderKind::kMlp) {
    if (cfg.task.patches > 1) throw ValidationError("the mlp encoder needs flat data (task.patches = 1)");
    const CeData data = make_ce_data(st.task.pretrain_raw, MaskTransform{cfg.mask_ratio, 0.0, seed});
    const CeData aux = make_ce_data(st.train_x, MaskTransform{cfg.mask_ratio, 0.0, seed + 1});
    extras.aux_ce = &aux;
    CeModel model{init_mlp_encoder(d, cfg.width, cfg.depth, init),
                  gaussian_matrix(d, cfg.width, 1.0 / static_cast<double>(cfg.width), init)};
    auto [trained, trace, sgda] = pretrain_variant(cfg, variant, seed, std::move(model), data, st.train_x, extras);
    out.ce = std::move(trained);
    out.loss_trace = std::move(trace);
    out.sgda = std::move(sgda);
  } else {
    const std::size_t k = std::max<std::size_t>(cfg.task.patches, 1);
    const std::vector<Matrix> raw = cfg.task.patches > 1 ? st.task.pretrain_patches : as_samples(st.task.pretrain_raw);
    const MaeData data = make_mae_data(raw, MaskTransform{cfg.mask_ratio, 0.0, seed, MaskGranularity::kPatch});
    const MaeData aux =
        make_mae_data(st.train_patches, MaskTransform{cfg.mask_ratio, 0.0, seed + 1, MaskGranularity::kPatch});
    extras.aux_mae = &aux;
    MaeModel model{init_transformer(k, d, cfg.d_k, cfg.width, cfg.depth, cfg.alpha1, cfg.alpha2, init),
                   gaussian_matrix(d, d, 1.0 / static_cast<double>(d), init)};
    auto [trained, trace, sgda] = pretrain_variant(cfg, variant, seed, std::move(model), data, st.train_patches, extras);
    out.mae = std::move(trained);
    out.loss_trace = std::move(trace);
    out.sgda = std::move(sgda);
  }
  return out;
}

Scores evaluate_encoder(const ExperimentConfig& cfg, const TrainedEncoder& enc, const SplitTask& st,
                        std::uint64_t seed) {
  Matrix train_reps, test_reps;
  const auto signs = sample_rademacher(cfg.rad_eval_configs, st.train_labels.rows(), st.train_labels.cols(),
                                       seed ^ kEvalSeedOffset);
  Scores s;
  if (enc.kind == EncoderKind::kMlp) {
    train_reps = representations(enc.ce.encoder, st.train_x);
    test_reps = representations(enc.ce.encoder, st.test_x);
  } else {
    train_reps = representations(enc.mae.encoder, st.train_patches);
    test_reps = representations(enc.mae.encoder, st.test_patches);
  }
  s.rad_est = estimate_complexity(train_reps, signs, cfg.head_radius).mean;
  TrainConfig ft = cfg.finetune;
  ft.seed = seed;
  s.finetune = finetune_linear(train_reps, st.train_labels, ft, cfg.head_radius, &test_reps, &st.test_labels);
  s.final_acc = s.finetune.heldout_accuracy;
  s.best_acc = *std::max_element(s.finetune.heldout_accuracy_trace.begin(), s.finetune.heldout_accuracy_trace.end());
  s.train_acc = s.finetune.train_accuracy;
  return s;
}

RunRecord run_variant(const ExperimentConfig& cfg, Regularizer variant, std::uint64_t seed) {
  RunRecord rec;
  rec.variant = variant;
  rec.seed = seed;
  rec.lambda = cfg.lambda_for(variant);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.final_acc = rec.best_acc = rec.train_acc = rec.rad_est = nan;
  try {
    const SplitTask st = make_split_task(cfg, seed);
    const TrainedEncoder enc = pretrain_model(cfg, variant, seed, st);
    rec.loss_trace = enc.loss_trace;
    const Scores s = evaluate_encoder(cfg, enc, st, seed);
    rec.final_acc = s.final_acc;
    rec.best_acc = s.best_acc;
    rec.train_acc = s.train_acc;
    rec.rad_est = s.rad_est;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

ComparisonReport run_comparison(const ExperimentConfig& cfg) {
  cfg.validate();
  ComparisonReport report;
  for (Regularizer v : cfg.variants)
    for (std::uint64_t s : cfg.seeds) report.runs.push_back(run_variant(cfg, v, s));
  return report;
}

std::string comparison_csv(const ComparisonReport& report) {
  std::string out = "variant,lambda,final_acc,best_acc,train_acc,rad_est\n";
  auto row = [&](const std::string& name, const std::vector<double>& v) {
    out += name;
    for (double x : v) out += "," + format_double(x);
    out += "\n";
  };
  std::vector<Regularizer> order;
  for (const auto& r : report.runs) {
    row(to_string(r.variant), {r.lambda, r.final_acc, r.best_acc, r.train_acc, r.rad_est});
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  }
  for (Regularizer v : order) {
    std::vector<std::vector<double>> cols(5);
    double lambda = 0.0;
    for (const auto& r : report.runs) {
      if (r.variant != v) continue;
      lambda = r.lambda;
      if (!r.error.empty()) continue;
      const double vals[4] = {r.final_acc, r.best_acc, r.train_acc, r.rad_est};
      for (int k = 0; k < 4; ++k) cols[k].push_back(vals[k]);
    }
    std::vector<double> mean{lambda}, sd{lambda};
    for (int k = 0; k < 4; ++k) {
      const auto& c = cols[k];
      if (c.empty()) {
        mean.push_back(std::numeric_limits<double>::quiet_NaN());
        sd.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double m = 0.0;
      for (double x : c) m += x;
      m /= static_cast<double>(c.size());
      double ss = 0.0;
      for (double x : c) ss += (x - m) * (x - m);
      mean.push_back(m);
      sd.push_back(c.size() > 1 ? std::sqrt(ss / static_cast<double>(c.size() - 1)) : 0.0);
    }
    row(to_string(v) + ":mean", mean);
    row(to_string(v) + ":std", sd);
  }
  return out;
}

std::vector<CsvRow> parse_comparison_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "variant,lambda,final_acc,best_acc,train_acc,rad_est") {
    throw ValidationError("comparison csv: unexpected header");
  }
  std::vector<CsvRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    CsvRow r;
    std::getline(ls, r.variant, ',');
    while (std::getline(ls, field, ',')) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || end != field.c_str() + field.size()) {
        throw ValidationError("comparison csv line " + std::to_string(line_no) + ": bad number '" + field + "'");
      }
      r.values.push_back(v);
    }
    if (r.values.size() != 5) throw ValidationError("comparison csv line " + std::to_string(line_no) + ": need 6 fields");
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw ValidationError("write to '" + path + "' failed");
}

std::string manifest_json(const std::string& command, const Config& raw, const std::vector<std::uint64_t>& seeds) {
  nlohmann::ordered_json j;
  j["tool"] = "radlab";
  j["version"] = kVersion;
  j["compiler"] = __VERSION__;
  j["command"] = command;
  j["seeds"] = seeds;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : raw.entries()) config[k] = v;
  j["config"] = config;
  return j.dump(2) + "\n";
}

void write_comparison(const ExperimentConfig& cfg, const ComparisonReport& report, const Config& raw) {
  if (cfg.out_dir.empty()) throw ValidationError("experiment: no output directory (run.out or --out)");
  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path dir(cfg.out_dir);
  write_text((dir / "comparison.csv").string(), comparison_csv(report));
  for (const auto& r : report.runs) {
    std::string csv = "iteration,loss\n";
    for (std::size_t t = 0; t < r.loss_trace.size(); ++t) csv += std::to_string(t) + "," + format_double(r.loss_trace[t]) + "\n";
    write_text((dir / ("trace_" + to_string(r.variant) + "_" + std::to_string(r.seed) + ".csv")).string(), csv);
  }
  nlohmann::ordered_json errors = nlohmann::ordered_json::object();
  for (const auto& r : report.runs) {
    if (!r.error.empty()) errors[to_string(r.variant) + "/" + std::to_string(r.seed)] = r.error;
  }
  auto manifest = nlohmann::ordered_json::parse(manifest_json("experiment", raw, cfg.seeds));
  manifest["failures"] = errors;
  write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

std::vector<NamedTensor> task_tensors(const SynthTask& task) {
  std::vector<NamedTensor> out;
  if (!task.pretrain_patches.empty()) {
    out.push_back({"pretrain", vstack(task.pretrain_patches)});
    out.push_back({"downstream", vstack(task.downstream_patches)});
  } else {
    out.push_back({"pretrain", task.pretrain_raw});
    out.push_back({"downstream", task.downstream_x});
  }
  out.push_back({"labels", task.labels});
  out.push_back({"w_star", task.w_star});
  out.push_back({"separation", Matrix{{task.c1, task.c2}}});
  return out;
}

namespace {

std::vector<Matrix> unstack(const Matrix& m, std::size_t k) {
  if (k == 0 || m.rows() % k != 0) throw ValidationError("task container: rows not divisible by patch count");
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < m.rows(); i += k) out.push_back(gather_rows(m, range(i, i + k)));
  return out;
}

}  // namespace

SynthTask task_from_tensors(const std::vector<NamedTensor>& tensors, std::size_t patches) {
  SynthTask t;
  const Matrix& pre = tensor_named(tensors, "pretrain");
  const Matrix& down = tensor_named(tensors, "downstream");
  if (patches > 1) {
    t.pretrain_patches = unstack(pre, patches);
    t.downstream_patches = unstack(down, patches);
  } else {
    t.pretrain_raw = pre;
    t.downstream_x = down;
  }
  t.labels = tensor_named(tensors, "labels");
  t.w_star = tensor_named(tensors, "w_star");
  const Matrix& sep = tensor_named(tensors, "separation");
  if (sep.size() != 2) throw ParseError(0, "separation tensor must hold two values");
  t.c1 = sep.data()[0];
  t.c2 = sep.data()[1];
  const std::size_t n = patches > 1 ? t.downstream_patches.size() : t.downstream_x.rows();
  if (t.labels.rows() != n) throw ValidationError("task container: label count does not match downstream data");
  return t;
}

std::vector<NamedTensor> model_tensors(const CeModel& m) {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < m.encoder.layers.size(); ++l) out.push_back({"layer" + std::to_string(l), m.encoder.layers[l]});
  out.push_back({"decoder", m.decoder});
  return out;
}

std::vector<NamedTensor> model_tensors(const MaeModel& m) {
  static const char* names[5] = {"w_v", "w_k", "w_q", "w_fc1", "w_fc2"};
  std::vector<NamedTensor> out;
  const auto params = m.params();
  for (std::size_t p = 0; p + 1 < params.size(); ++p) {
    out.push_back({"layer" + std::to_string(p / 5) + "." + names[p % 5], params[p]});
  }
  out.push_back({"decoder", params.back()});
  return out;
}

CeModel ce_model_from(const std::vector<NamedTensor>& tensors) {
  CeModel m;
  for (const auto& t : tensors) {
    if (t.name == "decoder") continue;
    if (t.name.rfind("layer", 0) != 0) throw ParseError(0, "unexpected tensor '" + t.name + "' in an mlp container");
    m.encoder.layers.push_back(t.value);
  }
  m.decoder = tensor_named(tensors, "decoder");
  m.encoder.validate();
  return m;
}

MaeModel mae_model_from(const std::vector<NamedTensor>& tensors, std::size_t patches, std::size_t d_k,
                        double alpha1, double alpha2) {
  if (tensors.empty() || (tensors.size() - 1) % 5 != 0) {
    throw ParseError(0, "transformer container needs 5 tensors per layer plus a decoder");
  }
  MaeModel m;
  const std::size_t layers = (tensors.size() - 1) / 5;
  for (std::size_t l = 0; l < layers; ++l) {
    SaLayer s;
    s.w_v = tensors[5 * l].value;
    s.w_k = tensors[5 * l + 1].value;
    s.w_q = tensors[5 * l + 2].value;
    s.w_fc1 = tensors[5 * l + 3].value;
    s.w_fc2 = tensors[5 * l + 4].value;
    s.alpha1 = alpha1;
    s.alpha2 = alpha2;
    s.d_k = d_k;
    m.encoder.layers.push_back(std::move(s));
  }
  m.encoder.patch_count = patches;
  m.encoder.patch_dim = m.encoder.layers.empty() ? 0 : m.encoder.layers[0].model_dim();
  m.decoder = tensor_named(tensors, "decoder");
  m.encoder.validate();
  return m;
}

}  // namespace radlab
