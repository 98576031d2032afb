#include "radlab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <ostream>

#include "radlab/bounds.hpp"
#include "radlab/experiment.hpp"
#include "radlab/format.hpp"
#include "radlab/verify.hpp"
#include "radlab/weights.hpp"

namespace radlab {

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
  std::optional<double> lambda;
  std::optional<std::size_t> configs;
  bool masked_only = false;
  bool no_project = false;
  std::string rho_variant;
};

Config load_config(const Flags& f) {
  Config c = f.config.empty() ? Config::parse("", "<defaults>") : Config::load(f.config);
  if (f.seed) c.set("run.seeds", "[" + std::to_string(*f.seed) + ", " + std::to_string(*f.seed + 1) + ", " +
                                     std::to_string(*f.seed + 2) + "]");
  if (!f.out.empty()) c.set("run.out", "\"" + f.out + "\"");
  if (!f.variant.empty()) c.set("regularizer.variant", f.variant);
  if (f.lambda) {
    c.set("regularizer.l2_lambda", format_double(*f.lambda));
    c.set("regularizer.radreg_lambda", format_double(*f.lambda));
  }
  if (f.configs) c.set("regularizer.configs", std::to_string(*f.configs));
  if (f.masked_only) c.set("pretrain.masked_only", "true");
  if (f.no_project) c.set("regularizer.project", "false");
  return c;
}

std::filesystem::path out_dir(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) throw ValidationError("no output directory (set run.out or pass --out)");
  std::filesystem::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

std::string trace_csv(const std::vector<double>& loss) {
  std::string csv = "iteration,loss\n";
  for (std::size_t t = 0; t < loss.size(); ++t) csv += std::to_string(t) + "," + format_double(loss[t]) + "\n";
  return csv;
}

void save_model(const std::filesystem::path& path, const TrainedEncoder& enc) {
  save_weights(path.string(), enc.kind == EncoderKind::kMlp ? model_tensors(enc.ce) : model_tensors(enc.mae));
}

Regularizer single_variant(const ExperimentConfig& cfg, const char* command) {
  if (cfg.variants.size() != 1) return Regularizer::kNone;
  if (cfg.variants[0] == Regularizer::kRadReg) {
    throw ValidationError(std::string(command) + ": use the radreg subcommand for the regularized variant");
  }
  return cfg.variants[0];
}

int cmd_pretrain(const Flags& f, std::ostream& out) {
  const Config raw = load_config(f);
  const ExperimentConfig cfg = experiment_config_from(raw);
  const Regularizer v = single_variant(cfg, "pretrain");
  const std::uint64_t seed = cfg.seeds.front();
  const auto dir = out_dir(cfg);
  const SplitTask st = make_split_task(cfg, seed);
  const TrainedEncoder enc = pretrain_model(cfg, v, seed, st);
  save_model(dir / "model.bin", enc);
  write_text((dir / "pretrain_trace.csv").string(), trace_csv(enc.loss_trace));
  write_text((dir / "manifest.json").string(), manifest_json("pretrain", raw, {seed}));
  out << "pretrain (" << to_string(v) << "): final loss " << format_double(enc.loss_trace.back()) << "\n";
  return 0;
}

int cmd_radreg(const Flags& f, std::ostream& out) {
  Config raw = load_config(f);
  raw.set("regularizer.variant", "radreg");
  const ExperimentConfig cfg = experiment_config_from(raw);
  const std::uint64_t seed = cfg.seeds.front();
  const auto dir = out_dir(cfg);
  const SplitTask st = make_split_task(cfg, seed);
  const TrainedEncoder enc = pretrain_model(cfg, Regularizer::kRadReg, seed, st);
  save_model(dir / "model.bin", enc);
  write_text((dir / "sgda.csv").string(), sgda_csv(enc.sgda));
  write_text((dir / "manifest.json").string(), manifest_json("radreg", raw, {seed}));
  out << "radreg (lambda " << format_double(cfg.radreg_lambda) << "): final loss "
      << format_double(enc.loss_trace.back()) << "\n";
  return 0;
}

int cmd_finetune(const Flags& f, std::ostream& out) {
  const Config raw = load_config(f);
  const ExperimentConfig cfg = experiment_config_from(raw);
  if (cfg.weights_path.empty()) throw ValidationError("finetune: set finetune.weights to a pre-trained model");
  const std::uint64_t seed = cfg.seeds.front();
  const auto dir = out_dir(cfg);
  const SplitTask st = make_split_task(cfg, seed);
  const auto tensors = load_weights(cfg.weights_path);
  TrainedEncoder enc;
  enc.kind = cfg.encoder;
  if (cfg.encoder == EncoderKind::kMlp) {
    enc.ce = ce_model_from(tensors);
  } else {
    enc.mae = mae_model_from(tensors, std::max<std::size_t>(cfg.task.patches, 1), cfg.d_k, cfg.alpha1, cfg.alpha2);
  }
  const Scores s = evaluate_encoder(cfg, enc, st, seed);
  std::string csv = "iteration,train_risk,test_risk,test_acc\n";
  for (std::size_t t = 0; t < s.finetune.train_risk.size(); ++t) {
    csv += std::to_string(t) + "," + format_double(s.finetune.train_risk[t]) + "," +
           format_double(s.finetune.heldout_risk[t]) + "," + format_double(s.finetune.heldout_accuracy_trace[t]) + "\n";
  }
  write_text((dir / "finetune.csv").string(), csv);
  nlohmann::ordered_json j;
  j["final_acc"] = s.final_acc;
  j["best_acc"] = s.best_acc;
  j["train_acc"] = s.train_acc;
  j["rad_est"] = s.rad_est;
  write_text((dir / "scores.json").string(), j.dump(2) + "\n");
  write_text((dir / "manifest.json").string(), manifest_json("finetune", raw, {seed}));
  out << j.dump(2) << "\n";
  return 0;
}

int cmd_experiment(const Flags& f, std::ostream& out, std::ostream& err) {
  const Config raw = load_config(f);
  const ExperimentConfig cfg = experiment_config_from(raw);
  const ComparisonReport report = run_comparison(cfg);
  write_comparison(cfg, report, raw);
  out << comparison_csv(report);
  std::size_t failed = 0;
  for (const auto& r : report.runs) {
    if (r.error.empty()) continue;
    ++failed;
    err << to_string(r.variant) << " seed " << r.seed << " failed: " << r.error << "\n";
  }
  return failed == report.runs.size() ? 2 : 0;
}

int cmd_gen_data(const Flags& f, std::ostream& out) {
  const Config raw = load_config(f);
  const ExperimentConfig cfg = experiment_config_from(raw);
  if (!cfg.task_path.empty()) throw ValidationError("gen-data: task.path must not be set");
  const std::uint64_t seed = cfg.seeds.front();
  const auto dir = out_dir(cfg);
  const SplitTask st = make_split_task(cfg, seed);
  save_weights((dir / "task.bin").string(), task_tensors(st.task));
  write_text((dir / "manifest.json").string(), manifest_json("gen-data", raw, {seed}));
  out << "c1 " << format_double(st.task.c1) << ", c2 " << format_double(st.task.c2) << "\n";
  for (const auto& w : st.task.warnings) out << "warning: " << w << "\n";
  return 0;
}

BoundParams bound_params_from(const Config& c, std::string& kind) {
  BoundParams p;
  kind = c.get_string("bounds.kind", "ce");
  if (kind != "ce" && kind != "mae") throw ConfigError("bounds.kind must be ce or mae, got '" + kind + "'");
  p.w_caps = c.get_doubles("bounds.w_caps", {});
  p.b_caps = c.get_doubles("bounds.b_caps", {});
  p.z_norm = c.get_double("bounds.z_norm", p.z_norm);
  p.x_norm = c.get_double("bounds.x_norm", p.x_norm);
  p.x_star = c.get_double("bounds.x_star", p.x_star);
  p.d = c.get_size("bounds.d", p.d);
  p.m = c.get_size("bounds.m", p.m);
  p.k = c.get_size("bounds.k", p.k);
  p.d_k = c.get_size("bounds.d_k", p.d_k);
  p.alpha1 = c.get_double("bounds.alpha1", p.alpha1);
  p.alpha2 = c.get_double("bounds.alpha2", p.alpha2);
  p.n = c.get_size("bounds.n", p.n);
  p.big_n = c.get_size("bounds.big_n", p.big_n);
  p.nu = c.get_double("bounds.nu", p.nu);
  p.h = c.get_double("bounds.h", p.h);
  p.b = c.get_double("bounds.b", p.b);
  p.g_phi = c.get_double("bounds.g_phi", p.g_phi);
  p.b_phi = c.get_double("bounds.b_phi", p.b_phi);
  p.radius = c.get_double("bounds.radius", p.radius);
  p.tv = c.get_double("bounds.tv", p.tv);
  p.c_beta = c.get_double("bounds.c_beta", p.c_beta);
  p.beta = c.get_double("bounds.beta", p.beta);
  const std::string variant = c.get_string("bounds.variant", "detailed");
  if (variant == "detailed") {
    p.variant = FormulaVariant::kDetailed;
  } else if (variant == "compact") {
    p.variant = FormulaVariant::kCompact;
  } else {
    throw ConfigError("bounds.variant must be detailed or compact, got '" + variant + "'");
  }
  c.reject_unknown();
  p.validate();
  return p;
}

int cmd_bounds(const Flags& f, std::ostream& out) {
  if (f.config.empty()) throw ValidationError("bounds: --config is required");
  Config raw = Config::load(f.config);
  if (!f.rho_variant.empty()) raw.set("bounds.variant", f.rho_variant);
  std::string kind;
  const BoundParams p = bound_params_from(raw, kind);
  const BoundDecomposition b = kind == "ce" ? ce_bound(p) : mae_bound(p);
  const std::string json = bound_json(b) + "\n";
  out << json;
  if (!f.out.empty()) {
    std::filesystem::create_directories(f.out);
    const std::filesystem::path dir(f.out);
    write_text((dir / "bounds.json").string(), json);
    write_text((dir / "manifest.json").string(), manifest_json("bounds", raw, {}));
  }
  return 0;
}

int cmd_verify(const Flags& f, std::ostream& out) {
  const auto results = run_property_suite(f.seed.value_or(0));
  std::size_t passed = 0;
  for (const auto& r : results) {
    out << r.name << ": " << r.passed << "/" << r.total << " passed (worst " << format_double(r.worst) << ")\n";
    if (r.ok()) ++passed;
  }
  out << "verify: " << passed << "/" << results.size() << " checks passed\n";
  return passed == results.size() ? 0 : 2;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"radlab: Rademacher-regularized pre-training experiments and bound evaluation", "radlab"};
  app.require_subcommand(1);
  Flags f;

  auto add_config = [&](CLI::App* s, bool required) {
    auto* o = s->add_option("--config", f.config, "config file");
    if (required) o->required();
  };
  auto add_run = [&](CLI::App* s) {
    s->add_option("--seed", f.seed, "base seed");
    s->add_option("--out", f.out, "output directory");
  };
  auto add_training = [&](CLI::App* s) {
    s->add_option("--lambda", f.lambda, "regularization weight");
    s->add_option("--B", f.configs, "number of Rademacher configurations");
    s->add_flag("--masked-only", f.masked_only, "reconstruction loss on masked entries only");
    s->add_flag("--no-project", f.no_project, "skip the dual projection");
  };

  auto* pre = app.add_subcommand("pretrain", "pre-train an encoder (none or l2 variant)");
  add_config(pre, false);
  add_run(pre);
  add_training(pre);
  pre->add_option("--variant", f.variant, "none or l2")->check(CLI::IsMember({"none", "l2"}));

  auto* ft = app.add_subcommand("finetune", "fit a linear head on a saved encoder");
  add_config(ft, true);
  add_run(ft);

  auto* rr = app.add_subcommand("radreg", "pre-train with the Rademacher regularizer");
  add_config(rr, false);
  add_run(rr);
  add_training(rr);

  auto* ex = app.add_subcommand("experiment", "compare none, l2 and radreg over seeds");
  add_config(ex, false);
  add_run(ex);
  add_training(ex);
  ex->add_option("--variant", f.variant, "restrict to one variant")->check(CLI::IsMember({"none", "l2", "radreg"}));

  auto* bd = app.add_subcommand("bounds", "evaluate a bound decomposition as JSON");
  add_config(bd, true);
  bd->add_option("--out", f.out, "output directory");
  bd->add_option("--rho-variant", f.rho_variant, "detailed or compact")->check(CLI::IsMember({"detailed", "compact"}));

  auto* vf = app.add_subcommand("verify", "run the property suite");
  vf->add_option("--seed", f.seed, "seed");

  auto* gd = app.add_subcommand("gen-data", "write a synthetic task container");
  add_config(gd, false);
  add_run(gd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (pre->parsed()) return cmd_pretrain(f, out);
    if (ft->parsed()) return cmd_finetune(f, out);
    if (rr->parsed()) return cmd_radreg(f, out);
    if (ex->parsed()) return cmd_experiment(f, out, err);
    if (bd->parsed()) return cmd_bounds(f, out);
    if (vf->parsed()) return cmd_verify(f, out);
    if (gd->parsed()) return cmd_gen_data(f, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace radlab
