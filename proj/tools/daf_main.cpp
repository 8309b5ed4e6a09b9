// daf: command-line front end.
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "daf/commands.hpp"
#include "daf/error.hpp"

namespace {

using namespace daf;
using namespace daf::cli;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string seed, seeds, out, modalities, fusion, missing_policy, l2_norm, lr, epochs, data;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value config file");
  app->add_option("--set", c.sets, "override one setting, key=value (repeatable)");
  app->add_option("--seed", c.seed, "single seed");
  app->add_option("--seeds", c.seeds, "comma-separated seeds");
  app->add_option("--out", c.out, "run directory");
  app->add_option("--modalities", c.modalities, "t, ta, tv, tav (or text,audio,video)");
  app->add_option("--fusion", c.fusion, "softmax3 | sigmoid2 | static");
  app->add_option("--missing-policy", c.missing_policy, "reduce_gate | zero_input");
  app->add_option("--l2-norm", c.l2_norm, "on | off");
  app->add_option("--lr", c.lr, "learning rate");
  app->add_option("--epochs", c.epochs, "maximum epochs");
  app->add_option("--data", c.data, "dataset directory (omit for synthetic data)");
}

RunConfig resolve(const Common& c) {
  Settings s;
  if (!c.config.empty()) s = read_config_file(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    s[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) s[key] = v;
  };
  put("run.seeds", c.seed);
  put("run.seeds", c.seeds);
  put("run.out", c.out);
  put("run.modalities", c.modalities);
  put("model.fusion", c.fusion);
  put("run.missing_policy", c.missing_policy);
  put("data.l2_norm", c.l2_norm);
  put("train.lr", c.lr);
  put("train.epochs", c.epochs);
  put("data.path", c.data);
  return resolve_config(s);
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

void print_metrics(const MetricsReport& m) {
  std::printf("MAE %.4f  CC %s  Acc-7 %.4f  Acc-2 %s  F1 %s  AUC %s  (n=%zu, neutral excluded %zu)\n", m.mae,
              fmt_opt(m.cc).c_str(), m.acc7, fmt_opt(m.acc2).c_str(), fmt_opt(m.f1).c_str(),
              fmt_opt(m.auc).c_str(), m.n_total, m.n_neutral_excluded);
  for (const auto& u : m.unavailable) std::printf("  unavailable: %s\n", u.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic attention fusion for multimodal sentiment regression"};
  app.require_subcommand(1);

  Common train_c, eval_c, ablate_c, roc_c;
  std::string eval_ckpt, roc_ckpt, eval_split, roc_split;

  auto* train = app.add_subcommand("train", "train one model per seed");
  add_common(train, train_c);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on a split");
  add_common(evaluate_cmd, eval_c);
  evaluate_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint.bin")->required();
  evaluate_cmd->add_option("--split", eval_split, "train | val | test");

  auto* ablate = app.add_subcommand("ablate", "modality x fusion ablation matrix");
  add_common(ablate, ablate_c);
  std::string rows = "t;ta;tv;tav", fusions = "softmax3,static";
  std::size_t jobs = 0;
  ablate->add_option("--rows", rows, "semicolon-separated modality sets")->capture_default_str();
  ablate->add_option("--fusions", fusions, "comma-separated fusion variants")->capture_default_str();
  ablate->add_option("--jobs", jobs, "worker threads (0: all cores)");

  auto* roc = app.add_subcommand("roc", "ROC curve of a checkpoint");
  add_common(roc, roc_c);
  roc->add_option("--checkpoint", roc_ckpt, "checkpoint.bin")->required();
  roc->add_option("--split", roc_split, "train | val | test");
  bool no_svg = false;
  roc->add_flag("--no-svg", no_svg, "write roc.csv only");

  GradcheckConfig gc;
  gc.model.dims = Dims{12, 6, 5};
  gc.model.d_attn = 8;
  gc.model.d_hidden = 8;
  gc.model.encoder_hidden = 4;
  std::string gc_seeds, gc_lengths, gc_fusion, gc_fault;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
  gradcheck->add_option("--seeds", gc_seeds, "comma-separated seeds (default 0..4)");
  gradcheck->add_option("--lengths", gc_lengths, "comma-separated sequence lengths (default 1,3,7)");
  gradcheck->add_option("--fusion", gc_fusion, "check one fusion variant only");
  gradcheck->add_option("--tol", gc.options.tolerance, "relative error tolerance")->capture_default_str();
  gradcheck->add_option("--step", gc.options.step, "central difference step")->capture_default_str();
  gradcheck->add_option("--max-coords", gc.options.max_coords_per_param, "coordinates per parameter (0: all)");
  gradcheck->add_option("--inject-fault", gc_fault, "scale this op's backward (testing the checker)");
  gradcheck->add_option("--fault-factor", gc.fault_factor, "scale applied by --inject-fault")->capture_default_str();

  SyntheticSpec spec;
  std::string gs_out, gs_probs, gs_split;
  bool gs_binary = false;
  auto* gen = app.add_subcommand("gen-synth", "write a synthetic dataset with a hidden informative modality");
  gen->add_option("--out", gs_out, "dataset directory")->required();
  gen->add_option("--n", spec.n_samples, "sample count")->capture_default_str();
  gen->add_option("--noise", spec.noise_std, "noise standard deviation")->capture_default_str();
  gen->add_option("--probs", gs_probs, "informative modality probabilities text,audio,video");
  gen->add_option("--split", gs_split, "train,val,test fractions");
  gen->add_option("--min-frames", spec.min_frames, "shortest sequence")->capture_default_str();
  gen->add_option("--max-frames", spec.max_frames, "longest sequence")->capture_default_str();
  gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  gen->add_flag("--binary", gs_binary, "binary record files instead of JSON lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (train->parsed()) {
      const RunConfig cfg = resolve(train_c);
      for (const auto& r : cmd_train(cfg)) {
        std::printf("seed %llu: best epoch %zu, val MSE %.6f, epochs run %zu%s\n",
                    static_cast<unsigned long long>(r.seed), r.fit.best_epoch, r.fit.best_val_mse,
                    r.fit.history.size(), r.fit.stopped_early ? " (early stop)" : "");
        print_metrics(r.test_metrics);
      }
      std::printf("run directory: %s\n", cfg.out_dir.c_str());
    } else if (evaluate_cmd->parsed()) {
      if (!eval_split.empty()) eval_c.sets.push_back("data.split=" + eval_split);
      const RunConfig cfg = resolve(eval_c);
      print_metrics(cmd_evaluate(eval_ckpt, cfg).metrics);
    } else if (ablate->parsed()) {
      ablate_c.sets.push_back("ablate.rows=" + rows);
      ablate_c.sets.push_back("ablate.fusions=" + fusions);
      ablate_c.sets.push_back("ablate.jobs=" + std::to_string(jobs));
      const RunConfig cfg = resolve(ablate_c);
      const auto res = cmd_ablate(cfg);
      std::cout << res.table_markdown << '\n' << res.comparison_markdown;
      for (const auto& c : res.cells) {
        if (!c.error.empty()) std::cerr << "cell failed: " << c.error << '\n';
      }
    } else if (roc->parsed()) {
      if (!roc_split.empty()) roc_c.sets.push_back("data.split=" + roc_split);
      const RunConfig cfg = resolve(roc_c);
      const auto out = cmd_roc(roc_ckpt, cfg, !no_svg);
      std::printf("AUC %.6f (positives %zu, negatives %zu, neutral excluded %zu)\n", out.roc.auc, out.roc.positives,
                  out.roc.negatives, out.roc.n_neutral_excluded);
    } else if (gradcheck->parsed()) {
      Settings s;
      if (!gc_seeds.empty()) s["run.seeds"] = gc_seeds;
      const RunConfig parsed = resolve_config(s);
      if (!gc_seeds.empty()) gc.seeds = parsed.seeds;
      if (!gc_lengths.empty()) {
        gc.lengths.clear();
        for (std::size_t p = 0; p < gc_lengths.size();) {
          const auto q = gc_lengths.find(',', p);
          const std::string tok = gc_lengths.substr(p, q == std::string::npos ? std::string::npos : q - p);
          try {
            gc.lengths.push_back(std::stoul(tok));
          } catch (const std::exception&) {
            throw ConfigError("--lengths: '" + tok + "' is not a length");
          }
          if (gc.lengths.back() == 0) throw ConfigError("--lengths: sequence length must be positive");
          p = q == std::string::npos ? gc_lengths.size() : q + 1;
        }
      }
      if (!gc_fusion.empty()) gc.fusions = {parse_gate_kind(gc_fusion)};
      gc.fault_op = gc_fault;
      const auto out = cmd_gradcheck(gc);
      std::cout << out.text;
      return out.passed ? kOk : kNumericError;
    } else if (gen->parsed()) {
      Settings s;
      if (!gs_probs.empty()) s["synth.probs"] = gs_probs;
      if (!gs_split.empty()) s["synth.split"] = gs_split;
      const RunConfig parsed = resolve_config(s);
      if (!gs_probs.empty()) spec.modality_probs = parsed.synthetic.modality_probs;
      if (!gs_split.empty()) spec.split_fractions = parsed.synthetic.split_fractions;
      std::cout << cmd_gen_synth(spec, gs_out, gs_binary ? Encoding::kBinary : Encoding::kJsonLines);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOk;
}
