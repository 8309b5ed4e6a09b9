#include "daf/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "daf/checkpoint.hpp"
#include "daf/error.hpp"

namespace daf::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed for " + path.string());
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("output directory " + dir.string() + " is not writable: " + ec.message());
  return dir;
}

std::vector<double> predicted_of(const std::vector<Prediction>& p) {
  std::vector<double> out;
  for (const auto& x : p) out.push_back(x.predicted);
  return out;
}

std::vector<double> labels_of(const std::vector<Prediction>& p) {
  std::vector<double> out;
  for (const auto& x : p) out.push_back(x.label);
  return out;
}

Dataset with_modalities(Dataset data, const ModalitySet& keep) {
  for (Split* s : {&data.train, &data.val, &data.test}) {
    if (!keep.audio) *s = drop_modality(*s, Modality::kAudio);
    if (!keep.video) *s = drop_modality(*s, Modality::kVideo);
  }
  return data;
}

Dataset load_raw(const RunConfig& cfg) {
  if (!cfg.data_path.empty()) return load_dataset(cfg.data_path);
  return gen_synthetic(cfg.synthetic).data;
}

ojson history_json(const FitResult& fit) {
  ojson arr = ojson::array();
  for (const auto& r : fit.history) {
    arr.push_back({{"epoch", r.epoch},
                   {"train_mse", r.train_mse},
                   {"val_mse", r.val_mse},
                   {"val_mae", r.val_mae},
                   {"grad_norm_mean", r.grad_norm_mean}});
  }
  return arr;
}

ojson seed_run_json(const SeedRun& run, bool with_history) {
  ojson j;
  j["seed"] = run.seed;
  j["best_epoch"] = run.fit.best_epoch;
  j["best_val_mse"] = run.fit.best_val_mse;
  j["epochs_run"] = run.fit.history.size();
  j["stopped_early"] = run.fit.stopped_early;
  j["test_metrics"] = to_json(run.test_metrics);
  j["informative_gate_mean"] = run.informative_gate_mean ? ojson(*run.informative_gate_mean) : ojson(nullptr);
  j["wall_clock_s"] = run.wall_clock_s;
  if (with_history) j["history"] = history_json(run.fit);
  return j;
}

ojson data_json(const Dataset& d) {
  return {{"dims", {d.dims.text, d.dims.audio, d.dims.video}},
          {"n_train", d.train.samples.size()},
          {"n_val", d.val.samples.size()},
          {"n_test", d.test.samples.size()},
          {"dropped", d.dropped}};
}

TrainConfig train_config_for(const RunConfig& cfg, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.seed = seed;
  return t;
}

// One seed of one configuration: fit, then score the test split.
SeedRun run_seed(const RunConfig& cfg, const Dataset& data, const ModalitySet& modalities, std::uint64_t seed,
                 std::optional<GateKind> fusion = std::nullopt) {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig mcfg = model_config_for(cfg, data.dims, modalities, seed);
  if (fusion) mcfg.gate = *fusion;
  Model model(mcfg);
  SeedRun run;
  run.seed = seed;
  const TrainConfig tcfg = train_config_for(cfg, seed);
  run.fit = fit(model, data.train, data.val, data.dims, tcfg);
  const auto preds = evaluate(model, data.test, data.dims, tcfg.collate);
  if (!preds.empty()) run.test_metrics = full_report(predicted_of(preds), labels_of(preds));
  run.informative_gate_mean = informative_gate_mean(model, data.test, data.dims, tcfg.collate);
  run.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

Dataset load_data(const RunConfig& cfg) { return with_modalities(load_raw(cfg), cfg.modalities); }

ModelConfig model_config_for(const RunConfig& cfg, const Dims& dims, const ModalitySet& modalities,
                             std::uint64_t seed) {
  ModelConfig m = cfg.model;
  m.dims = dims;
  m.seed = seed;
  m.modalities = cfg.train.collate.missing == MissingPolicy::kReduceGate ? modalities : ModalitySet{true, true};
  return m;
}

std::optional<double> informative_gate_mean(const Model& model, const Split& split, const Dims& dims,
                                            const CollateOptions& options) {
  const auto& mc = model.config();
  if (mc.gate != GateKind::kSoftmax3 || split.samples.empty()) return std::nullopt;
  // Gate columns are [text, audio?, video?].
  int column[3] = {0, -1, -1};
  int next = 1;
  if (mc.modalities.audio) column[1] = next++;
  if (mc.modalities.video) column[2] = next++;
  if (!split.modalities.audio) column[1] = -1;
  if (!split.modalities.video) column[2] = -1;

  double total = 0.0;
  std::size_t n = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.samples.size(); start += 64) {
    const std::size_t end = std::min(split.samples.size(), start + 64);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const Batch batch = collate(split, idx, dims, options);
    const ForwardTrace tr = model.forward(batch, Mode::kEval);
    const std::size_t k = tr.gate->dim(1);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& u = split.samples[start + b];
      if (!u.informative) continue;
      const int col = column[static_cast<int>(*u.informative)];
      if (col < 0) continue;
      total += (*tr.gate)[b * k + static_cast<std::size_t>(col)];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// train

std::vector<SeedRun> cmd_train(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = load_data(cfg);
  const fs::path root = ensure_dir(cfg.out_dir);
  std::vector<SeedRun> runs;
  ojson record;
  record["format"] = "daf-run";
  record["format_version"] = kRunFormatVersion;
  record["command"] = "train";
  record["config"] = to_json(cfg);
  record["data"] = data_json(data);
  record["runs"] = ojson::array();

  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = cfg.seeds.size() == 1 ? root : ensure_dir(root / ("seed-" + std::to_string(seed)));
    SeedRun run = run_seed(cfg, data, cfg.modalities, seed);
    const ModelConfig mcfg = model_config_for(cfg, data.dims, cfg.modalities, seed);
    ojson resolved = artifact_config(cfg);
    resolved["model"] = to_json(mcfg);
    resolved["train"] = to_json(train_config_for(cfg, seed));

    ojson meta;
    meta["run_format_version"] = kRunFormatVersion;
    meta["train"] = resolved["train"];
    meta["best_epoch"] = run.fit.best_epoch;
    meta["best_val_mse"] = run.fit.best_val_mse;
    save_checkpoint(dir / "checkpoint.bin", Model(mcfg, run.fit.best_params), meta);

    std::ostringstream csv;
    write_history_csv(csv, run.fit,
                      {"daf training history, format_version=" + std::to_string(kRunFormatVersion),
                       "config " + resolved.dump()});
    write_text(dir / "history.csv", csv.str());

    ojson seed_record = record;
    seed_record["config"] = resolved;
    seed_record["runs"] = ojson::array({seed_run_json(run, true)});
    if (cfg.seeds.size() > 1) write_text(dir / "run.json", seed_record.dump(2) + "\n");
    record["runs"].push_back(seed_run_json(run, true));
    runs.push_back(std::move(run));
  }
  record["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(root / "run.json", record.dump(2) + "\n");
  return runs;
}

// ---------------------------------------------------------------------------
// evaluate

EvaluateOutput cmd_evaluate(const fs::path& checkpoint, const RunConfig& cfg) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset data = load_data(cfg);
  if (data.dims != ck.model.config().dims) throw DataError("dataset dims do not match the checkpoint");
  const Split& split = data.split(cfg.split);
  EvaluateOutput out;
  out.predictions = evaluate(ck.model, split, data.dims, cfg.train.collate);
  if (out.predictions.empty()) throw DataError("split '" + cfg.split + "' is empty");
  out.metrics = full_report(predicted_of(out.predictions), labels_of(out.predictions));

  const fs::path dir = ensure_dir(cfg.out_dir);
  std::string csv = "id,predicted,label\n";
  char buf[160];
  for (const auto& p : out.predictions) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", p.predicted, p.label);
    csv += p.id + buf;
  }
  write_text(dir / "predictions.csv", csv);
  ojson j;
  j["format"] = "daf-metrics";
  j["format_version"] = kRunFormatVersion;
  j["config"] = to_json(cfg);
  j["model"] = to_json(ck.model.config());
  j["split"] = cfg.split;
  j["metrics"] = to_json(out.metrics);
  write_text(dir / "metrics.json", j.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// roc

std::string roc_svg(const RocResult& roc, const std::string& title) {
  constexpr double kSize = 360.0, kMargin = 50.0;
  auto x = [&](double f) { return kMargin + f * kSize; };
  auto y = [&](double f) { return kMargin + (1.0 - f) * kSize; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"460\" height=\"460\" viewBox=\"0 0 460 460\">\n";
  os << "<rect width=\"460\" height=\"460\" fill=\"white\"/>\n";
  os << "<text x=\"230\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" << title
     << "</text>\n";
  os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x(0) << "\" y1=\"" << y(0) << "\" x2=\"" << x(1) << "\" y2=\"" << y(1)
     << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < roc.points.size(); ++i) {
    if (i) os << ' ';
    os << fmt("%.2f", x(roc.points[i].fpr)) << ',' << fmt("%.2f", y(roc.points[i].tpr));
  }
  os << "\"/>\n";
  os << "<text x=\"230\" y=\"440\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        "False positive rate</text>\n";
  os << "<text x=\"16\" y=\"230\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        "transform=\"rotate(-90 16 230)\">True positive rate</text>\n";
  os << "</svg>\n";
  return os.str();
}

RocOutput cmd_roc(const fs::path& checkpoint, const RunConfig& cfg, bool write_svg) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset data = load_data(cfg);
  if (data.dims != ck.model.config().dims) throw DataError("dataset dims do not match the checkpoint");
  const auto preds = evaluate(ck.model, data.split(cfg.split), data.dims, cfg.train.collate);
  if (preds.empty()) throw DataError("split '" + cfg.split + "' is empty");
  RocOutput out;
  out.roc = roc_auc(predicted_of(preds), labels_of(preds));
  out.csv = "# daf roc, format_version=" + std::to_string(kRunFormatVersion) + "\n# config " + artifact_config(cfg).dump() +
            "\n" + roc_csv(out.roc.points);
  const fs::path dir = ensure_dir(cfg.out_dir);
  write_text(dir / "roc.csv", out.csv);
  if (write_svg) {
    out.svg = roc_svg(out.roc, "ROC curve (AUC = " + fmt("%.3f", out.roc.auc) + ")");
    write_text(dir / "roc.svg", out.svg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// gradcheck

GradcheckOutput cmd_gradcheck(const GradcheckConfig& cfg) {
  GradcheckOutput out;
  std::ostringstream text;
  std::optional<ScopedGradFault> fault;
  if (!cfg.fault_op.empty()) fault.emplace(cfg.fault_op, cfg.fault_factor);

  for (GateKind fusion : cfg.fusions) {
    for (std::uint64_t seed : cfg.seeds) {
      for (std::size_t len : cfg.lengths) {
        ModelConfig mc = cfg.model;
        mc.gate = fusion;
        mc.input_dropout = 0.0;
        mc.seed = seed;
        Model model(mc);
        // Biases start at zero; give them random values so their gradients
        // are exercised away from the initial point.
        Rng rng(derive_seed(seed, 7));
        for (auto& p : model.params().named()) {
          if (p.value.rank() == 1) {
            for (double& v : p.value.data()) v = rng.uniform(-0.5, 0.5);
          }
        }
        std::vector<Utterance> samples(cfg.batch_size);
        for (std::size_t b = 0; b < samples.size(); ++b) {
          auto& u = samples[b];
          u.id = "g" + std::to_string(b);
          u.label = rng.uniform(-3.0, 3.0);
          u.text.resize(mc.dims.text);
          for (double& v : u.text) v = rng.normal();
          const std::size_t frames = b == 0 ? len : std::max<std::size_t>(1, (len + 1) / 2);
          for (auto [seq, width] : {std::pair{&u.audio, mc.dims.audio}, std::pair{&u.video, mc.dims.video}}) {
            seq->frames = frames;
            seq->width = width;
            seq->values.resize(frames * width);
            for (double& v : seq->values) v = rng.normal();
          }
        }
        std::vector<const Utterance*> ptrs;
        for (const auto& u : samples) ptrs.push_back(&u);
        const Batch batch = collate(ptrs, ModalitySet{}, mc.dims, CollateOptions{false, MissingPolicy::kReduceGate});
        auto loss_fn = [&]() { return mse_loss(model.forward(batch, Mode::kEval).prediction, batch.labels); };
        GradCheckOptions opts = cfg.options;
        opts.seed = derive_seed(seed, len);
        GradcheckCase c{fusion, seed, len, grad_check(loss_fn, model.params().named(), opts)};

        text << gate_kind_name(fusion) << " seed=" << seed << " T=" << len << ": "
             << (c.report.passed ? "PASS" : "FAIL") << '\n';
        for (const auto& p : c.report.params) {
          text << "  " << (p.passed ? "ok  " : "FAIL") << ' ' << p.name << " max_rel_err=" << fmt("%.3e", p.max_rel_error)
               << " checked=" << p.checked;
          if (p.skipped_kinks) text << " kinks_skipped=" << p.skipped_kinks;
          if (!p.passed) {
            text << " worst[" << p.worst_index << "] analytic=" << fmt("%.9e", p.worst_analytic)
                 << " numeric=" << fmt("%.9e", p.worst_numeric);
          }
          text << '\n';
        }
        out.passed = out.passed && c.report.passed;
        out.cases.push_back(std::move(c));
      }
    }
  }
  if (!out.passed) {
    std::vector<std::string> names;
    for (const auto& c : out.cases) {
      for (const auto& n : c.report.offenders()) {
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
      }
    }
    text << "FAILED parameters:";
    for (const auto& n : names) text << ' ' << n;
    text << '\n';
  } else {
    text << "all parameters within tolerance " << fmt("%.1e", cfg.options.tolerance) << '\n';
  }
  out.text = text.str();
  return out;
}

// ---------------------------------------------------------------------------
// gen-synth

std::string cmd_gen_synth(const SyntheticSpec& spec, const fs::path& out, Encoding encoding) {
  const SyntheticDataset syn = gen_synthetic(spec);
  save_dataset(syn.data, out, encoding);
  std::size_t counts[3] = {0, 0, 0};
  for (const Split* s : {&syn.data.train, &syn.data.val, &syn.data.test}) {
    for (const auto& u : s->samples) ++counts[static_cast<int>(*u.informative)];
  }
  std::ostringstream os;
  os << "wrote " << out.string() << ": train=" << syn.data.train.samples.size()
     << " val=" << syn.data.val.samples.size() << " test=" << syn.data.test.samples.size() << '\n';
  os << "informative modality counts: text=" << counts[0] << " audio=" << counts[1] << " video=" << counts[2]
     << " (target probabilities " << fmt("%.3f", spec.modality_probs[0]) << '/' << fmt("%.3f", spec.modality_probs[1])
     << '/' << fmt("%.3f", spec.modality_probs[2]) << ")\n";
  os << "noise_std=" << fmt("%g", spec.noise_std) << " frames=[" << spec.min_frames << ", " << spec.max_frames
     << "] seed=" << spec.seed << '\n';
  return os.str();
}

}  // namespace daf::cli
