#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "daf/checkpoint.hpp"
#include "daf/commands.hpp"
#include "daf/error.hpp"

namespace daf::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const std::vector<std::string>& table_columns() {
  static const std::vector<std::string> cols = {"Modality", "Embedding", "Accuracy", "F1-score", "MAE",
                                                "7-Class Acc. (%)"};
  return cols;
}

namespace {

struct Stat {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

Stat summarize(const std::vector<double>& v) {
  Stat s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string cell_text(const Stat& s, const char* f) {
  if (s.n == 0) return "n/a";
  char buf[96];
  std::snprintf(buf, sizeof(buf), f, s.mean);
  std::string out = buf;
  if (s.n > 1) {
    std::snprintf(buf, sizeof(buf), f, s.std);
    out += std::string(" ± ") + buf;
  }
  return out;
}

std::string row_label(const ModalitySet& m, GateKind fusion) {
  std::string s = "Text";
  if (!m.audio && !m.video) {
    s += " only";
  } else {
    if (m.audio) s += " + Audio";
    if (m.video) s += " + Video";
  }
  switch (fusion) {
    case GateKind::kSoftmax3: s += " (Dynamic Fusion)"; break;
    case GateKind::kSigmoid2: s += " (Sigmoid Gate)"; break;
    case GateKind::kStaticConcat: s += " (Static Fusion)"; break;
  }
  return s;
}

std::string embedding_label(const ModalitySet& m, const EmbeddingNames& e) {
  std::string s = e.text;
  if (m.audio) s += " + " + e.audio;
  if (m.video) s += " + " + e.video;
  return s;
}

struct CellStats {
  Stat acc2, f1, mae, acc7_pct, cc, auc, gate;
};

CellStats cell_stats(const AblationCell& c) {
  std::vector<double> acc2, f1, mae, acc7, cc, auc, gate;
  for (const auto& r : c.runs) {
    const auto& m = r.test_metrics;
    if (m.acc2) acc2.push_back(*m.acc2);
    if (m.f1) f1.push_back(*m.f1);
    mae.push_back(m.mae);
    acc7.push_back(100.0 * m.acc7);
    if (m.cc) cc.push_back(*m.cc);
    if (m.auc) auc.push_back(*m.auc);
    if (r.informative_gate_mean) gate.push_back(*r.informative_gate_mean);
  }
  return {summarize(acc2), summarize(f1), summarize(mae), summarize(acc7),
          summarize(cc),   summarize(auc), summarize(gate)};
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

}  // namespace

AblationResult cmd_ablate(const RunConfig& cfg) {
  if (cfg.ablate_rows.empty() || cfg.ablate_fusions.empty()) {
    throw ConfigError("ablation matrix is empty: give at least one modality row and one fusion variant");
  }
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig base = cfg;
  base.modalities = ModalitySet{true, true};
  const Dataset full = load_data(base);

  AblationResult result;
  for (const auto& row : cfg.ablate_rows) {
    for (GateKind f : cfg.ablate_fusions) result.cells.push_back({row, f, {}, {}});
  }

  // Worker pool: each task is one cell; cells share only read-only data.
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < result.cells.size(); i = next++) {
      AblationCell& cell = result.cells[i];
      try {
        Dataset data = full;
        for (Split* s : {&data.train, &data.val, &data.test}) {
          if (!cell.modalities.audio) *s = drop_modality(*s, Modality::kAudio);
          if (!cell.modalities.video) *s = drop_modality(*s, Modality::kVideo);
        }
        RunConfig rc = cfg;
        rc.modalities = cell.modalities;
        rc.model.gate = cell.fusion;
        for (std::uint64_t seed : cfg.seeds) {
          const auto s0 = std::chrono::steady_clock::now();
          ModelConfig mcfg = model_config_for(rc, data.dims, cell.modalities, seed);
          Model model(mcfg);
          TrainConfig tcfg = rc.train;
          tcfg.seed = seed;
          SeedRun run;
          run.seed = seed;
          run.fit = fit(model, data.train, data.val, data.dims, tcfg);
          const auto preds = evaluate(model, data.test, data.dims, tcfg.collate);
          std::vector<double> yhat, y;
          for (const auto& p : preds) {
            yhat.push_back(p.predicted);
            y.push_back(p.label);
          }
          if (preds.empty()) throw DataError("test split is empty");
          run.test_metrics = full_report(yhat, y);
          run.informative_gate_mean = informative_gate_mean(model, data.test, data.dims, tcfg.collate);
          run.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
          cell.runs.push_back(std::move(run));
        }
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  std::size_t jobs = cfg.jobs ? cfg.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, result.cells.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
  }

  // Ablation table outputs.
  const auto& cols = table_columns();
  std::ostringstream md, csv;
  md << '|';
  for (const auto& c : cols) md << ' ' << c << " |";
  md << "\n|";
  for (std::size_t i = 0; i < cols.size(); ++i) md << (i < 2 ? ":---|" : "---:|");
  md << '\n';
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << csv_escape(cols[i]);
  csv << ",Accuracy std,F1-score std,MAE std,7-Class Acc. (%) std,seeds,status\n";

  for (const auto& cell : result.cells) {
    const std::string label = row_label(cell.modalities, cell.fusion);
    const std::string emb = embedding_label(cell.modalities, full.embeddings);
    if (!cell.error.empty()) {
      md << "| " << label << " | " << emb << " | FAILED | FAILED | FAILED | FAILED |\n";
      csv << csv_escape(label) << ',' << csv_escape(emb) << ",,,,,,,,,0," << csv_escape("failed: " + cell.error)
          << '\n';
      continue;
    }
    const CellStats s = cell_stats(cell);
    md << "| " << label << " | " << emb << " | " << cell_text(s.acc2, "%.3f") << " | " << cell_text(s.f1, "%.3f")
       << " | " << cell_text(s.mae, "%.3f") << " | " << cell_text(s.acc7_pct, "%.2f") << " |\n";
    char buf[512];
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%.4f,%.6f,%.6f,%.6f,%.4f,%zu,ok\n", s.acc2.mean, s.f1.mean,
                  s.mae.mean, s.acc7_pct.mean, s.acc2.std, s.f1.std, s.mae.std, s.acc7_pct.std, cell.runs.size());
    csv << csv_escape(label) << ',' << csv_escape(emb) << buf;
  }
  result.table_markdown = md.str();
  result.table_csv = csv.str();

  // Static-vs-dynamic summary for every modality row that has both.
  std::ostringstream cmp;
  cmp << "| Modality | Metric | Static Fusion | Dynamic Fusion | Dynamic better |\n|:---|:---|---:|---:|:---:|\n";
  bool any = false;
  for (const auto& row : cfg.ablate_rows) {
    const AblationCell* dyn = nullptr;
    const AblationCell* sta = nullptr;
    for (const auto& c : result.cells) {
      if (c.modalities != row || !c.error.empty()) continue;
      if (c.fusion == GateKind::kSoftmax3) dyn = &c;
      if (c.fusion == GateKind::kStaticConcat) sta = &c;
    }
    if (!dyn || !sta) continue;
    any = true;
    const CellStats d = cell_stats(*dyn);
    const CellStats s = cell_stats(*sta);
    std::string name = row_label(row, GateKind::kSoftmax3);
    name = name.substr(0, name.find(" ("));
    auto line = [&](const char* metric, const Stat& sv, const Stat& dv, bool higher_better, const char* f) {
      const bool better = sv.n && dv.n && (higher_better ? dv.mean > sv.mean : dv.mean < sv.mean);
      cmp << "| " << name << " | " << metric << " | " << cell_text(sv, f) << " | " << cell_text(dv, f) << " | "
          << (sv.n && dv.n ? (better ? "yes" : "no") : "n/a") << " |\n";
    };
    line("Accuracy", s.acc2, d.acc2, true, "%.3f");
    line("F1-score", s.f1, d.f1, true, "%.3f");
    line("MAE", s.mae, d.mae, false, "%.3f");
    line("7-Class Acc. (%)", s.acc7_pct, d.acc7_pct, true, "%.2f");
    line("CC", s.cc, d.cc, true, "%.3f");
    line("ROC-AUC", s.auc, d.auc, true, "%.3f");
    if (d.gate.n) {
      cmp << "| " << name << " | Gate weight on informative modality | n/a | " << cell_text(d.gate, "%.3f")
          << " | n/a |\n";
    }
  }
  result.comparison_markdown = any ? cmp.str() : "No modality row has both static and dynamic fusion cells.\n";

  // Single writer for the run directory.
  std::error_code ec;
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("output directory " + dir.string() + " is not writable: " + ec.message());
  const std::string stamp = "format_version=" + std::to_string(kRunFormatVersion);
  write_text(dir / "ablation.md", "<!-- daf ablation, " + stamp + ", config " + artifact_config(cfg).dump() + " -->\n\n" +
                                      result.table_markdown);
  write_text(dir / "ablation.csv", "# daf ablation, " + stamp + "\n# config " + artifact_config(cfg).dump() + "\n" +
                                       result.table_csv);
  write_text(dir / "comparison.md", "<!-- daf static-vs-dynamic, " + stamp + " -->\n\n" + result.comparison_markdown);
  for (const auto& cell : result.cells) {
    const fs::path cdir = dir / "cells" / (modality_set_name(cell.modalities) + "-" + std::string(gate_kind_name(cell.fusion)));
    fs::create_directories(cdir, ec);
    for (const auto& r : cell.runs) {
      std::ostringstream h;
      write_history_csv(h, r.fit, {"daf training history, " + stamp});
      write_text(cdir / ("history-seed-" + std::to_string(r.seed) + ".csv"), h.str());
    }
  }

  ojson record;
  record["format"] = "daf-run";
  record["format_version"] = kRunFormatVersion;
  record["command"] = "ablate";
  record["config"] = to_json(cfg);
  record["cells"] = ojson::array();
  for (const auto& cell : result.cells) {
    ojson c;
    c["modalities"] = modality_set_name(cell.modalities);
    c["fusion"] = gate_kind_name(cell.fusion);
    c["error"] = cell.error;
    c["runs"] = ojson::array();
    for (const auto& r : cell.runs) {
      c["runs"].push_back({{"seed", r.seed},
                           {"best_epoch", r.fit.best_epoch},
                           {"epochs_run", r.fit.history.size()},
                           {"test_metrics", to_json(r.test_metrics)},
                           {"informative_gate_mean",
                            r.informative_gate_mean ? ojson(*r.informative_gate_mean) : ojson(nullptr)},
                           {"wall_clock_s", r.wall_clock_s}});
    }
    record["cells"].push_back(std::move(c));
  }
  record["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(dir / "run.json", record.dump(2) + "\n");
  return result;
}

}  // namespace daf::cli
