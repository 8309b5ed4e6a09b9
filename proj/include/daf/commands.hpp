#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "daf/data.hpp"
#include "daf/metrics.hpp"
#include "daf/model.hpp"
#include "daf/training.hpp"

namespace daf::cli {

inline constexpr int kRunFormatVersion = 1;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

/// Maps an in-flight exception to the documented exit code.
int exit_code_for(const std::exception& e);

using Settings = std::map<std::string, std::string>;

/// Flat `key = value` text with `#` comments. A `[section]` line prefixes the
/// keys that follow with `section.`.
Settings parse_config_text(const std::string& text);
Settings read_config_file(const std::filesystem::path& path);

struct RunConfig {
  std::string data_path;  // empty: generate synthetic data from `synthetic`
  SyntheticSpec synthetic;
  ModelConfig model;
  TrainConfig train;
  ModalitySet modalities;
  std::string out_dir = "runs/latest";
  std::vector<std::uint64_t> seeds{0};

  // ablation matrix
  std::vector<ModalitySet> ablate_rows;
  std::vector<GateKind> ablate_fusions;
  std::size_t jobs = 0;  // 0: hardware concurrency

  std::string split = "test";  // evaluate / roc target split
};

/// Applies settings on top of defaults. Every invalid key or value is
/// reported in a single ConfigError.
RunConfig resolve_config(const Settings& settings);
nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Config recorded in artifact preambles: to_json without the output
/// location, so identical runs write identical files.
nlohmann::ordered_json artifact_config(const RunConfig& cfg);

/// Loads or generates the dataset and drops modalities outside cfg.modalities.
Dataset load_data(const RunConfig& cfg);

/// Model config for one seed, with data dims and modality policy applied.
ModelConfig model_config_for(const RunConfig& cfg, const Dims& dims, const ModalitySet& modalities,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  FitResult fit;
  MetricsReport test_metrics;
  std::optional<double> informative_gate_mean;  // synthetic data only
  double wall_clock_s = 0.0;
};

/// Mean gate weight given to each sample's annotated informative modality.
/// Empty when the model has no softmax gate or the split carries no annotations.
std::optional<double> informative_gate_mean(const Model& model, const Split& split, const Dims& dims,
                                            const CollateOptions& options);

/// Trains one model per seed; writes checkpoint.bin, history.csv and run.json
/// (per-seed subdirectories when more than one seed is given).
std::vector<SeedRun> cmd_train(const RunConfig& cfg);

struct EvaluateOutput {
  std::vector<Prediction> predictions;
  MetricsReport metrics;
};
EvaluateOutput cmd_evaluate(const std::filesystem::path& checkpoint, const RunConfig& cfg);

struct AblationCell {
  ModalitySet modalities;
  GateKind fusion = GateKind::kSoftmax3;
  std::vector<SeedRun> runs;
  std::string error;  // nonempty when the cell failed
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::string table_markdown;
  std::string table_csv;
  std::string comparison_markdown;
};

/// Trains and evaluates every (modality set, fusion) cell over all seeds and
/// writes ablation.csv, ablation.md, comparison.md and run.json.
AblationResult cmd_ablate(const RunConfig& cfg);

/// Ablation table column headers, in order.
const std::vector<std::string>& table_columns();

struct RocOutput {
  RocResult roc;
  std::string csv;
  std::string svg;
};
RocOutput cmd_roc(const std::filesystem::path& checkpoint, const RunConfig& cfg, bool write_svg = true);
std::string roc_svg(const RocResult& roc, const std::string& title);

struct GradcheckConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::size_t> lengths{1, 3, 7};
  std::vector<GateKind> fusions{GateKind::kSoftmax3, GateKind::kSigmoid2, GateKind::kStaticConcat};
  ModelConfig model;  // dropout is forced to 0
  GradCheckOptions options{};
  std::size_t batch_size = 2;
  std::string fault_op;  // nonempty: corrupt this op's backward by fault_factor
  double fault_factor = 1.5;
};

struct GradcheckCase {
  GateKind fusion;
  std::uint64_t seed;
  std::size_t length;
  GradCheckReport report;
};

struct GradcheckOutput {
  std::vector<GradcheckCase> cases;
  bool passed = true;
  std::string text;  // human-readable report
};

GradcheckOutput cmd_gradcheck(const GradcheckConfig& cfg);

/// Writes a synthetic dataset directory and returns its summary text.
std::string cmd_gen_synth(const SyntheticSpec& spec, const std::filesystem::path& out,
                          Encoding encoding = Encoding::kJsonLines);

}  // namespace daf::cli
