#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "daf/checkpoint.hpp"
#include "daf/commands.hpp"
#include "daf/error.hpp"
#include "test_util.hpp"

namespace daf::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

RunConfig small_run(const fs::path& out) {
  RunConfig cfg = resolve_config({{"synth.n", "80"},
                                  {"synth.d_text", "12"},
                                  {"synth.d_audio", "5"},
                                  {"synth.d_video", "4"},
                                  {"model.d_attn", "6"},
                                  {"model.d_hidden", "6"},
                                  {"model.encoder_hidden", "3"},
                                  {"train.lr", "1e-3"},
                                  {"train.epochs", "4"},
                                  {"train.patience", "4"},
                                  {"run.out", out.string()}});
  return cfg;
}

TEST(Config, SectionsCommentsAndOverrides) {
  const Settings s = parse_config_text("# comment\n[train]\nlr = 0.01  # trailing\nepochs=5\n\n[run]\nseeds = 1, 2,3\n");
  EXPECT_EQ(s.at("train.lr"), "0.01");
  const RunConfig cfg = resolve_config(s);
  EXPECT_EQ(cfg.train.learning_rate, 0.01);
  EXPECT_EQ(cfg.train.max_epochs, 5u);
  EXPECT_EQ(cfg.train.patience, 5u);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Config, DefaultsFollowTheDocumentedTrainingSetup) {
  const RunConfig cfg = resolve_config({});
  EXPECT_EQ(cfg.train.learning_rate, 5e-5);
  EXPECT_EQ(cfg.train.batch_size, 32u);
  EXPECT_EQ(cfg.train.max_epochs, 200u);
  EXPECT_EQ(cfg.train.patience, 10u);
  EXPECT_EQ(cfg.train.clip_max_norm, 4.0);
  EXPECT_EQ(cfg.model.input_dropout, 0.2);
  EXPECT_EQ(cfg.model.d_attn, 32u);
  EXPECT_EQ(cfg.model.gate, GateKind::kSoftmax3);
  EXPECT_TRUE(cfg.train.collate.l2_normalize);
  EXPECT_EQ(cfg.train.collate.missing, MissingPolicy::kReduceGate);
}

TEST(Config, AllErrorsReportedAtOnce) {
  try {
    resolve_config({{"train.lr", "abc"}, {"model.fusion", "bogus"}, {"nope", "1"}});
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train.lr"), std::string::npos);
    EXPECT_NE(msg.find("bogus"), std::string::npos);
    EXPECT_NE(msg.find("nope"), std::string::npos);
  }
}

TEST(Config, ExitCodesAreDistinct) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kConfigError);
  EXPECT_EQ(exit_code_for(DataError("x")), kDataError);
  EXPECT_EQ(exit_code_for(NumericError("x")), kNumericError);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kFailure);
}

TEST(GenSynth, CountsDeterminismAndReload) {
  SyntheticSpec spec;
  spec.dims = Dims{6, 3, 2};
  const auto a = testing::scratch_dir("gen-a");
  const auto b = testing::scratch_dir("gen-b");
  cmd_gen_synth(spec, a);
  cmd_gen_synth(spec, b);
  EXPECT_EQ(line_count(a / "train.jsonl"), 210u);
  EXPECT_EQ(line_count(a / "val.jsonl"), 45u);
  EXPECT_EQ(line_count(a / "test.jsonl"), 45u);
  for (const char* f : {"manifest.json", "train.jsonl", "val.jsonl", "test.jsonl"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const Dataset d = load_dataset(a);
  EXPECT_EQ(d.dropped, 0u);
  EXPECT_EQ(d.train.samples.size(), 210u);
}

TEST(Train, MissingDatasetPathIsADataError) {
  RunConfig cfg = small_run(testing::scratch_dir("missing"));
  cfg.data_path = "/nonexistent/dataset";
  try {
    cmd_train(cfg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(exit_code_for(e), kDataError);
    EXPECT_NE(std::string(e.what()).find("manifest not found"), std::string::npos);
  }
}

TEST(Train, EmitsArtifactsWithConfigAndVersion) {
  const auto out = testing::scratch_dir("train");
  const RunConfig cfg = small_run(out);
  const auto runs = cmd_train(cfg);
  ASSERT_EQ(runs.size(), 1u);
  for (const char* f : {"checkpoint.bin", "history.csv", "run.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  const std::string hist = slurp(out / "history.csv");
  EXPECT_EQ(hist.rfind("# daf training history, format_version=1\n# config {", 0), 0u);
  const auto run = nlohmann::json::parse(slurp(out / "run.json"));
  EXPECT_EQ(run["format_version"], 1);
  EXPECT_EQ(run["config"]["train"]["lr"], 1e-3);

  const Checkpoint ck = load_checkpoint(out / "checkpoint.bin");
  EXPECT_EQ(ck.model.config().dims, (Dims{12, 5, 4}));
  EXPECT_EQ(ck.meta["best_epoch"], runs[0].fit.best_epoch);

  RunConfig ev = cfg;
  ev.out_dir = (out / "eval").string();
  const auto e = cmd_evaluate(out / "checkpoint.bin", ev);
  EXPECT_NEAR(e.metrics.mae, runs[0].test_metrics.mae, 1e-12);
  EXPECT_TRUE(fs::exists(out / "eval" / "metrics.json"));
}

TEST(Train, MultipleSeedsGetSubdirectories) {
  const auto out = testing::scratch_dir("train-seeds");
  RunConfig cfg = small_run(out);
  cfg.seeds = {3, 4};
  cfg.train.max_epochs = 2;
  cfg.train.patience = 2;
  cmd_train(cfg);
  EXPECT_TRUE(fs::exists(out / "seed-3" / "history.csv"));
  EXPECT_TRUE(fs::exists(out / "seed-4" / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(out / "run.json"));
}

TEST(Ablate, EmptyMatrixIsAUsageError) {
  RunConfig cfg = small_run(testing::scratch_dir("ablate-empty"));
  EXPECT_THROW(cmd_ablate(cfg), ConfigError);
}

TEST(Ablate, FourRowsInTableOrder) {
  const auto out = testing::scratch_dir("ablate");
  RunConfig cfg = small_run(out);
  cfg.train.max_epochs = 2;
  cfg.train.patience = 2;
  for (const char* r : {"t", "ta", "tv", "tav"}) cfg.ablate_rows.push_back(parse_modality_set(r));
  cfg.ablate_fusions = {GateKind::kSoftmax3};
  const auto res = cmd_ablate(cfg);
  ASSERT_EQ(res.cells.size(), 4u);
  std::istringstream md(res.table_markdown);
  std::string header, sep, line;
  std::getline(md, header);
  std::getline(md, sep);
  EXPECT_EQ(header, "| Modality | Embedding | Accuracy | F1-score | MAE | 7-Class Acc. (%) |");
  std::vector<std::string> rows;
  while (std::getline(md, line)) rows.push_back(line.substr(2, line.find(" |") - 2));
  EXPECT_EQ(rows, (std::vector<std::string>{"Text only (Dynamic Fusion)", "Text + Audio (Dynamic Fusion)",
                                            "Text + Video (Dynamic Fusion)", "Text + Audio + Video (Dynamic Fusion)"}));
  for (const char* f : {"ablation.md", "ablation.csv", "comparison.md", "run.json"}) EXPECT_TRUE(fs::exists(out / f));
}

TEST(Roc, PerfectlySeparatingCheckpoint) {
  const auto out = testing::scratch_dir("roc-perfect");
  RunConfig cfg = small_run(out);
  cfg.synthetic.noise_std = 0.0;
  cfg.synthetic.modality_probs = {1.0, 0.0, 0.0};
  cfg.model.gate = GateKind::kStaticConcat;
  const SyntheticDataset syn = gen_synthetic(cfg.synthetic);

  ModelConfig mc = model_config_for(cfg, syn.data.dims, ModalitySet{}, 0);
  Model model(mc);
  for (auto& p : model.params().named()) {
    for (double& v : p.value.data()) v = 0.0;
  }
  // Text projection coordinate 0 reads the signal direction; the head passes it through.
  for (std::size_t k = 0; k < mc.dims.text; ++k) model.params().get("text.W").data()[k] = syn.directions[0][k];
  model.params().get("head.W_h").data()[0] = 1.0;
  model.params().get("head.W_out").data()[0] = 1.0;
  save_checkpoint(out / "perfect.bin", model);

  const auto roc = cmd_roc(out / "perfect.bin", cfg);
  EXPECT_EQ(roc.roc.auc, 1.0);
  EXPECT_NE(roc.svg.find("AUC = 1.000"), std::string::npos);
  bool through_corner = false;
  for (const auto& p : roc.roc.points) through_corner = through_corner || (p.fpr == 0.0 && p.tpr == 1.0);
  EXPECT_TRUE(through_corner);
  const std::string csv = slurp(out / "roc.csv");
  EXPECT_NE(csv.find("fpr,tpr,threshold\n0,0,inf\n"), std::string::npos);
  EXPECT_EQ(csv.substr(csv.size() - 1), "\n");
  const auto last = csv.substr(csv.rfind('\n', csv.size() - 2) + 1);
  EXPECT_EQ(last.substr(0, 4), "1,1,");
}

TEST(Roc, RandomCheckpointIsNearChance) {
  const auto out = testing::scratch_dir("roc-random");
  RunConfig cfg = small_run(out);
  cfg.synthetic.n_samples = 2000;
  cfg.synthetic.split_fractions = {0.0, 0.0, 1.0};
  // Wide inputs, so a random projection is nearly orthogonal to the label direction.
  cfg.synthetic.dims = Dims{400, 40, 30};
  const SyntheticDataset syn = gen_synthetic(cfg.synthetic);
  Model model(model_config_for(cfg, syn.data.dims, ModalitySet{}, 17));
  testing::randomize(model.params(), 21);
  save_checkpoint(out / "random.bin", model);
  const auto roc = cmd_roc(out / "random.bin", cfg, false);
  EXPECT_EQ(roc.roc.positives + roc.roc.negatives, 2000u);
  EXPECT_NEAR(roc.roc.auc, 0.5, 0.1);
}

TEST(Checkpoint, RoundTripIsExact) {
  const ModelConfig cfg = testing::tiny_config(GateKind::kSigmoid2, 3);
  Model model(cfg);
  testing::randomize(model.params(), 4);
  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(dir / "a.bin", model, {{"note", "x"}});
  const Checkpoint ck = load_checkpoint(dir / "a.bin");
  EXPECT_EQ(ck.meta["note"], "x");
  EXPECT_EQ(ck.model.config().gate, GateKind::kSigmoid2);
  save_checkpoint(dir / "b.bin", ck.model, ck.meta);
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
  std::ofstream(dir / "bad.bin") << "garbage";
  EXPECT_THROW(load_checkpoint(dir / "bad.bin"), DataError);
}

}  // namespace
}  // namespace daf::cli
