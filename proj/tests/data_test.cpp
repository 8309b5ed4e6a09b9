#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "daf/data.hpp"
#include "daf/error.hpp"
#include "daf/model.hpp"
#include "test_util.hpp"

namespace daf {
namespace {

namespace fs = std::filesystem;
const fs::path kData = DAF_EXAMPLES_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(LoadDataset, TinyFixture) {
  const Dataset d = load_dataset(kData / "tiny");
  EXPECT_EQ(d.dims, (Dims{4, 3, 2}));
  ASSERT_EQ(d.train.samples.size(), 2u);
  EXPECT_EQ(d.dropped, 1u);
  EXPECT_EQ(d.train.samples[0].id, "clip01_0");
  EXPECT_EQ(d.train.samples[0].audio.frames, 2u);
  EXPECT_TRUE(std::isnan(d.train.samples[0].audio.values[4]));
  EXPECT_EQ(d.train.samples[1].label, -2.0);
  EXPECT_EQ(d.embeddings.audio, "COVAREP");
  EXPECT_EQ(d.val.samples.size(), 1u);
  EXPECT_EQ(d.test.samples.size(), 1u);
}

TEST(LoadDataset, LabelOutOfRangeRejected) {
  try {
    load_dataset(kData / "bad_label");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("clip05_0"), std::string::npos);
  }
}

TEST(LoadDataset, MissingManifest) {
  const auto dir = testing::scratch_dir("nomanifest");
  try {
    load_dataset(dir);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("manifest not found"), std::string::npos);
  }
}

TEST(LoadDataset, WidthMismatchRejected) {
  const auto dir = testing::scratch_dir("width");
  fs::copy(kData / "tiny", dir, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  std::ofstream(dir / "val.jsonl") << R"({"id": "w", "label": 0.1, "text": [1, 2, 3, 4], "audio": [[1, 2]], "video": [[0, 1]]})"
                                   << "\n";
  EXPECT_THROW(load_dataset(dir), DataError);
}

TEST(Scrub, Examples) {
  std::vector<double> v{1.0, std::nan(""), -std::numeric_limits<double>::infinity()};
  scrub(v);
  EXPECT_EQ(v, (std::vector<double>{1, 0, 0}));
  std::vector<double> f{0.5, -2.0};
  scrub(f);
  EXPECT_EQ(f, (std::vector<double>{0.5, -2.0}));
}

TEST(Scrub, AllNanFrameIsRetainedAsZeros) {
  Utterance u;
  u.id = "n";
  u.text = {1, 0};
  u.audio = Sequence{2, 2, {std::nan(""), std::nan(""), 1, 1}};
  u.video = Sequence{1, 1, {2}};
  const std::vector<const Utterance*> ptrs{&u};
  const Batch b = collate(ptrs, {}, Dims{2, 2, 1}, {false, MissingPolicy::kReduceGate});
  EXPECT_EQ(b.audio->lengths[0], 2u);
  EXPECT_EQ(b.audio->frames[0], 0.0);
  EXPECT_EQ(b.audio->frames[1], 0.0);
  EXPECT_EQ(b.audio->frames[2], 1.0);
}

TEST(L2Normalize, Examples) {
  Sequence s{3, 2, {3, 4, 0, 0, 0.6, 0.8}};
  l2_normalize(s);
  EXPECT_NEAR(s.values[0], 0.6, 1e-15);
  EXPECT_NEAR(s.values[1], 0.8, 1e-15);
  EXPECT_EQ(s.values[2], 0.0);
  EXPECT_EQ(s.values[3], 0.0);
  EXPECT_EQ(s.values[4], 0.6);
  EXPECT_EQ(s.values[5], 0.8);
}

TEST(Collate, PaddingAndMask) {
  Rng rng(1);
  const Dims dims{3, 2, 2};
  const std::vector<Utterance> s{testing::random_utterance(rng, dims, 5, 2), testing::random_utterance(rng, dims, 2, 1)};
  const Batch b = testing::batch_of(s, dims);
  EXPECT_EQ(b.audio->frames.shape(), (Shape{2, 5, 2}));
  EXPECT_EQ(std::vector<std::uint8_t>(b.audio->mask.on.begin() + 5, b.audio->mask.on.end()),
            (std::vector<std::uint8_t>{1, 1, 0, 0, 0}));
  for (std::size_t k = 2 * 2; k < 5 * 2; ++k) EXPECT_EQ(b.audio->frames[10 + k], 0.0);
  // L2 normalization on by default.
  const double n0 = std::hypot(b.audio->frames[0], b.audio->frames[1]);
  EXPECT_NEAR(n0, 1.0, 1e-15);

  const Batch one = testing::batch_of({s[1]}, dims);
  EXPECT_EQ(one.audio->frames.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(one.audio->mask.count(), 2u);
}

TEST(Collate, ZeroInputPolicyFeedsOneZeroFrame) {
  Rng rng(2);
  const Dims dims{3, 2, 2};
  const std::vector<Utterance> s{testing::random_utterance(rng, dims, 3, 2)};
  const Batch b = testing::batch_of(s, dims, ModalitySet{false, true}, {true, MissingPolicy::kZeroInput});
  ASSERT_TRUE(b.audio.has_value());
  EXPECT_EQ(b.audio->frames.shape(), (Shape{1, 1, 2}));
  for (double v : b.audio->frames.data()) EXPECT_EQ(v, 0.0);
  const Batch r = testing::batch_of(s, dims, ModalitySet{false, true});
  EXPECT_FALSE(r.audio.has_value());
}

TEST(Collate, PredictionIndependentOfBatchCompanions) {
  const ModelConfig cfg = testing::tiny_config(GateKind::kSoftmax3);
  Model model(cfg);
  testing::randomize(model.params(), 5);
  Rng rng(3);
  std::vector<Utterance> s;
  for (int i = 0; i < 6; ++i) s.push_back(testing::random_utterance(rng, cfg.dims, 1 + i, 7 - i));
  const auto together = model.forward(testing::batch_of(s, cfg.dims), Mode::kEval);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto alone = model.forward(testing::batch_of({s[i]}, cfg.dims), Mode::kEval);
    EXPECT_NEAR(alone.prediction[0], together.prediction[i], 1e-9);
  }
}

TEST(DropModality, Examples) {
  const Dataset d = load_dataset(kData / "tiny");
  const Split no_audio = drop_modality(d.train, Modality::kAudio);
  const Batch b = collate(no_audio, std::vector<std::size_t>{0, 1}, d.dims);
  EXPECT_FALSE(b.audio.has_value());
  EXPECT_TRUE(b.video.has_value());

  ModelConfig cfg;
  cfg.dims = d.dims;
  cfg.d_attn = 4;
  cfg.d_hidden = 4;
  cfg.encoder_hidden = 2;
  cfg.modalities = no_audio.modalities;
  EXPECT_EQ(Model(cfg).forward(b, Mode::kEval).prediction.size(), 2u);

  const Split text_only = drop_modality(no_audio, Modality::kVideo);
  EXPECT_EQ(modality_set_name(text_only.modalities), "t");
  EXPECT_EQ(text_only.samples[0].video.frames, 0u);
  EXPECT_EQ(d.train.samples[0].audio.frames, 2u);
  EXPECT_THROW(drop_modality(d.train, Modality::kText), ConfigError);
}

TEST(ModalitySetNames, ParseAndPrint) {
  EXPECT_EQ(modality_set_name(parse_modality_set("tav")), "tav");
  EXPECT_EQ(modality_set_name(parse_modality_set("text,video")), "tv");
  EXPECT_EQ(modality_set_name(parse_modality_set("t")), "t");
  EXPECT_THROW(parse_modality_set("av"), ConfigError);
}

TEST(Synthetic, NoiseFreeTextInformative) {
  SyntheticSpec spec;
  spec.n_samples = 20;
  spec.dims = Dims{8, 4, 3};
  spec.noise_std = 0.0;
  spec.modality_probs = {1.0, 0.0, 0.0};
  const auto syn = gen_synthetic(spec);
  for (const Split* s : {&syn.data.train, &syn.data.val, &syn.data.test}) {
    for (const auto& u : s->samples) {
      EXPECT_EQ(*u.informative, Modality::kText);
      EXPECT_GE(u.label, -3.0);
      EXPECT_LE(u.label, 3.0);
      for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(u.text[k], u.label / 3.0 * syn.directions[0][k]);
      for (double v : u.audio.values) EXPECT_EQ(v, 0.0);
      for (double v : u.video.values) EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Synthetic, ModalityCountsNearTarget) {
  SyntheticSpec spec;
  spec.n_samples = 3000;
  spec.dims = Dims{4, 3, 2};
  spec.seed = 9;
  const auto syn = gen_synthetic(spec);
  std::size_t counts[3] = {0, 0, 0};
  for (const Split* s : {&syn.data.train, &syn.data.val, &syn.data.test}) {
    for (const auto& u : s->samples) ++counts[static_cast<int>(*u.informative)];
  }
  for (std::size_t c : counts) {
    EXPECT_GE(c, 950u);
    EXPECT_LE(c, 1050u);
  }
  EXPECT_EQ(syn.data.train.samples.size(), 2100u);
  EXPECT_EQ(syn.data.val.samples.size(), 450u);
  EXPECT_EQ(syn.data.test.samples.size(), 450u);
}

TEST(Synthetic, InvalidSpecRejected) {
  SyntheticSpec spec;
  spec.modality_probs = {0.5, 0.5, 0.5};
  EXPECT_THROW(gen_synthetic(spec), ConfigError);
}

TEST(RoundTrip, JsonAndBinaryBitIdentical) {
  SyntheticSpec spec;
  spec.n_samples = 40;
  spec.dims = Dims{5, 3, 2};
  Dataset d = gen_synthetic(spec).data;
  d.train.samples[0].audio.values[0] = std::nan("");
  d.train.samples[1].video.values[0] = std::numeric_limits<double>::infinity();
  d.train.samples[2].text[0] = 0.1 + 0.2;
  for (Encoding enc : {Encoding::kJsonLines, Encoding::kBinary}) {
    const auto dir = testing::scratch_dir(enc == Encoding::kBinary ? "rt-bin" : "rt-json");
    save_dataset(d, dir, enc);
    const Dataset back = load_dataset(dir);
    ASSERT_EQ(back.train.samples.size(), d.train.samples.size());
    for (std::size_t i = 0; i < d.train.samples.size(); ++i) {
      const auto& a = d.train.samples[i];
      const auto& b = back.train.samples[i];
      EXPECT_EQ(a.id, b.id);
      EXPECT_EQ(a.label, b.label);
      EXPECT_EQ(a.informative, b.informative);
      EXPECT_EQ(std::memcmp(a.text.data(), b.text.data(), a.text.size() * sizeof(double)), 0);
      EXPECT_EQ(std::memcmp(a.audio.values.data(), b.audio.values.data(), a.audio.values.size() * sizeof(double)), 0);
      EXPECT_EQ(std::memcmp(a.video.values.data(), b.video.values.data(), a.video.values.size() * sizeof(double)), 0);
    }
    const auto dir2 = testing::scratch_dir(enc == Encoding::kBinary ? "rt-bin2" : "rt-json2");
    save_dataset(back, dir2, enc);
    for (const char* f : {"manifest.json", "train.jsonl", "train.bin"}) {
      if (fs::exists(dir / f)) EXPECT_EQ(slurp(dir / f), slurp(dir2 / f)) << f;
    }
  }
}

}  // namespace
}  // namespace daf
