#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "daf/tensor.hpp"

namespace daf {

enum class Modality { kText = 0, kAudio = 1, kVideo = 2 };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

struct Dims {
  std::size_t text = 768;
  std::size_t audio = 74;
  std::size_t video = 35;
  bool operator==(const Dims&) const = default;
};

/// Frame sequence stored row-major, frames x width.
struct Sequence {
  std::size_t frames = 0;
  std::size_t width = 0;
  std::vector<double> values;

  std::span<const double> frame(std::size_t t) const { return {values.data() + t * width, width}; }
  std::span<double> frame(std::size_t t) { return {values.data() + t * width, width}; }
  bool operator==(const Sequence&) const = default;
};

struct Utterance {
  std::string id;
  double label = 0.0;
  std::vector<double> text;
  Sequence audio;
  Sequence video;
  // Hidden annotation written by the synthetic generator: the modality that
  // carries the label signal.
  std::optional<Modality> informative;
};

/// Which non-text modalities a split carries. Text is always present.
struct ModalitySet {
  bool audio = true;
  bool video = true;
  bool operator==(const ModalitySet&) const = default;
};

std::string modality_set_name(const ModalitySet& m);  // "t", "ta", "tv", "tav"
ModalitySet parse_modality_set(std::string_view spec);

struct Split {
  std::vector<Utterance> samples;
  ModalitySet modalities;
};

struct EmbeddingNames {
  std::string text = "BERT";
  std::string audio = "COVAREP";
  std::string video = "FACET";
};

struct Dataset {
  Dims dims;
  EmbeddingNames embeddings;
  Split train, val, test;
  std::size_t dropped = 0;  // records discarded for a missing modality at load time

  const Split& split(std::string_view name) const;
};

// ---------------------------------------------------------------------------
// Preprocessing

/// Replaces NaN and +-inf by 0 in place.
void scrub(std::span<double> values);
/// Divides every frame with norm > 1e-12 by its Euclidean norm.
void l2_normalize(Sequence& seq);

enum class MissingPolicy { kReduceGate, kZeroInput };
std::string_view missing_policy_name(MissingPolicy p);
MissingPolicy parse_missing_policy(std::string_view name);

struct CollateOptions {
  bool l2_normalize = true;
  // With kZeroInput, a modality absent from the split is fed as one zero
  // frame so that a full tri-modal model can still run.
  MissingPolicy missing = MissingPolicy::kReduceGate;
};

struct SeqBatch {
  Tensor frames;  // B x T_max x width, padded cells exactly 0
  Mask mask;      // B x T_max
  std::vector<std::size_t> lengths;
};

struct Batch {
  Tensor text;  // B x d_text
  std::optional<SeqBatch> audio;
  std::optional<SeqBatch> video;
  Tensor labels;  // B
  std::vector<std::string> ids;

  std::size_t size() const { return ids.size(); }
};

Batch collate(std::span<const Utterance* const> samples, const ModalitySet& present, const Dims& dims,
              const CollateOptions& options = {});
Batch collate(const Split& split, std::span<const std::size_t> indices, const Dims& dims,
              const CollateOptions& options = {});

/// Removes one non-text modality from a split view. Dropping text is an error.
Split drop_modality(const Split& split, Modality which);

// ---------------------------------------------------------------------------
// Storage

enum class Encoding { kJsonLines, kBinary };

inline constexpr int kDatasetFormatVersion = 1;

/// Reads a dataset directory (manifest + one record file per split).
/// Samples with an empty text vector or no audio/video frames are dropped and
/// counted; malformed records raise DataError naming the record.
Dataset load_dataset(const std::filesystem::path& dir);

void save_dataset(const Dataset& data, const std::filesystem::path& dir, Encoding encoding = Encoding::kJsonLines);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t n_samples = 300;
  Dims dims;
  double noise_std = 0.3;
  std::array<double, 3> modality_probs{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // text, audio, video
  std::size_t min_frames = 1;
  std::size_t max_frames = 8;
  std::array<double, 3> split_fractions{0.70, 0.15, 0.15};
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  Dataset data;
  std::array<std::vector<double>, 3> directions;  // unit signal direction per modality
};

/// Label s ~ U[-3, 3]; the informative modality carries (s/3) * direction plus
/// Gaussian noise in every true frame, the others carry noise only.
SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace daf
