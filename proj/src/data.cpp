#include "daf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "daf/error.hpp"
#include "daf/rng.hpp"

namespace daf {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kText: return "text";
    case Modality::kAudio: return "audio";
    case Modality::kVideo: return "video";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  if (name == "text") return Modality::kText;
  if (name == "audio") return Modality::kAudio;
  if (name == "video") return Modality::kVideo;
  throw DataError("unknown modality '" + std::string(name) + "'");
}

std::string modality_set_name(const ModalitySet& m) {
  std::string s = "t";
  if (m.audio) s += 'a';
  if (m.video) s += 'v';
  return s;
}

ModalitySet parse_modality_set(std::string_view spec) {
  // Accepts compact ("tav") or comma-separated ("text,audio") forms.
  ModalitySet m{false, false};
  bool text = false;
  if (spec.find(',') == std::string_view::npos && spec.size() <= 3 &&
      std::all_of(spec.begin(), spec.end(), [](char c) { return c == 't' || c == 'a' || c == 'v'; })) {
    for (char c : spec) {
      if (c == 't') text = true;
      if (c == 'a') m.audio = true;
      if (c == 'v') m.video = true;
    }
  } else {
    std::size_t start = 0;
    while (start <= spec.size()) {
      const auto end = std::min(spec.find(',', start), spec.size());
      const auto tok = spec.substr(start, end - start);
      switch (parse_modality(tok)) {
        case Modality::kText: text = true; break;
        case Modality::kAudio: m.audio = true; break;
        case Modality::kVideo: m.video = true; break;
      }
      start = end + 1;
    }
  }
  if (!text) throw ConfigError("modality set '" + std::string(spec) + "' must include text");
  return m;
}

const Split& Dataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

std::string_view missing_policy_name(MissingPolicy p) {
  return p == MissingPolicy::kReduceGate ? "reduce_gate" : "zero_input";
}

MissingPolicy parse_missing_policy(std::string_view name) {
  if (name == "reduce_gate") return MissingPolicy::kReduceGate;
  if (name == "zero_input") return MissingPolicy::kZeroInput;
  throw ConfigError("unknown missing-modality policy '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

void scrub(std::span<double> values) {
  for (double& v : values) {
    if (!std::isfinite(v)) v = 0.0;
  }
}

void l2_normalize(Sequence& seq) {
  constexpr double kEps = 1e-12;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    auto f = seq.frame(t);
    double sq = 0.0;
    for (double v : f) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > kEps) {
      for (double& v : f) v /= norm;
    }
  }
}

namespace {

SeqBatch pad_sequences(std::span<const Utterance* const> samples, const Sequence Utterance::*member,
                       std::size_t width, bool zero_input, const CollateOptions& options) {
  const std::size_t B = samples.size();
  SeqBatch out;
  out.lengths.resize(B);
  std::size_t t_max = 1;
  for (std::size_t b = 0; b < B; ++b) {
    const Sequence& s = samples[b]->*member;
    out.lengths[b] = zero_input ? 1 : s.frames;
    if (!zero_input && s.frames == 0) {
      throw DataError("collate: sample '" + samples[b]->id + "' has an empty sequence");
    }
    if (!zero_input && s.width != width) {
      throw DimensionError("collate: sample '" + samples[b]->id + "' frame width " + std::to_string(s.width) +
                           " != " + std::to_string(width));
    }
    t_max = std::max(t_max, out.lengths[b]);
  }
  std::vector<double> frames(B * t_max * width, 0.0);
  std::vector<std::uint8_t> mask(B * t_max, 0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < out.lengths[b]; ++t) mask[b * t_max + t] = 1;
    if (zero_input) continue;
    Sequence s = samples[b]->*member;
    scrub(s.values);
    if (options.l2_normalize) l2_normalize(s);
    std::copy(s.values.begin(), s.values.end(),
              frames.begin() + static_cast<std::ptrdiff_t>(b * t_max * width));
  }
  out.frames = Tensor({B, t_max, width}, std::move(frames));
  out.mask = Mask({B, t_max}, std::move(mask));
  return out;
}

}  // namespace

Batch collate(std::span<const Utterance* const> samples, const ModalitySet& present, const Dims& dims,
              const CollateOptions& options) {
  if (samples.empty()) throw DataError("collate: empty sample list");
  const std::size_t B = samples.size();
  Batch batch;
  std::vector<double> text(B * dims.text);
  std::vector<double> labels(B);
  batch.ids.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    const Utterance& u = *samples[b];
    if (u.text.size() != dims.text) {
      throw DimensionError("collate: sample '" + u.id + "' text width " + std::to_string(u.text.size()) +
                           " != " + std::to_string(dims.text));
    }
    std::copy(u.text.begin(), u.text.end(), text.begin() + static_cast<std::ptrdiff_t>(b * dims.text));
    labels[b] = u.label;
    batch.ids.push_back(u.id);
  }
  scrub(text);
  batch.text = Tensor({B, dims.text}, std::move(text));
  batch.labels = Tensor({B}, std::move(labels));

  const bool zero_fill = options.missing == MissingPolicy::kZeroInput;
  if (present.audio || zero_fill) {
    batch.audio = pad_sequences(samples, &Utterance::audio, dims.audio, !present.audio, options);
  }
  if (present.video || zero_fill) {
    batch.video = pad_sequences(samples, &Utterance::video, dims.video, !present.video, options);
  }
  return batch;
}

Batch collate(const Split& split, std::span<const std::size_t> indices, const Dims& dims,
              const CollateOptions& options) {
  std::vector<const Utterance*> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= split.samples.size()) throw DataError("collate: sample index out of range");
    picked.push_back(&split.samples[i]);
  }
  return collate(picked, split.modalities, dims, options);
}

Split drop_modality(const Split& split, Modality which) {
  if (which == Modality::kText) {
    throw ConfigError("text is the anchor modality and cannot be dropped");
  }
  Split out = split;
  for (auto& u : out.samples) {
    Sequence& s = which == Modality::kAudio ? u.audio : u.video;
    s.frames = 0;
    s.values.clear();
  }
  (which == Modality::kAudio ? out.modalities.audio : out.modalities.video) = false;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> random_direction(Rng& rng, std::size_t width) {
  std::vector<double> d(width);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (double& v : d) {
      v = rng.normal();
      sq += v * v;
    }
  } while (sq == 0.0);
  const double norm = std::sqrt(sq);
  for (double& v : d) v /= norm;
  return d;
}

void fill_frame(std::span<double> out, const std::vector<double>& dir, double signal, double noise_std, Rng& rng) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = signal * dir[i] + (noise_std > 0.0 ? noise_std * rng.normal() : 0.0);
  }
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  const double psum = spec.modality_probs[0] + spec.modality_probs[1] + spec.modality_probs[2];
  if (std::abs(psum - 1.0) > 1e-9 ||
      std::any_of(spec.modality_probs.begin(), spec.modality_probs.end(), [](double p) { return p < 0.0; })) {
    throw ConfigError("synthetic modality probabilities must be nonnegative and sum to 1");
  }
  if (!(spec.noise_std >= 0.0)) throw ConfigError("synthetic noise_std must be >= 0");
  if (spec.min_frames < 1 || spec.max_frames < spec.min_frames) {
    throw ConfigError("synthetic frame range must satisfy 1 <= min <= max");
  }
  const double fsum = spec.split_fractions[0] + spec.split_fractions[1] + spec.split_fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9) throw ConfigError("synthetic split fractions must sum to 1");

  Rng rng(spec.seed);
  SyntheticDataset out;
  out.data.dims = spec.dims;
  out.data.embeddings = {"synthetic", "synthetic", "synthetic"};
  out.directions[0] = random_direction(rng, spec.dims.text);
  out.directions[1] = random_direction(rng, spec.dims.audio);
  out.directions[2] = random_direction(rng, spec.dims.video);

  const auto n = spec.n_samples;
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.split_fractions[0]));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.split_fractions[1])));

  for (std::size_t i = 0; i < n; ++i) {
    Utterance u;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", i);
    u.id = id;
    u.label = rng.uniform(-3.0, 3.0);
    const double r = rng.uniform();
    const Modality m = r < spec.modality_probs[0]                             ? Modality::kText
                       : r < spec.modality_probs[0] + spec.modality_probs[1] ? Modality::kAudio
                                                                              : Modality::kVideo;
    u.informative = m;
    const double signal = u.label / 3.0;

    u.text.resize(spec.dims.text);
    fill_frame(u.text, out.directions[0], m == Modality::kText ? signal : 0.0, spec.noise_std, rng);

    auto make_seq = [&](std::size_t width, Modality which) {
      Sequence s;
      s.frames = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.min_frames),
                                                          static_cast<std::int64_t>(spec.max_frames)));
      s.width = width;
      s.values.resize(s.frames * width);
      const auto& dir = out.directions[static_cast<int>(which)];
      for (std::size_t t = 0; t < s.frames; ++t) {
        fill_frame(s.frame(t), dir, m == which ? signal : 0.0, spec.noise_std, rng);
      }
      return s;
    };
    u.audio = make_seq(spec.dims.audio, Modality::kAudio);
    u.video = make_seq(spec.dims.video, Modality::kVideo);

    Split& dst = i < n_train ? out.data.train : i < n_train + n_val ? out.data.val : out.data.test;
    dst.samples.push_back(std::move(u));
  }
  return out;
}

}  // namespace daf
