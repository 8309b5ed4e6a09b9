#include "daf/model.hpp"

#include <algorithm>
#include <cmath>

#include "daf/error.hpp"

namespace daf {

std::string_view encoder_kind_name(EncoderKind k) { return k == EncoderKind::kLinear ? "linear" : "bi_recurrent"; }

EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "linear") return EncoderKind::kLinear;
  if (s == "bi_recurrent" || s == "birnn" || s == "bigru") return EncoderKind::kBiRecurrent;
  throw ConfigError("unknown encoder kind '" + std::string(s) + "'");
}

std::string_view gate_kind_name(GateKind k) {
  switch (k) {
    case GateKind::kSoftmax3: return "softmax3";
    case GateKind::kSigmoid2: return "sigmoid2";
    case GateKind::kStaticConcat: return "static";
  }
  return "?";
}

GateKind parse_gate_kind(std::string_view s) {
  if (s == "softmax3" || s == "dynamic") return GateKind::kSoftmax3;
  if (s == "sigmoid2") return GateKind::kSigmoid2;
  if (s == "static" || s == "static_concat") return GateKind::kStaticConcat;
  throw ConfigError("unknown fusion variant '" + std::string(s) + "' (expected softmax3, sigmoid2 or static)");
}

std::string_view output_activation_name(OutputActivation a) {
  return a == OutputActivation::kScaledTanh ? "scaled_tanh" : "linear";
}

OutputActivation parse_output_activation(std::string_view s) {
  if (s == "scaled_tanh") return OutputActivation::kScaledTanh;
  if (s == "linear") return OutputActivation::kLinear;
  throw ConfigError("unknown output activation '" + std::string(s) + "'");
}

namespace {

std::size_t present_count(const ModalitySet& m) { return (m.audio ? 1 : 0) + (m.video ? 1 : 0); }

}  // namespace

std::vector<std::string> ModelConfig::validate() const {
  std::vector<std::string> errs;
  auto positive = [&](std::size_t v, const char* what) {
    if (v == 0) errs.push_back(std::string(what) + " must be positive");
  };
  positive(dims.text, "model.d_text");
  positive(dims.audio, "model.d_audio");
  positive(dims.video, "model.d_video");
  positive(d_attn, "model.d_attn");
  positive(d_hidden, "model.d_hidden");
  positive(encoder_hidden, "model.encoder_hidden");
  if (!(input_dropout >= 0.0 && input_dropout < 1.0)) errs.push_back("model.input_dropout must be in [0, 1)");
  return errs;
}

std::size_t ModelConfig::fused_width() const {
  const std::size_t k = present_count(modalities);
  switch (gate) {
    case GateKind::kSoftmax3: return d_attn;
    case GateKind::kSigmoid2: return d_attn * (k > 0 ? 2 : 1);
    case GateKind::kStaticConcat: return d_attn * (1 + k);
  }
  return d_attn;
}

// ---------------------------------------------------------------------------
// ModelParams

void ModelParams::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  params_.push_back({std::move(name), std::move(value)});
}

bool ModelParams::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const NamedTensor& p) { return p.name == name; });
}

const Tensor& ModelParams::get(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("no parameter named " + std::string(name));
}

Tensor& ModelParams::get(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).get(name));
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& p : params_) {
    Tensor c = p.value.detach();
    c.set_requires_grad(p.value.requires_grad());
    out.params_.push_back({p.name, std::move(c)});
  }
  return out;
}

void ModelParams::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

ModelParams ModelParams::init(const ModelConfig& cfg) {
  if (auto errs = cfg.validate(); !errs.empty()) throw ConfigError(errs.front());
  Rng rng(cfg.seed);
  ModelParams p;
  auto weight = [&](std::string name, std::size_t out, std::size_t in) {
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> v(out * in);
    for (double& x : v) x = rng.uniform(-s, s);
    p.add(std::move(name), Tensor({out, in}, std::move(v)).set_requires_grad());
  };
  auto bias = [&](std::string name, std::size_t out) {
    p.add(std::move(name), Tensor::zeros({out}).set_requires_grad());
  };

  weight("text.W", cfg.d_attn, cfg.dims.text);
  bias("text.b", cfg.d_attn);

  std::vector<std::pair<std::string, std::size_t>> seqs;
  if (cfg.modalities.audio) seqs.emplace_back("audio", cfg.dims.audio);
  if (cfg.modalities.video) seqs.emplace_back("video", cfg.dims.video);
  const std::size_t H = cfg.encoder_hidden;
  for (const auto& [m, width] : seqs) {
    if (cfg.encoder == EncoderKind::kBiRecurrent) {
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string pre = m + "." + dir + ".";
        weight(pre + "w_x", 3 * H, width);
        bias(pre + "b_x", 3 * H);
        weight(pre + "w_h", 3 * H, H);
        bias(pre + "b_h", 3 * H);
      }
      weight(m + ".enc.W", cfg.d_attn, 2 * H);
    } else {
      weight(m + ".enc.W", cfg.d_attn, width);
    }
    bias(m + ".enc.b", cfg.d_attn);
    weight(m + ".attn.W", cfg.d_attn, cfg.d_attn);
  }

  const std::size_t k = seqs.size();
  if (cfg.gate == GateKind::kSoftmax3 && k > 0) {
    weight("gate.W1", cfg.d_hidden, cfg.d_attn * (k + 1));
    bias("gate.b1", cfg.d_hidden);
    weight("gate.W2", k + 1, cfg.d_hidden);
    bias("gate.b2", k + 1);
  } else if (cfg.gate == GateKind::kSigmoid2 && k > 0) {
    weight("gate.W", k, cfg.d_attn * k);
    bias("gate.b", k);
  }

  weight("head.W_h", cfg.d_hidden, cfg.fused_width());
  bias("head.b_h", cfg.d_hidden);
  weight("head.W_out", 1, cfg.d_hidden);
  bias("head.b_out", 1);
  return p;
}

// ---------------------------------------------------------------------------
// Building blocks

Tensor run_recurrent(const Tensor& frames, const Mask& mask, const RecurrentCell& cell, bool reverse) {
  if (frames.rank() != 3) throw DimensionError("run_recurrent: frames must be B x T x in, got " + shape_str(frames.shape()));
  const std::size_t B = frames.dim(0), T = frames.dim(1);
  if (T == 0) throw DimensionError("run_recurrent: empty sequence");
  if (mask.shape != Shape{B, T}) throw DimensionError("run_recurrent: mask does not match frames");
  const std::size_t H = cell.w_h.dim(1);
  if (cell.w_x.dim(0) != 3 * H || cell.w_h.dim(0) != 3 * H) {
    throw DimensionError("run_recurrent: cell weights must have 3H rows");
  }

  const Tensor xproj = affine(frames, cell.w_x, cell.b_x);  // B x T x 3H
  Tensor h = Tensor::zeros({B, H});
  std::vector<Tensor> states(T);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    const Tensor xt = reshape(slice(xproj, 1, t, t + 1), {B, 3 * H});
    const Tensor hp = affine(h, cell.w_h, cell.b_h);
    const Tensor r = sigmoid(add(slice(xt, 1, 0, H), slice(hp, 1, 0, H)));
    const Tensor z = sigmoid(add(slice(xt, 1, H, 2 * H), slice(hp, 1, H, 2 * H)));
    const Tensor n = tanh(add(slice(xt, 1, 2 * H, 3 * H), mul(r, slice(hp, 1, 2 * H, 3 * H))));
    const Tensor next = add(n, mul(z, sub(h, n)));
    std::vector<std::uint8_t> keep(B);
    for (std::size_t b = 0; b < B; ++b) keep[b] = mask.on[b * T + t];
    h = select_rows(Mask({B}, std::move(keep)), next, h);
    states[t] = h;
  }
  return stack(states, 1);
}

Tensor luong_scores(const Tensor& query, const Tensor& keys, const Tensor& w_score) {
  return seq_dot(keys, matmul(query, w_score));
}

AttentionResult luong_attention(const Tensor& query, const Tensor& keys, const Tensor& w_score, const Mask& mask) {
  Tensor weights = softmax(luong_scores(query, keys, w_score), mask);
  Tensor context = seq_weighted_sum(weights, keys);
  return {std::move(weights), std::move(context)};
}

HeadResult regression_head(const Tensor& z, const Tensor& w_h, const Tensor& b_h, const Tensor& w_out,
                           const Tensor& b_out, OutputActivation activation) {
  Tensor hidden = relu(affine(z, w_h, b_h));
  Tensor out = affine(hidden, w_out, b_out);
  if (activation == OutputActivation::kScaledTanh) out = scale(tanh(out), 3.0);
  const std::size_t B = out.size();
  return {std::move(hidden), reshape(out, {B})};
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)), params_(ModelParams::init(cfg_)) {}

Model::Model(ModelConfig cfg, ModelParams params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  const ModelParams ref = ModelParams::init(cfg_);
  if (ref.named().size() != params_.named().size()) {
    throw ConfigError("parameter set does not match the model configuration");
  }
  for (std::size_t i = 0; i < ref.named().size(); ++i) {
    const auto& a = ref.named()[i];
    const auto& b = params_.named()[i];
    if (a.name != b.name || a.value.shape() != b.value.shape()) {
      throw ConfigError("parameter " + b.name + " " + shape_str(b.value.shape()) + " does not match expected " +
                        a.name + " " + shape_str(a.value.shape()));
    }
  }
}

Tensor Model::encode_sequence(std::string_view modality, const SeqBatch& seq) const {
  const std::string m(modality);
  if (seq.frames.rank() != 3 || seq.frames.dim(1) == 0) throw DimensionError("encode_sequence: empty sequence");
  if (cfg_.encoder == EncoderKind::kLinear) {
    return affine(seq.frames, params_.get(m + ".enc.W"), params_.get(m + ".enc.b"));
  }
  auto cell = [&](const char* dir) {
    const std::string pre = m + "." + dir + ".";
    return RecurrentCell{params_.get(pre + "w_x"), params_.get(pre + "b_x"), params_.get(pre + "w_h"),
                         params_.get(pre + "b_h")};
  };
  const Tensor fwd = run_recurrent(seq.frames, seq.mask, cell("fwd"), false);
  const Tensor bwd = run_recurrent(seq.frames, seq.mask, cell("bwd"), true);
  return affine(concat({fwd, bwd}, 2), params_.get(m + ".enc.W"), params_.get(m + ".enc.b"));
}

namespace {

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> m(x.size());
  for (double& v : m) v = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(x, Tensor(x.shape(), std::move(m)));
}

}  // namespace

ForwardTrace Model::forward(const Batch& batch, Mode mode, Rng* dropout_rng) const {
  const bool train = mode == Mode::kTrain && cfg_.input_dropout > 0.0;
  if (mode == Mode::kTrain && dropout_rng == nullptr) {
    throw ConfigError("train-mode forward needs a dropout RNG stream");
  }
  if (batch.text.rank() != 2 || batch.text.dim(1) != cfg_.dims.text) {
    throw DimensionError("forward: text batch " + shape_str(batch.text.shape()) + " does not match d_text " +
                         std::to_string(cfg_.dims.text));
  }
  auto maybe_drop = [&](const Tensor& x) { return train ? dropout(x, cfg_.input_dropout, *dropout_rng) : x; };

  ForwardTrace tr;
  tr.text_proj = affine(maybe_drop(batch.text), params_.get("text.W"), params_.get("text.b"));

  auto attend = [&](const char* name, const std::optional<SeqBatch>& seq, std::size_t width,
                    std::optional<Tensor>& enc, std::optional<Tensor>& attn, std::optional<Tensor>& ctx) {
    if (!seq) throw DimensionError(std::string("forward: model expects ") + name + " but the batch has none");
    if (seq->frames.dim(2) != width) {
      throw DimensionError(std::string("forward: ") + name + " frame width " + std::to_string(seq->frames.dim(2)) +
                           " != " + std::to_string(width));
    }
    SeqBatch input{maybe_drop(seq->frames), seq->mask, seq->lengths};
    enc = encode_sequence(name, input);
    auto res = luong_attention(tr.text_proj, *enc, params_.get(std::string(name) + ".attn.W"), seq->mask);
    attn = std::move(res.weights);
    ctx = std::move(res.context);
  };
  if (cfg_.modalities.audio) attend("audio", batch.audio, cfg_.dims.audio, tr.audio_enc, tr.audio_attn, tr.audio_ctx);
  if (cfg_.modalities.video) attend("video", batch.video, cfg_.dims.video, tr.video_enc, tr.video_attn, tr.video_ctx);

  std::vector<Tensor> contexts;
  if (tr.audio_ctx) contexts.push_back(*tr.audio_ctx);
  if (tr.video_ctx) contexts.push_back(*tr.video_ctx);

  switch (cfg_.gate) {
    case GateKind::kSoftmax3: {
      std::vector<Tensor> parts{tr.text_proj};
      parts.insert(parts.end(), contexts.begin(), contexts.end());
      if (parts.size() == 1) {
        tr.gate = Tensor::full({batch.size(), 1}, 1.0);
        tr.fused = tr.text_proj;
        break;
      }
      const Tensor logits =
          affine(relu(affine(concat(parts, 1), params_.get("gate.W1"), params_.get("gate.b1"))),
                 params_.get("gate.W2"), params_.get("gate.b2"));
      tr.gate = softmax(logits);
      Tensor z = scale_rows(parts[0], slice(*tr.gate, 1, 0, 1));
      for (std::size_t i = 1; i < parts.size(); ++i) z = add(z, scale_rows(parts[i], slice(*tr.gate, 1, i, i + 1)));
      tr.fused = z;
      break;
    }
    case GateKind::kSigmoid2: {
      if (contexts.empty()) {
        tr.fused = tr.text_proj;
        break;
      }
      tr.gate = sigmoid(affine(concat(contexts, 1), params_.get("gate.W"), params_.get("gate.b")));
      Tensor fused = scale_rows(contexts[0], slice(*tr.gate, 1, 0, 1));
      for (std::size_t i = 1; i < contexts.size(); ++i) {
        fused = add(fused, scale_rows(contexts[i], slice(*tr.gate, 1, i, i + 1)));
      }
      tr.fused = concat({tr.text_proj, fused}, 1);
      break;
    }
    case GateKind::kStaticConcat: {
      std::vector<Tensor> parts{tr.text_proj};
      parts.insert(parts.end(), contexts.begin(), contexts.end());
      tr.fused = parts.size() == 1 ? tr.text_proj : concat(parts, 1);
      break;
    }
  }

  auto head = regression_head(tr.fused, params_.get("head.W_h"), params_.get("head.b_h"), params_.get("head.W_out"),
                              params_.get("head.b_out"), cfg_.output);
  tr.hidden = std::move(head.hidden);
  tr.prediction = std::move(head.prediction);
  return tr;
}

}  // namespace daf
