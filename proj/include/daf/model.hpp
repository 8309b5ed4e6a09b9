#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "daf/data.hpp"
#include "daf/grad_check.hpp"
#include "daf/rng.hpp"
#include "daf/tensor.hpp"

namespace daf {

enum class EncoderKind { kLinear, kBiRecurrent };
enum class GateKind { kSoftmax3, kSigmoid2, kStaticConcat };
enum class OutputActivation { kScaledTanh, kLinear };
enum class Mode { kTrain, kEval };

std::string_view encoder_kind_name(EncoderKind k);
EncoderKind parse_encoder_kind(std::string_view s);
std::string_view gate_kind_name(GateKind k);
/// Accepts "softmax3"/"dynamic", "sigmoid2", "static"/"static_concat".
GateKind parse_gate_kind(std::string_view s);
std::string_view output_activation_name(OutputActivation a);
OutputActivation parse_output_activation(std::string_view s);

struct ModelConfig {
  Dims dims;
  std::size_t d_attn = 32;
  std::size_t d_hidden = 32;
  EncoderKind encoder = EncoderKind::kBiRecurrent;
  std::size_t encoder_hidden = 16;  // per direction
  GateKind gate = GateKind::kSoftmax3;
  double input_dropout = 0.2;
  OutputActivation output = OutputActivation::kScaledTanh;
  // Non-text modalities the model consumes. A reduced set shrinks the gate.
  ModalitySet modalities;
  std::uint64_t seed = 0;

  /// All problems found, empty when valid.
  std::vector<std::string> validate() const;
  std::size_t fused_width() const;
};

/// Named parameter list in a fixed order.
class ModelParams {
 public:
  ModelParams() = default;

  /// Glorot-uniform weights, zero biases, drawn from cfg.seed.
  static ModelParams init(const ModelConfig& cfg);

  std::vector<NamedTensor>& named() { return params_; }
  const std::vector<NamedTensor>& named() const { return params_; }
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  bool contains(std::string_view name) const;
  std::size_t count() const;  // total scalar parameters

  ModelParams clone() const;
  void zero_grad();

  void add(std::string name, Tensor value);

 private:
  std::vector<NamedTensor> params_;
};

/// Every intermediate of one forward pass, batched along the first axis.
struct ForwardTrace {
  Tensor text_proj;                  // B x d_attn
  std::optional<Tensor> audio_enc;   // B x T_a x d_attn
  std::optional<Tensor> video_enc;   // B x T_v x d_attn
  std::optional<Tensor> audio_attn;  // B x T_a
  std::optional<Tensor> video_attn;  // B x T_v
  std::optional<Tensor> audio_ctx;   // B x d_attn
  std::optional<Tensor> video_ctx;   // B x d_attn
  // softmax3: B x (1 + #present) over [text, audio?, video?].
  // sigmoid2: B x #present over [audio?, video?]. Absent for static fusion.
  std::optional<Tensor> gate;
  Tensor fused;       // B x fused_width
  Tensor hidden;      // B x d_hidden
  Tensor prediction;  // B
};

// Building blocks, exposed for testing. Weights follow the [out x in] layout.

struct RecurrentCell {
  Tensor w_x;  // 3H x in, gate order: reset, update, candidate
  Tensor b_x;  // 3H
  Tensor w_h;  // 3H x H
  Tensor b_h;  // 3H
};

/// Runs a gated recurrent cell over frames[B x T x in]; padded steps keep the
/// previous state. Returns states B x T x H.
Tensor run_recurrent(const Tensor& frames, const Mask& mask, const RecurrentCell& cell, bool reverse);

Tensor luong_scores(const Tensor& query, const Tensor& keys, const Tensor& w_score);

struct AttentionResult {
  Tensor weights;  // B x T
  Tensor context;  // B x d
};
/// score_t = q^T W s_t, masked softmax over t, context = sum_t alpha_t s_t.
AttentionResult luong_attention(const Tensor& query, const Tensor& keys, const Tensor& w_score, const Mask& mask);

/// relu(W_h z + b_h), then W_out h + b_out, optionally 3 * tanh(.).
struct HeadResult {
  Tensor hidden;
  Tensor prediction;  // B
};
HeadResult regression_head(const Tensor& z, const Tensor& w_h, const Tensor& b_h, const Tensor& w_out,
                           const Tensor& b_out, OutputActivation activation);

class Model {
 public:
  Model() = default;
  explicit Model(ModelConfig cfg);
  Model(ModelConfig cfg, ModelParams params);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// Train mode applies inverted input dropout and needs an RNG stream.
  ForwardTrace forward(const Batch& batch, Mode mode, Rng* dropout_rng = nullptr) const;

  Tensor encode_sequence(std::string_view modality, const SeqBatch& seq) const;

 private:
  ModelConfig cfg_;
  ModelParams params_;
};

}  // namespace daf
