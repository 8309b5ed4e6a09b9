#include "daf/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "daf/error.hpp"

namespace daf {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {
constexpr char kMagic[8] = {'D', 'A', 'F', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& os, double d) { write_u64(os, std::bit_cast<std::uint64_t>(d)); }
double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }
}  // namespace

ojson to_json(const ModelConfig& cfg) {
  ojson j;
  j["d_text"] = cfg.dims.text;
  j["d_audio"] = cfg.dims.audio;
  j["d_video"] = cfg.dims.video;
  j["d_attn"] = cfg.d_attn;
  j["d_hidden"] = cfg.d_hidden;
  j["encoder"] = encoder_kind_name(cfg.encoder);
  j["encoder_hidden"] = cfg.encoder_hidden;
  j["fusion"] = gate_kind_name(cfg.gate);
  j["input_dropout"] = cfg.input_dropout;
  j["output_activation"] = output_activation_name(cfg.output);
  j["modalities"] = modality_set_name(cfg.modalities);
  j["seed"] = cfg.seed;
  return j;
}

ModelConfig model_config_from_json(const ojson& j) {
  try {
    ModelConfig cfg;
    cfg.dims = {j.at("d_text").get<std::size_t>(), j.at("d_audio").get<std::size_t>(),
                j.at("d_video").get<std::size_t>()};
    cfg.d_attn = j.at("d_attn").get<std::size_t>();
    cfg.d_hidden = j.at("d_hidden").get<std::size_t>();
    cfg.encoder = parse_encoder_kind(j.at("encoder").get<std::string>());
    cfg.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    cfg.gate = parse_gate_kind(j.at("fusion").get<std::string>());
    cfg.input_dropout = j.at("input_dropout").get<double>();
    cfg.output = parse_output_activation(j.at("output_activation").get<std::string>());
    cfg.modalities = parse_modality_set(j.at("modalities").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model config: ") + e.what());
  }
}

void save_checkpoint(const fs::path& path, const Model& model, const ojson& meta) {
  ojson header;
  header["format"] = "daf-checkpoint";
  header["format_version"] = kCheckpointFormatVersion;
  header["config"] = to_json(model.config());
  header["seed"] = model.config().seed;
  header["meta"] = meta;
  header["tensors"] = ojson::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.params().named()) {
    header["tensors"].push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.size() * sizeof(double);
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kMagic, 8);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.params().named()) {
    for (double v : p.value.data()) write_f64(os, v);
  }
  if (!os) throw DataError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path.string() + " is not a checkpoint file");
  }
  const auto len = read_u64(is);
  if (len > (1ULL << 30)) throw DataError("checkpoint: implausible header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint: truncated header");

  ojson header;
  try {
    header = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointFormatVersion) {
    throw DataError("checkpoint: unsupported format version");
  }
  ModelConfig cfg = model_config_from_json(header.at("config"));
  ModelParams params;
  for (const auto& t : header.at("tensors")) {
    Shape shape = t.at("shape").get<Shape>();
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = read_f64(is);
    params.add(t.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values)).set_requires_grad());
  }
  return {Model(std::move(cfg), std::move(params)), header.value("meta", ojson::object())};
}

}  // namespace daf
