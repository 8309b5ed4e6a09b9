#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "daf/model.hpp"

namespace daf {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::ordered_json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

/// Writes a checkpoint:
///   "DAFCKPT1" | u64 header length | JSON header | f64 values (little-endian)
/// The header holds the format version, the model config, the seed, an
/// optional `meta` object, and per tensor {name, shape, offset}, offset being
/// bytes from the start of the value block.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::ordered_json& meta = nlohmann::ordered_json::object());

struct Checkpoint {
  Model model;
  nlohmann::ordered_json meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace daf
