#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wdsm/models.hpp"

namespace wdsm {

struct NamedArray {
  std::string name;
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> values;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  ModelConfig model;
  nlohmann::json train = nlohmann::json::object();  // training configuration, informational
  std::vector<NamedArray> tensors;
};

inline constexpr int kCheckpointVersion = 1;

// WDSM1 layout:
//   "WDSM1\n"
//   one line of JSON: {version, config, train, tensors:[{name, shape, dtype, offset}], payload_bytes}
//   raw little-endian IEEE-754 payload; offsets are relative to its start.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint make_checkpoint(const ModelConfig& model, const ParamList<T>& params,
                           nlohmann::json train = nlohmann::json::object());

// Converts stored tensors to T (exact when the stored dtype is T) and checks
// them against the model layout.
template <typename T>
ParamList<T> params_from_checkpoint(const Checkpoint& checkpoint, bool requires_grad = false);

}  // namespace wdsm
