#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xva/autoencoder.hpp"
#include "xva/classifier.hpp"
#include "xva/layers.hpp"

namespace xva {

enum class ModelKind : std::uint8_t { kAutoencoder = 0, kPerceptual = 1, kClassifier = 2 };

std::string_view model_kind_name(ModelKind kind);

struct LayerRecord {
  LayerKind kind = LayerKind::kConv2d;
  std::vector<std::uint32_t> geometry;
  std::vector<Tensor> params;

  bool operator==(const LayerRecord&) const = default;
};

/// Serialized model: kind, a flat key=value config echo, and layer records
/// in model order. Parameters are stored as 32-bit floats.
struct Checkpoint {
  ModelKind kind = ModelKind::kAutoencoder;
  std::map<std::string, std::string> config;
  std::vector<LayerRecord> layers;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError("checkpoint not found: <path>") when the file is missing.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model <-> checkpoint conversions. `extra` entries are echoed into the
/// config block next to the model's own keys. Loading rebuilds the model
/// from the config and requires every record to match its geometry.
Checkpoint to_checkpoint(const AEModel<float>& model,
                         const std::map<std::string, std::string>& extra = {});
Checkpoint to_checkpoint(const PerceptualExtractor<float>& phi,
                         const std::map<std::string, std::string>& extra = {});
Checkpoint to_checkpoint(const ClassifierModel<float>& model,
                         const std::map<std::string, std::string>& extra = {});

AEModel<float> ae_from_checkpoint(const Checkpoint& ckpt);
PerceptualExtractor<float> perceptual_from_checkpoint(const Checkpoint& ckpt);
ClassifierModel<float> classifier_from_checkpoint(const Checkpoint& ckpt);

AEConfig ae_config_from(const std::map<std::string, std::string>& config);
ClassifierConfig classifier_config_from(const std::map<std::string, std::string>& config);

}  // namespace xva
