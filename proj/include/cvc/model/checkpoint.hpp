#pragma once

#include "cvc/model/discriminator.hpp"
#include "cvc/model/generator.hpp"
#include "cvc/model/projection.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace cvc::model {

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

/// Single-file checkpoint: "CVCK", u32 version, u64 metadata length, metadata
/// JSON, u32 tensor count, then per tensor: u32 name length, name, u32 rank,
/// u32 dims, float32 little-endian payload.
struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  void add(const std::string& name, const std::vector<int>& shape, const std::vector<float>& data);
};

inline constexpr std::uint32_t kArchiveVersion = 1;

void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws model_core.CorruptCheckpoint.
Archive read_archive(const std::filesystem::path& path);

nlohmann::json to_json(const GeneratorConfig& cfg);
nlohmann::json to_json(const DiscriminatorConfig& cfg);
nlohmann::json to_json(const ProjectionConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);
ProjectionConfig projection_config_from_json(const nlohmann::json& j);

/// Appends every parameter under its own name.
void store_params(Archive& archive, const nn::ParamRefs<float>& params);
/// Fills every parameter from the archive; throws model_core.CorruptCheckpoint
/// on a missing tensor or shape mismatch.
void load_params(const Archive& archive, const nn::ParamRefs<float>& params);

/// Generator alone, from metadata["generator"] and the "G." tensors.
Generator<float> load_generator(const Archive& archive);

}  // namespace cvc::model
