#pragma once

#include "cvc/audio/corpus.hpp"
#include "cvc/convert/vocoder.hpp"
#include "cvc/model/generator.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace cvc::convert {

/// Inference-side view of a checkpoint: the generator and the normalization
/// statistics. Projection heads and the discriminator are never loaded.
struct ConversionModel {
  model::Generator<float> generator;
  audio::NormStats source_stats;
  audio::NormStats target_stats;
  audio::MelConfig mel;

  static ConversionModel load(const std::filesystem::path& checkpoint);
};

/// Normalized-domain generator pass on a raw log-mel; frame count is preserved.
audio::MelSpectrogram convert_mel(const ConversionModel& model, const audio::MelSpectrogram& source);

audio::Waveform convert(const audio::Waveform& utterance, const ConversionModel& model, const VocoderHandle& vocoder);

struct ManifestItem {
  std::string utterance_id;
  std::string speaker_id;
  std::filesystem::path source_path;
  std::filesystem::path output_path;
  double duration_s = 0.0;
};

struct ManifestFailure {
  std::string utterance_id;
  std::filesystem::path source_path;
  std::string error;
};

struct Manifest {
  std::vector<ManifestItem> items;
  std::vector<ManifestFailure> failures;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& file);
Manifest read_manifest(const std::filesystem::path& file);

/// Converts each entry's source WAV into out_dir/<utterance_id>.wav and writes
/// out_dir/manifest.json. Per-item errors are recorded, not thrown.
Manifest batch_convert(const audio::CorpusIndex& index, const ConversionModel& model, const VocoderHandle& vocoder,
                       const std::filesystem::path& out_dir, int threads = 1);

}  // namespace cvc::convert
