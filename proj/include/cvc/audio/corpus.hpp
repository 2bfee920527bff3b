#pragma once

#include "cvc/audio/frontend.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace cvc::audio {

/// CVCF feature file: 16-byte header ("CVCF", u32 version, u32 n_mels, u32 T)
/// followed by little-endian float32 values, row-major (n_mels, T).
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

void write_features(const std::filesystem::path& path, const MelSpectrogram& m);
MelSpectrogram read_features(const std::filesystem::path& path);

struct CorpusEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::filesystem::path path;  // feature file, absolute once loaded
  int frames = 0;
  std::filesystem::path wav;   // source audio, if known
};

struct CorpusIndex {
  std::filesystem::path root;
  std::vector<CorpusEntry> entries;

  std::vector<std::string> speakers() const;
};

/// index.json: array of {utterance_id, speaker_id, path, T, wav}; paths relative to the corpus root.
void write_index(const CorpusIndex& index, const std::filesystem::path& file);
CorpusIndex read_index(const std::filesystem::path& file);

/// Per-mel-bin mean/std over every frame of a corpus.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  long frames = 0;

  MelSpectrogram normalize(const MelSpectrogram& m) const;
  MelSpectrogram denormalize(const MelSpectrogram& m) const;
};

nlohmann::json to_json(const NormStats& stats);
/// Throws nlohmann::json::exception on malformed input.
NormStats norm_stats_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MelConfig& cfg);
MelConfig mel_config_from_json(const nlohmann::json& j);

NormStats compute_norm_stats(const std::vector<MelSpectrogram>& utterances);
void write_norm_stats(const NormStats& stats, const std::filesystem::path& file);
NormStats read_norm_stats(const std::filesystem::path& file);

struct WavSource {
  std::filesystem::path wav;
  std::string speaker_id;
};

struct BuildOptions {
  MelConfig mel;
  VadConfig vad;
  double min_duration_s = 2.0;
};

struct BuildReport {
  CorpusIndex index;
  NormStats stats;
  std::vector<std::pair<std::string, std::string>> skipped;  // (wav path, reason)
};

/// Featurizes every source into `out_dir` (features/, index.json, norm_stats.json).
/// Utterances that fail decoding, lose all frames to VAD, or are shorter than
/// min_duration_s after VAD are skipped and reported, not fatal.
BuildReport build_corpus(const std::vector<WavSource>& sources, const std::filesystem::path& out_dir,
                         const BuildOptions& options);

/// Loads the corpus at `dir` (dir/index.json).
CorpusIndex load_corpus(const std::filesystem::path& dir);
NormStats load_corpus_stats(const std::filesystem::path& dir);

/// *.wav under `dir`, sorted; the speaker id is the immediate parent directory name.
std::vector<WavSource> discover_wavs(const std::filesystem::path& dir, const std::string& speaker_override = {});

}  // namespace cvc::audio
