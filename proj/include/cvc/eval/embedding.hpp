#pragma once

#include "cvc/audio/frontend.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace cvc::eval {

struct SpeakerEmbedding {
  std::vector<double> vector;
  std::string source_utterance_id;
};

/// Pluggable speaker embedder.
class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Adapter name and version, recorded in reports.
  virtual std::string identity() const = 0;
  virtual SpeakerEmbedding embed(const audio::Waveform& utterance, const std::string& utterance_id) const = 0;
  virtual SpeakerEmbedding embed_file(const std::filesystem::path& wav, const std::string& utterance_id) const;
};

/// Proxy embedder built on log-mel statistics: 32 pooled band means and 32
/// band standard deviations of frame-to-frame deltas, each half standardized,
/// then the 64-vector unit-normalized. Not a speaker-verification model.
class FallbackEmbedder final : public Embedder {
 public:
  static constexpr int kBands = 32;
  static constexpr int kDim = 2 * kBands;
  static constexpr double kMinDurationS = 0.1;

  std::string identity() const override { return "fallback-logmel-stats/1"; }
  SpeakerEmbedding embed(const audio::Waveform& utterance, const std::string& utterance_id) const override;
};

/// Runs `<command> <wav>` and reads whitespace-separated floats from its stdout.
class ExternalEmbedder final : public Embedder {
 public:
  explicit ExternalEmbedder(std::string command) : command_(std::move(command)) {}
  std::string identity() const override { return "external:" + command_; }
  SpeakerEmbedding embed(const audio::Waveform& utterance, const std::string& utterance_id) const override;
  SpeakerEmbedding embed_file(const std::filesystem::path& wav, const std::string& utterance_id) const override;

 private:
  std::string command_;
};

/// "fallback" or "external:<command>". Throws evaluation.EmbedderUnavailable.
std::unique_ptr<Embedder> make_embedder(const std::string& spec);

/// Throws evaluation.DimensionMismatch.
double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

/// Mean of unit embeddings, re-normalized. Throws evaluation.MissingReference when empty.
SpeakerEmbedding mean_embedding(const std::vector<SpeakerEmbedding>& embeddings, const std::string& id);

}  // namespace cvc::eval
