#pragma once

#include "cvc/audio/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace cvc::cli {

/// One synthetic voice: harmonic stack under moving vowel formants.
struct ToyVoice {
  std::string speaker_id;
  std::string gender;  // "M" or "F"
  double f0_min_hz = 0.0;
  double f0_max_hz = 0.0;
  double tilt_db_per_octave = 0.0;
  double formant_scale = 1.0;
};

ToyVoice toy_voice_a();  // low, steep tilt
ToyVoice toy_voice_b();  // high, flat tilt, scaled formants

struct ToyCorpusOptions {
  int clips_per_speaker = 50;
  double clip_duration_s = 2.0;
  std::uint64_t seed = 0;
  audio::BuildOptions build;
};

/// Deterministic clip for `voice`; `content_seed` picks the vowel sequence and
/// intonation, so equal seeds across voices give parallel content.
audio::Waveform synthesize_clip(const ToyVoice& voice, double duration_s, std::uint64_t content_seed,
                                std::uint64_t voice_seed);

struct ToyCorpus {
  audio::BuildReport a;
  audio::BuildReport b;
  std::filesystem::path a_dir;
  std::filesystem::path b_dir;
};

/// Writes out_dir/wav/<speaker>/*.wav and featurized corpora out_dir/<speaker>/.
/// Speaker A gets clips for content seeds [0, N), speaker B for [N, 2N), so the
/// two domains are non-parallel.
ToyCorpus make_toy_corpus(const std::filesystem::path& out_dir, const ToyCorpusOptions& options);

}  // namespace cvc::cli
