#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace cvc::audio {

struct DecodedAudio {
  std::vector<float> samples;  // mono, downmixed by channel averaging
  int sample_rate_hz = 0;
  int source_channels = 0;
};

/// Decodes RIFF/WAVE: integer PCM 8/16/24/32-bit, IEEE float 32/64-bit, and
/// WAVE_FORMAT_EXTENSIBLE wrappers of those. Throws audio_frontend.UnreadableFile.
DecodedAudio read_wav(const std::filesystem::path& path);

/// Writes mono 32-bit float PCM.
void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate_hz);

}  // namespace cvc::audio
