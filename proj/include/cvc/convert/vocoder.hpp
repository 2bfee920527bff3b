#pragma once

#include "cvc/audio/frontend.hpp"

#include <string>

namespace cvc::convert {

enum class VocoderKind { griffin_lim_fallback, external_neural };

VocoderKind parse_vocoder_kind(const std::string& s);
std::string to_string(VocoderKind k);

struct VocoderHandle {
  VocoderKind kind = VocoderKind::griffin_lim_fallback;
  /// Executable for external_neural, invoked as `<endpoint> <features.cvcf> <out.wav>`.
  std::string endpoint;
  audio::MelConfig expected_mel_config;
  int griffin_lim_iterations = 32;
};

/// Phase reconstruction from a natural-log mel spectrogram. Mel amplitudes are
/// mapped to linear magnitudes with the clamped pseudo-inverse of the filter bank.
audio::Waveform griffin_lim(const audio::MelSpectrogram& m, int iterations, const audio::MelConfig& cfg = {});

/// Throws conversion_pipeline.MelConfigMismatch when the handle expects different
/// mel parameters than `frontend`, conversion_pipeline.VocoderUnavailable when the
/// external vocoder cannot be run.
audio::Waveform vocode(const audio::MelSpectrogram& m, const VocoderHandle& vocoder, const audio::MelConfig& frontend);

void check_mel_config(const VocoderHandle& vocoder, const audio::MelConfig& frontend);

}  // namespace cvc::convert
