#pragma once

#include "cvc/audio/spectral.hpp"
#include "cvc/rng.hpp"
#include "cvc/tensor.hpp"

#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

namespace cvc::audio {

inline constexpr int kTargetSampleRate = 24000;
inline constexpr int kMelBins = 80;

struct Waveform {
  std::vector<float> samples;
  int sample_rate_hz = kTargetSampleRate;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

/// Log-mel spectrogram, (n_mels, T) row-major, natural-log amplitude.
struct MelSpectrogram {
  RowMatrix<float> values;
  int frame_shift_ms = 10;
  int frame_length_ms = 25;
  /// Mean frame energy (nats) of the utterance before VAD; set by apply_vad so
  /// re-filtering uses the original reference level.
  std::optional<double> vad_reference;

  int n_mels() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

struct VadConfig {
  double energy_threshold_db = -40.0;
  int min_speech_run_frames = 1;
  /// Frames at this amplitude floor in every bin are silence regardless of the
  /// relative threshold.
  double amplitude_floor = 1e-5;
};

enum class CropPolicy { reject_short, random_crop };

struct CropSpec {
  double duration_s = 2.0;
  CropPolicy policy = CropPolicy::random_crop;
};

struct Rejected {
  int frames = 0;
  int required = 0;
};

/// Decodes, downmixes, resamples to `target_rate` and rescales if the peak exceeds 1.
/// Errors: audio_frontend.UnreadableFile, audio_frontend.EmptyAudio.
Waveform load_and_resample(const std::filesystem::path& path, int target_rate = kTargetSampleRate);

/// Validates finiteness and rate; throws audio_frontend.InvalidWaveform.
void validate(const Waveform& w);

/// Un-centered STFT -> mel filter bank on magnitudes -> ln(max(., floor)).
/// Throws audio_frontend.TooShort when fewer samples than one frame.
MelSpectrogram extract_logmel(const Waveform& w, const MelConfig& cfg = {});

/// Per-frame energy: log-sum-exp over mel bins.
std::vector<double> frame_energies(const MelSpectrogram& m);

/// Amplitude decibels to nats of the log-amplitude domain.
double db_to_nats(double db);

/// Keeps frames whose energy exceeds mean energy + threshold (and the all-floor
/// energy) and which sit in a passing run of at least min_speech_run_frames. Throws audio_frontend.AllFramesRemoved.
MelSpectrogram apply_vad(const MelSpectrogram& m, const VadConfig& cfg);

/// Frames spanned by `duration_s` at the given analysis parameters (198 for 2 s).
int frames_for_duration(double duration_s, const MelConfig& cfg = {});

/// A contiguous window of exactly frames_for_duration() frames, or Rejected.
/// reject_short takes the leading window; random_crop draws the start from rng.
std::variant<MelSpectrogram, Rejected> crop_or_reject(const MelSpectrogram& m, const CropSpec& spec, Rng& rng,
                                                      const MelConfig& cfg = {});

/// View of a spectrogram as a 1-channel (1, n_mels, T) tensor.
template <typename S>
Tensor<S> to_tensor(const MelSpectrogram& m) {
  Tensor<S> t(1, m.n_mels(), m.frames());
  for (int r = 0; r < m.n_mels(); ++r)
    for (int c = 0; c < m.frames(); ++c) t.at(0, r, c) = static_cast<S>(m.values(r, c));
  return t;
}

template <typename S>
MelSpectrogram from_tensor(const Tensor<S>& t) {
  MelSpectrogram m;
  m.values.resize(t.height, t.width);
  for (int r = 0; r < t.height; ++r)
    for (int c = 0; c < t.width; ++c) m.values(r, c) = static_cast<float>(t.at(0, r, c));
  return m;
}

}  // namespace cvc::audio
