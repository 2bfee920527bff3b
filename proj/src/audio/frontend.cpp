#include "cvc/audio/frontend.hpp"

#include "cvc/audio/resample.hpp"
#include "cvc/audio/wav_io.hpp"
#include "cvc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cvc::audio {

Waveform load_and_resample(const std::filesystem::path& path, int target_rate) {
  DecodedAudio decoded = read_wav(path);
  if (decoded.samples.empty()) throw Error("audio_frontend", "EmptyAudio", path.string());
  for (float s : decoded.samples)
    if (!std::isfinite(s)) throw Error("audio_frontend", "UnreadableFile", path.string() + ": non-finite sample");

  Waveform w;
  w.sample_rate_hz = target_rate;
  w.samples = resample(decoded.samples, decoded.sample_rate_hz, target_rate);
  if (w.samples.empty()) throw Error("audio_frontend", "EmptyAudio", path.string());

  float peak = 0.0f;
  for (float s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0f)
    for (float& s : w.samples) s /= peak;
  return w;
}

void validate(const Waveform& w) {
  if (w.sample_rate_hz <= 0) throw Error("audio_frontend", "InvalidWaveform", "non-positive sample rate");
  for (float s : w.samples)
    if (!std::isfinite(s)) throw Error("audio_frontend", "InvalidWaveform", "non-finite sample");
}

MelSpectrogram extract_logmel(const Waveform& w, const MelConfig& cfg) {
  validate(w);
  if (w.sample_rate_hz != cfg.sample_rate_hz)
    throw Error("audio_frontend", "RateMismatch",
                std::to_string(w.sample_rate_hz) + " Hz input for a " + std::to_string(cfg.sample_rate_hz) + " Hz analysis");
  const int frames = frame_count(static_cast<long>(w.samples.size()), cfg.win_length(), cfg.hop_length());
  if (frames < 1)
    throw Error("audio_frontend", "TooShort",
                std::to_string(w.samples.size()) + " samples, need " + std::to_string(cfg.win_length()));

  const auto spec = stft(w.samples, cfg);
  const RowMatrix<double> magnitude = spec.cwiseAbs().transpose();  // bins x frames
  const RowMatrix<double> mel = mel_filterbank(cfg) * magnitude;

  MelSpectrogram m;
  m.frame_length_ms = cfg.frame_length_ms;
  m.frame_shift_ms = cfg.frame_shift_ms;
  m.values.resize(cfg.n_mels, frames);
  const double log_floor = std::log(cfg.amplitude_floor);
  for (int r = 0; r < cfg.n_mels; ++r)
    for (int t = 0; t < frames; ++t) {
      const double v = mel(r, t);
      m.values(r, t) = static_cast<float>(std::isfinite(v) && v > cfg.amplitude_floor ? std::log(v) : log_floor);
    }
  return m;
}

std::vector<double> frame_energies(const MelSpectrogram& m) {
  std::vector<double> e(static_cast<std::size_t>(m.frames()));
  for (int t = 0; t < m.frames(); ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < m.n_mels(); ++r) mx = std::max(mx, static_cast<double>(m.values(r, t)));
    double acc = 0.0;
    for (int r = 0; r < m.n_mels(); ++r) acc += std::exp(m.values(r, t) - mx);
    e[t] = mx + std::log(acc);
  }
  return e;
}

double db_to_nats(double db) { return db * std::log(10.0) / 20.0; }

MelSpectrogram apply_vad(const MelSpectrogram& m, const VadConfig& cfg) {
  if (cfg.min_speech_run_frames < 1)
    throw Error("audio_frontend", "InvalidConfig", "min_speech_run_frames must be >= 1");
  if (m.frames() < 1) throw Error("audio_frontend", "AllFramesRemoved", "empty spectrogram");

  const auto energy = frame_energies(m);
  const double reference = m.vad_reference.value_or(
      std::accumulate(energy.begin(), energy.end(), 0.0) / static_cast<double>(energy.size()));
  const double floor_energy = std::log(static_cast<double>(m.n_mels()) * cfg.amplitude_floor) + 1e-3;
  const double threshold = std::max(reference + db_to_nats(cfg.energy_threshold_db), floor_energy);

  std::vector<bool> keep(energy.size(), false);
  std::size_t t = 0;
  while (t < energy.size()) {
    if (!(energy[t] > threshold)) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < energy.size() && energy[end] > threshold) ++end;
    if (static_cast<int>(end - t) >= cfg.min_speech_run_frames)
      std::fill(keep.begin() + static_cast<long>(t), keep.begin() + static_cast<long>(end), true);
    t = end;
  }

  const auto kept = std::count(keep.begin(), keep.end(), true);
  if (kept == 0) throw Error("audio_frontend", "AllFramesRemoved", "no frame above the energy threshold");

  MelSpectrogram out;
  out.frame_length_ms = m.frame_length_ms;
  out.frame_shift_ms = m.frame_shift_ms;
  out.vad_reference = reference;
  out.values.resize(m.n_mels(), kept);
  int col = 0;
  for (int f = 0; f < m.frames(); ++f)
    if (keep[f]) out.values.col(col++) = m.values.col(f);
  return out;
}

int frames_for_duration(double duration_s, const MelConfig& cfg) {
  const auto samples = std::lround(duration_s * cfg.sample_rate_hz);
  return frame_count(samples, cfg.win_length(), cfg.hop_length());
}

std::variant<MelSpectrogram, Rejected> crop_or_reject(const MelSpectrogram& m, const CropSpec& spec, Rng& rng,
                                                      const MelConfig& cfg) {
  const int need = frames_for_duration(spec.duration_s, cfg);
  if (m.frames() < need || need < 1) return Rejected{m.frames(), need};
  int start = 0;
  if (spec.policy == CropPolicy::random_crop && m.frames() > need)
    start = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(m.frames() - need + 1)));
  MelSpectrogram out = m;
  out.values = m.values.middleCols(start, need);
  return out;
}

}  // namespace cvc::audio
