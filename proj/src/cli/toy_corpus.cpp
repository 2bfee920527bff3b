#include "cvc/cli/toy_corpus.hpp"

#include "cvc/audio/wav_io.hpp"
#include "cvc/rng.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace cvc::cli {
namespace {

struct Vowel {
  double f1, f2, f3;
};

// Rough adult-male formant targets.
constexpr std::array<Vowel, 6> kVowels = {{{730, 1090, 2440},
                                           {270, 2290, 3010},
                                           {530, 1840, 2480},
                                           {570, 840, 2410},
                                           {300, 870, 2240},
                                           {660, 1720, 2410}}};

constexpr std::array<double, 3> kBandwidths = {90.0, 110.0, 160.0};

double resonance(double f, double center, double bw) {
  const double d = (f - center) / bw;
  return 1.0 / (1.0 + d * d);
}

}  // namespace

ToyVoice toy_voice_a() { return {"spk_a", "M", 100.0, 140.0, -12.0, 1.0}; }
ToyVoice toy_voice_b() { return {"spk_b", "F", 200.0, 280.0, -6.0, 1.15}; }

audio::Waveform synthesize_clip(const ToyVoice& voice, double duration_s, std::uint64_t content_seed,
                                std::uint64_t voice_seed) {
  constexpr int kRate = audio::kTargetSampleRate;
  constexpr int kBlock = 120;  // control-rate update, 5 ms
  constexpr double kMaxHz = 11000.0;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kRate));

  Rng content(content_seed * 0x9e3779b97f4a7c15ULL + 1);
  Rng vrng(voice_seed * 0xbf58476d1ce4e5b9ULL + content_seed + 7);

  // Vowel path: 4-7 segments with smooth transitions.
  const int segments = 4 + static_cast<int>(uniform_index(content, 4));
  std::vector<Vowel> path;
  for (int i = 0; i < segments; ++i) path.push_back(kVowels[uniform_index(content, kVowels.size())]);
  const double glide = uniform01(content) * 0.2 - 0.1;
  const double vib_hz = 4.0 + 2.0 * uniform01(content);
  const double f0_base = voice.f0_min_hz + (voice.f0_max_hz - voice.f0_min_hz) * (0.25 + 0.5 * uniform01(vrng));

  audio::Waveform w;
  w.samples.assign(n, 0.0f);
  std::vector<double> phase(static_cast<std::size_t>(kMaxHz / voice.f0_min_hz) + 2, 0.0);
  std::vector<double> amp(phase.size(), 0.0);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const double t = static_cast<double>(start) / static_cast<double>(n);
    const double pos = t * (segments - 1);
    const int seg = std::min(segments - 2, static_cast<int>(pos));
    const double frac = pos - seg;
    const double s = frac * frac * (3.0 - 2.0 * frac);
    const Vowel& v0 = path[static_cast<std::size_t>(seg)];
    const Vowel& v1 = path[static_cast<std::size_t>(seg + 1)];
    const std::array<double, 3> formants = {(v0.f1 + s * (v1.f1 - v0.f1)) * voice.formant_scale,
                                            (v0.f2 + s * (v1.f2 - v0.f2)) * voice.formant_scale,
                                            (v0.f3 + s * (v1.f3 - v0.f3)) * voice.formant_scale};
    const double time_s = static_cast<double>(start) / kRate;
    const double f0 = f0_base * (1.0 + glide * (t - 0.5)) * (1.0 + 0.02 * std::sin(2.0 * std::numbers::pi * vib_hz * time_s));
    const std::size_t harmonics = std::min(phase.size(), static_cast<std::size_t>(kMaxHz / f0));
    for (std::size_t h = 1; h <= harmonics; ++h) {
      const double f = f0 * static_cast<double>(h);
      double env = 0.02;
      for (std::size_t k = 0; k < 3; ++k) env += resonance(f, formants[k], kBandwidths[k] * voice.formant_scale) / (1.0 + k);
      amp[h - 1] = env * std::pow(10.0, voice.tilt_db_per_octave * std::log2(f / 100.0) / 20.0);
    }
    for (std::size_t h = harmonics; h < amp.size(); ++h) amp[h] = 0.0;
    const std::size_t stop = std::min(n, start + kBlock);
    for (std::size_t i = start; i < stop; ++i) {
      double acc = 0.0;
      for (std::size_t h = 0; h < harmonics; ++h) {
        phase[h] += 2.0 * std::numbers::pi * f0 * static_cast<double>(h + 1) / kRate;
        acc += amp[h] * std::sin(phase[h]);
      }
      w.samples[i] = static_cast<float>(acc);
    }
    for (auto& p : phase) p = std::fmod(p, 2.0 * std::numbers::pi);
  }

  float peak = 0.0f;
  for (float x : w.samples) peak = std::max(peak, std::abs(x));
  const auto ramp = static_cast<std::size_t>(0.005 * kRate);
  for (std::size_t i = 0; i < n; ++i) {
    double g = peak > 0.0f ? 0.5 / peak : 0.0;
    if (i < ramp) g *= static_cast<double>(i) / ramp;
    if (n - 1 - i < ramp) g *= static_cast<double>(n - 1 - i) / ramp;
    w.samples[i] = static_cast<float>(w.samples[i] * g + 1e-4 * normal(vrng));
  }
  return w;
}

ToyCorpus make_toy_corpus(const std::filesystem::path& out_dir, const ToyCorpusOptions& options) {
  ToyCorpus corpus;
  const std::array<ToyVoice, 2> voices = {toy_voice_a(), toy_voice_b()};
  for (std::size_t v = 0; v < voices.size(); ++v) {
    const auto wav_dir = out_dir / "wav" / voices[v].speaker_id;
    std::filesystem::create_directories(wav_dir);
    std::vector<audio::WavSource> sources;
    for (int i = 0; i < options.clips_per_speaker; ++i) {
      const auto content_seed = options.seed * 1000003ULL + v * static_cast<std::uint64_t>(options.clips_per_speaker) +
                                static_cast<std::uint64_t>(i);
      const auto clip = synthesize_clip(voices[v], options.clip_duration_s, content_seed, options.seed + v);
      char name[16];
      std::snprintf(name, sizeof name, "%03d.wav", i);
      const auto path = wav_dir / name;
      audio::write_wav(path, clip.samples, clip.sample_rate_hz);
      sources.push_back({path, voices[v].speaker_id});
    }
    const auto dir = out_dir / voices[v].speaker_id;
    auto report = audio::build_corpus(sources, dir, options.build);
    (v == 0 ? corpus.a : corpus.b) = std::move(report);
    (v == 0 ? corpus.a_dir : corpus.b_dir) = dir;
  }
  return corpus;
}

}  // namespace cvc::cli
