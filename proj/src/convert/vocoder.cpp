#include "cvc/convert/vocoder.hpp"

#include "cvc/audio/corpus.hpp"
#include "cvc/audio/resample.hpp"
#include "cvc/error.hpp"
#include "cvc/rng.hpp"

#include <Eigen/QR>
#include <unistd.h>

#include <atomic>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <numbers>

namespace cvc::convert {
namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& detail) {
  throw Error("conversion_pipeline", kind, detail);
}

struct MelInverse {
  RowMatrix<double> pinv;  // (bins, n_mels)
};

const MelInverse& mel_inverse(const audio::MelConfig& cfg) {
  static std::mutex mu;
  static std::vector<std::pair<audio::MelConfig, std::unique_ptr<MelInverse>>> cache;
  std::lock_guard lock(mu);
  for (const auto& [c, inv] : cache)
    if (c == cfg) return *inv;
  auto inv = std::make_unique<MelInverse>();
  const Eigen::MatrixXd fb = audio::mel_filterbank(cfg);
  inv->pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  cache.emplace_back(cfg, std::move(inv));
  return *cache.back().second;
}

using ComplexFrames = RowMatrix<std::complex<double>>;

ComplexFrames analyze(const std::vector<double>& x, int frames, const audio::MelConfig& cfg,
                      const std::vector<double>& window, audio::RealFft& fft) {
  const int win = cfg.win_length();
  const int hop = cfg.hop_length();
  ComplexFrames spec(frames, cfg.n_bins());
  std::vector<double> buf(static_cast<std::size_t>(cfg.n_fft), 0.0);
  for (int t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int i = 0; i < win; ++i) buf[i] = x[static_cast<std::size_t>(t) * hop + i] * window[i];
    fft.forward(buf, {spec.row(t).data(), static_cast<std::size_t>(cfg.n_bins())});
  }
  return spec;
}

}  // namespace

VocoderKind parse_vocoder_kind(const std::string& s) {
  if (s == "griffin_lim" || s == "griffin_lim_fallback") return VocoderKind::griffin_lim_fallback;
  if (s == "external" || s == "external_neural") return VocoderKind::external_neural;
  throw UsageError("unknown vocoder '" + s + "' (expected griffin_lim or external)");
}

std::string to_string(VocoderKind k) {
  return k == VocoderKind::griffin_lim_fallback ? "griffin_lim" : "external";
}

audio::Waveform griffin_lim(const audio::MelSpectrogram& m, int iterations, const audio::MelConfig& cfg) {
  if (iterations < 1) throw UsageError("griffin_lim iterations must be >= 1");
  if (m.n_mels() != cfg.n_mels) fail("MelConfigMismatch", "spectrogram has " + std::to_string(m.n_mels()) + " bins");
  const int frames = m.frames();
  audio::Waveform out;
  out.sample_rate_hz = cfg.sample_rate_hz;
  if (frames == 0) return out;

  // Linear magnitudes (frames, bins); the floor maps to zero so silence stays silent.
  const auto& inv = mel_inverse(cfg);
  const Eigen::MatrixXd mel_amp =
      (m.values.cast<double>().array().exp() - cfg.amplitude_floor).cwiseMax(0.0).matrix();  // (n_mels, T)
  const RowMatrix<double> mag = (inv.pinv * mel_amp).cwiseMax(0.0).transpose();

  Rng rng(0x6c696d67ULL);
  ComplexFrames spec(frames, cfg.n_bins());
  for (Eigen::Index t = 0; t < spec.rows(); ++t)
    for (Eigen::Index k = 0; k < spec.cols(); ++k)
      spec(t, k) = std::polar(mag(t, k), 2.0 * std::numbers::pi * uniform01(rng));

  const auto window = audio::hann_window(cfg.win_length());
  audio::RealFft fft(cfg.n_fft);
  std::vector<double> x;
  for (int it = 0; it < iterations; ++it) {
    x = audio::istft(spec, cfg);
    const auto rebuilt = analyze(x, frames, cfg, window, fft);
    for (Eigen::Index t = 0; t < spec.rows(); ++t)
      for (Eigen::Index k = 0; k < spec.cols(); ++k) {
        const double a = std::abs(rebuilt(t, k));
        spec(t, k) = a > 1e-12 ? mag(t, k) * rebuilt(t, k) / a : std::complex<double>(mag(t, k), 0.0);
      }
  }
  x = audio::istft(spec, cfg);
  out.samples.assign(x.begin(), x.end());
  return out;
}

void check_mel_config(const VocoderHandle& vocoder, const audio::MelConfig& frontend) {
  if (!(vocoder.expected_mel_config == frontend))
    fail("MelConfigMismatch", "vocoder expects different mel parameters than the frontend");
}

audio::Waveform vocode(const audio::MelSpectrogram& m, const VocoderHandle& vocoder, const audio::MelConfig& frontend) {
  check_mel_config(vocoder, frontend);
  if (vocoder.kind == VocoderKind::griffin_lim_fallback) return griffin_lim(m, vocoder.griffin_lim_iterations, frontend);

  if (vocoder.endpoint.empty()) fail("VocoderUnavailable", "no external vocoder endpoint configured");
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(vocoder.endpoint, ec)) fail("VocoderUnavailable", "not found: " + vocoder.endpoint);

  static std::atomic<unsigned> counter{0};
  const auto tmp = fs::temp_directory_path() /
                   ("cvc_vocoder_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(tmp);
  const auto feats = tmp / "features.cvcf";
  const auto wav = tmp / "out.wav";
  audio::write_features(feats, m);
  const std::string cmd = "'" + vocoder.endpoint + "' '" + feats.string() + "' '" + wav.string() + "'";
  const int rc = std::system(cmd.c_str());
  if (rc != 0 || !fs::exists(wav)) {
    fs::remove_all(tmp, ec);
    fail("VocoderUnavailable", "external vocoder exited with status " + std::to_string(rc));
  }
  auto w = audio::load_and_resample(wav, frontend.sample_rate_hz);
  fs::remove_all(tmp, ec);
  return w;
}

}  // namespace cvc::convert
