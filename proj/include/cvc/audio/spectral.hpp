#pragma once

#include "cvc/tensor.hpp"

#include <complex>
#include <memory>
#include <span>
#include <vector>

namespace cvc::audio {

/// Mel analysis parameters shared by the frontend, the Griffin-Lim fallback
/// and any external vocoder. Defaults match common 24 kHz vocoder front ends.
struct MelConfig {
  int sample_rate_hz = 24000;
  int n_fft = 1024;
  int frame_length_ms = 25;
  int frame_shift_ms = 10;
  int n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 12000.0;
  double amplitude_floor = 1e-5;

  int win_length() const { return sample_rate_hz * frame_length_ms / 1000; }
  int hop_length() const { return sample_rate_hz * frame_shift_ms / 1000; }
  int n_bins() const { return n_fft / 2 + 1; }

  bool operator==(const MelConfig&) const = default;
};

/// Number of frames for `n_samples` without centering; 0 if shorter than one window.
int frame_count(long n_samples, int win_length, int hop_length);

/// Periodic Hann window.
std::vector<double> hann_window(int length);

/// Slaney-style mel filter bank (n_mels x n_fft/2+1) with area normalization.
RowMatrix<double> mel_filterbank(const MelConfig& cfg);

/// Real FFT of fixed size backed by FFTW. Not copyable; each instance owns its plans.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const noexcept { return n_; }
  /// frame.size() == n; returns n/2+1 bins.
  void forward(std::span<const double> frame, std::span<std::complex<double>> bins);
  /// Unnormalized inverse: result is n * ifft.
  void inverse(std::span<const std::complex<double>> bins, std::span<double> frame);

 private:
  struct Plans;
  int n_;
  std::unique_ptr<Plans> plans_;
};

/// Complex STFT (frames x bins), windowed frames zero-padded to n_fft.
RowMatrix<std::complex<double>> stft(std::span<const float> samples, const MelConfig& cfg);

/// Weighted overlap-add inverse of stft(); output length (T-1)*hop + win.
std::vector<double> istft(const RowMatrix<std::complex<double>>& spec, const MelConfig& cfg);

}  // namespace cvc::audio
