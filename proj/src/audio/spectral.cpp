#include "cvc/audio/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

namespace cvc::audio {
namespace {

// FFTW planning is not thread-safe.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz >= min_log_hz) return min_log_mel + std::log(hz / min_log_hz) / logstep;
  return hz / f_sp;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel >= min_log_mel) return min_log_hz * std::exp(logstep * (mel - min_log_mel));
  return f_sp * mel;
}

}  // namespace

int frame_count(long n_samples, int win_length, int hop_length) {
  if (n_samples < win_length) return 0;
  return 1 + static_cast<int>((n_samples - win_length) / hop_length);
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  return w;
}

RowMatrix<double> mel_filterbank(const MelConfig& cfg) {
  const int bins = cfg.n_bins();
  RowMatrix<double> fb = RowMatrix<double>::Zero(cfg.n_mels, bins);
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double enorm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate_hz / cfg.n_fft;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      fb(m, k) = std::max(0.0, std::min(up, down)) * enorm;
    }
  }
  return fb;
}

struct RealFft::Plans {
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
};

RealFft::RealFft(int n) : n_(n), plans_(std::make_unique<Plans>()) {
  std::lock_guard lock(plan_mutex());
  plans_->real = fftw_alloc_real(static_cast<std::size_t>(n));
  plans_->cplx = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  plans_->fwd = fftw_plan_dft_r2c_1d(n, plans_->real, plans_->cplx, FFTW_ESTIMATE);
  plans_->inv = fftw_plan_dft_c2r_1d(n, plans_->cplx, plans_->real, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(plan_mutex());
  fftw_destroy_plan(plans_->fwd);
  fftw_destroy_plan(plans_->inv);
  fftw_free(plans_->real);
  fftw_free(plans_->cplx);
}

void RealFft::forward(std::span<const double> frame, std::span<std::complex<double>> bins) {
  std::copy(frame.begin(), frame.end(), plans_->real);
  fftw_execute(plans_->fwd);
  for (int k = 0; k <= n_ / 2; ++k) bins[k] = {plans_->cplx[k][0], plans_->cplx[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> bins, std::span<double> frame) {
  for (int k = 0; k <= n_ / 2; ++k) {
    plans_->cplx[k][0] = bins[k].real();
    plans_->cplx[k][1] = bins[k].imag();
  }
  fftw_execute(plans_->inv);
  std::copy(plans_->real, plans_->real + n_, frame.begin());
}

RowMatrix<std::complex<double>> stft(std::span<const float> samples, const MelConfig& cfg) {
  const int win = cfg.win_length();
  const int hop = cfg.hop_length();
  const int frames = frame_count(static_cast<long>(samples.size()), win, hop);
  const auto window = hann_window(win);
  RealFft fft(cfg.n_fft);
  RowMatrix<std::complex<double>> spec(frames, cfg.n_bins());
  std::vector<double> buf(static_cast<std::size_t>(cfg.n_fft));
  for (int t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int i = 0; i < win; ++i) buf[i] = samples[static_cast<std::size_t>(t) * hop + i] * window[i];
    fft.forward(buf, {spec.row(t).data(), static_cast<std::size_t>(cfg.n_bins())});
  }
  return spec;
}

std::vector<double> istft(const RowMatrix<std::complex<double>>& spec, const MelConfig& cfg) {
  const int win = cfg.win_length();
  const int hop = cfg.hop_length();
  const auto frames = static_cast<int>(spec.rows());
  if (frames == 0) return {};
  const auto window = hann_window(win);
  RealFft fft(cfg.n_fft);
  const std::size_t len = static_cast<std::size_t>(frames - 1) * hop + win;
  std::vector<double> out(len, 0.0), norm(len, 0.0), buf(static_cast<std::size_t>(cfg.n_fft));
  for (int t = 0; t < frames; ++t) {
    fft.inverse({spec.row(t).data(), static_cast<std::size_t>(cfg.n_bins())}, buf);
    for (int i = 0; i < win; ++i) {
      const std::size_t j = static_cast<std::size_t>(t) * hop + i;
      out[j] += buf[i] / cfg.n_fft * window[i];
      norm[j] += window[i] * window[i];
    }
  }
  for (std::size_t j = 0; j < len; ++j)
    if (norm[j] > 1e-8) out[j] /= norm[j];
  return out;
}

}  // namespace cvc::audio
