#include "support.hpp"

#include "cvc/audio/spectral.hpp"
#include "cvc/rng.hpp"

#include <cmath>
#include <numbers>

namespace cvc::test {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(CVC_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

audio::Waveform sine(double freq_hz, double seconds, int rate, double amplitude) {
  audio::Waveform w;
  w.sample_rate_hz = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * i / rate));
  return w;
}

audio::Waveform white_noise(double seconds, std::uint64_t seed, int rate, double amplitude) {
  Rng rng(seed);
  audio::Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (auto& s : w.samples) s = static_cast<float>(amplitude * (2.0 * uniform01(rng) - 1.0));
  return w;
}

namespace {

std::vector<double> magnitude_spectrum(const std::vector<float>& samples, int& n) {
  n = 1;
  while (n < static_cast<int>(samples.size())) n <<= 1;
  std::vector<double> frame(static_cast<std::size_t>(n), 0.0);
  const auto win = audio::hann_window(static_cast<int>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) frame[i] = samples[i] * win[i];
  std::vector<std::complex<double>> bins(static_cast<std::size_t>(n / 2 + 1));
  audio::RealFft fft(n);
  fft.forward(frame, bins);
  std::vector<double> mag(bins.size());
  for (std::size_t k = 0; k < bins.size(); ++k) mag[k] = std::abs(bins[k]);
  return mag;
}

}  // namespace

double dominant_frequency(const std::vector<float>& samples, int rate, double* bin_hz) {
  int n = 0;
  const auto mag = magnitude_spectrum(samples, n);
  std::size_t best = 1;
  for (std::size_t k = 1; k < mag.size(); ++k)
    if (mag[k] > mag[best]) best = k;
  if (bin_hz) *bin_hz = static_cast<double>(rate) / n;
  return static_cast<double>(best) * rate / n;
}

double spectral_centroid(const std::vector<float>& samples, int rate) {
  int n = 0;
  const auto mag = magnitude_spectrum(samples, n);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < mag.size(); ++k) {
    num += mag[k] * static_cast<double>(k) * rate / n;
    den += mag[k];
  }
  return num / den;
}

Tensor<double> random_tensor(int c, int h, int w, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Tensor<double> t(c, h, w);
  for (auto& v : t.data) v = scale * normal(rng);
  return t;
}

Tensor<float> random_tensorf(int c, int h, int w, std::uint64_t seed, double scale) {
  return tensor_cast<float>(random_tensor(c, h, w, seed, scale));
}

double rel_err(double a, double b, double tiny) {
  const double m = std::max(std::abs(a), std::abs(b));
  if (m < tiny) return 0.0;
  return std::abs(a - b) / m;
}

audio::MelSpectrogram mel_from(const RowMatrix<float>& values) {
  audio::MelSpectrogram m;
  m.values = values;
  return m;
}

}  // namespace cvc::test
