#include "cvc/audio/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cvc::audio {
namespace {

constexpr double kKaiserBeta = 8.6;
constexpr int kZeroCrossings = 16;
constexpr double kRolloff = 0.95;

double kaiser(double x, double beta) {
  // x in [-1, 1]
  if (std::abs(x) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

}  // namespace

std::vector<float> resample(std::span<const float> input, int from_hz, int to_hz) {
  if (from_hz == to_hz || input.empty()) return {input.begin(), input.end()};

  const double ratio = static_cast<double>(to_hz) / from_hz;
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(input.size()) * ratio));
  // Cutoff relative to the input Nyquist.
  const double cutoff = std::min(1.0, ratio) * kRolloff;
  const int half = static_cast<int>(std::ceil(kZeroCrossings / cutoff));
  const auto n_in = static_cast<long>(input.size());

  std::vector<float> out(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const long center = static_cast<long>(std::floor(t));
    double acc = 0.0;
    for (long k = center - half + 1; k <= center + half; ++k) {
      if (k < 0 || k >= n_in) continue;
      const double d = t - static_cast<double>(k);
      const double arg = std::numbers::pi * cutoff * d;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      acc += input[static_cast<std::size_t>(k)] * cutoff * sinc * kaiser(d / half, kKaiserBeta);
    }
    out[n] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace cvc::audio
