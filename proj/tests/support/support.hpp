#pragma once

#include "cvc/audio/frontend.hpp"
#include "cvc/model/generator.hpp"
#include "cvc/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cvc::test {

/// Fresh, empty directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

audio::Waveform sine(double freq_hz, double seconds, int rate = 24000, double amplitude = 0.5);
audio::Waveform white_noise(double seconds, std::uint64_t seed, int rate = 24000, double amplitude = 0.3);

/// Frequency of the largest-magnitude bin of a Hann-windowed FFT over the
/// whole signal, zero-padded to a power of two; resolution rate / n.
double dominant_frequency(const std::vector<float>& samples, int rate, double* bin_hz = nullptr);

/// Magnitude-weighted mean frequency of the whole-signal spectrum.
double spectral_centroid(const std::vector<float>& samples, int rate);

Tensor<double> random_tensor(int c, int h, int w, std::uint64_t seed, double scale = 1.0);
Tensor<float> random_tensorf(int c, int h, int w, std::uint64_t seed, double scale = 1.0);

/// Relative error |a-b| / max(|a|, |b|), 0 when both are below `tiny`.
double rel_err(double a, double b, double tiny = 1e-12);

audio::MelSpectrogram mel_from(const RowMatrix<float>& values);

}  // namespace cvc::test
