#pragma once

#include <span>
#include <vector>

namespace cvc::audio {

/// Band-limited resampling with a Kaiser-windowed sinc kernel. Output length
/// is round(n * to_hz / from_hz); equal rates return the input unchanged.
std::vector<float> resample(std::span<const float> input, int from_hz, int to_hz);

}  // namespace cvc::audio
