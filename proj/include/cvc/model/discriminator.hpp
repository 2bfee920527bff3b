#pragma once

#include "cvc/nn/layers.hpp"

#include <vector>

namespace cvc::model {

struct DiscriminatorConfig {
  int n_layers = 3;
  int base_channels = 64;
  /// Normalization after every conv but the first and the last.
  nn::Norm norm = nn::Norm::instance;

  void validate() const;
  /// Product of the strided layers' strides.
  int total_stride() const { return 1 << n_layers; }
};

/// PatchGAN: n_layers stride-2 convs, one stride-1 conv, a 1-channel logit conv.
/// All convs 3x3 with replication padding; LeakyReLU(0.2) between them.
template <typename S>
class Discriminator {
 public:
  struct Trace {
    std::vector<typename nn::ConvBlock<S>::Cache> layers;
  };

  Discriminator() = default;
  explicit Discriminator(DiscriminatorConfig cfg);

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  void init(Rng& rng, double stddev = 0.02);

  /// Logit map (1, h', w'). Throws model_core.TooShort when either axis is
  /// shorter than the total stride.
  Tensor<S> forward(const Tensor<S>& m, Trace* trace = nullptr) const;
  Tensor<S> backward(const Trace& trace, const Tensor<S>& grad_logits, bool need_input_grad, bool accumulate);

  /// Logit-map extent for an input extent, by the per-layer recurrence.
  std::pair<int, int> output_extent(int height, int width) const;

  nn::ParamRefs<S> parameters();

 private:
  DiscriminatorConfig cfg_;
  std::vector<nn::ConvBlock<S>> layers_;
};

}  // namespace cvc::model
