#pragma once

#include "cvc/nn/layers.hpp"

#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace cvc::model {

struct GeneratorConfig {
  int base_channels = 64;
  int n_resnet_blocks = 9;
  int n_downsample = 2;
  int kernel_size = 3;
  std::string padding_mode = "replication";
  nn::Norm norm = nn::Norm::instance;
  /// Adds the input to the output head (G(x) = x + head(...)).
  bool residual_output = false;

  /// The encoder holds the input block, the downsampling convs, and the first
  /// n_resnet_blocks/2 + 1 residual blocks (5 of 9 by default).
  int encoder_blocks() const { return n_resnet_blocks / 2 + 1; }
  int decoder_blocks() const { return n_resnet_blocks - encoder_blocks(); }
  /// Tapped encoder layers: 1 = input, 2 = input block, then one per
  /// downsampling conv, then one per encoder residual block.
  int encoder_layers() const { return 2 + n_downsample + encoder_blocks(); }
  int stride_product() const { return 1 << n_downsample; }

  /// Throws model_core.InvalidConfig.
  void validate() const;
};

/// Resnet-style spectrogram generator G = G_dec . G_enc with replication padding.
template <typename S>
class Generator {
 public:
  using FeatureHook = std::function<void(int layer, const Tensor<S>& stack)>;

  struct EncoderTrace {
    std::vector<Tensor<S>> taps;  // taps[l-1] is layer l
    typename nn::ConvBlock<S>::Cache stem;
    std::vector<typename nn::ConvBlock<S>::Cache> down;
    std::vector<typename nn::ResBlock<S>::Cache> blocks;
    int depth() const { return static_cast<int>(taps.size()); }
  };

  struct DecoderTrace {
    std::vector<typename nn::ResBlock<S>::Cache> blocks;
    std::vector<typename nn::ConvBlock<S>::Cache> up;
    typename nn::ConvBlock<S>::Cache head;
  };

  Generator() = default;
  explicit Generator(GeneratorConfig cfg);

  const GeneratorConfig& config() const noexcept { return cfg_; }

  void init(Rng& rng, double stddev = 0.02);
  /// Zeroes the output head and enables the residual path, so G(x) == x.
  void make_identity();

  /// Full forward pass; `hook` sees each encoder layer as it is computed.
  Tensor<S> forward(const Tensor<S>& x, const FeatureHook* hook = nullptr) const;

  /// Encoder layers 1..depth (all encoder layers when depth <= 0). Caches are
  /// kept when `trace_for_backward` is set.
  EncoderTrace encode(const Tensor<S>& x, int depth = 0, bool trace_for_backward = true,
                      const FeatureHook* hook = nullptr) const;
  /// Decoder on the last encoder tap of `enc`; `enc` must be full depth.
  Tensor<S> decode(const EncoderTrace& enc, DecoderTrace* trace) const;

  /// Gradient of the decoder input given dL/d(output).
  Tensor<S> decode_backward(const DecoderTrace& trace, const Tensor<S>& grad_out);
  /// Backpropagates `grad_top` (gradient at the deepest traced layer, may be
  /// empty) plus per-layer gradients `tap_grads` through the encoder,
  /// accumulating parameter gradients. Returns dL/dx when requested.
  Tensor<S> encode_backward(const EncoderTrace& trace, Tensor<S> grad_top, const std::map<int, Tensor<S>>& tap_grads,
                            bool need_input_grad);

  /// Channels of encoder layer l (1-based).
  int layer_channels(int layer) const;
  /// (height, width) of encoder layer l for an input of (height, width).
  std::pair<int, int> layer_extent(int layer, int height, int width) const;

  /// Throws model_core.ShapeMismatch unless both spatial dims are multiples of the stride product.
  void check_input(const Tensor<S>& x) const;

  nn::ParamRefs<S> parameters();
  nn::ParamRefs<S> head_parameters();

 private:
  GeneratorConfig cfg_;
  nn::ConvBlock<S> stem_;
  std::vector<nn::ConvBlock<S>> down_;
  std::vector<nn::ResBlock<S>> enc_blocks_;
  std::vector<nn::ResBlock<S>> dec_blocks_;
  std::vector<nn::ConvBlock<S>> up_;
  nn::ConvBlock<S> head_;
};

}  // namespace cvc::model
