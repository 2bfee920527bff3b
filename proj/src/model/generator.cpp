#include "cvc/model/generator.hpp"

#include "cvc/error.hpp"

namespace cvc::model {

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error("model_core", "InvalidConfig", why); };
  if (base_channels < 1) fail("base_channels must be positive");
  if (n_resnet_blocks < 1) fail("n_resnet_blocks must be >= 1");
  if (n_downsample < 1) fail("n_downsample must be positive");
  if (kernel_size != 3) fail("kernel_size must be 3");
  if (padding_mode != "replication") fail("padding_mode must be replication");
}

template <typename S>
Generator<S>::Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  using nn::Activation;
  const int c = cfg_.base_channels;
  stem_ = nn::ConvBlock<S>("G.enc.stem", 1, c, 1, cfg_.norm, Activation::relu);
  int ch = c;
  for (int i = 0; i < cfg_.n_downsample; ++i) {
    down_.emplace_back("G.enc.down" + std::to_string(i), ch, ch * 2, 2, cfg_.norm, Activation::relu);
    ch *= 2;
  }
  for (int i = 0; i < cfg_.encoder_blocks(); ++i)
    enc_blocks_.emplace_back("G.enc.block" + std::to_string(i), ch, cfg_.norm);
  for (int i = 0; i < cfg_.decoder_blocks(); ++i)
    dec_blocks_.emplace_back("G.dec.block" + std::to_string(i), ch, cfg_.norm);
  for (int i = 0; i < cfg_.n_downsample; ++i) {
    up_.emplace_back("G.dec.up" + std::to_string(i), ch, ch / 2, 1, cfg_.norm, Activation::relu, true);
    ch /= 2;
  }
  head_ = nn::ConvBlock<S>("G.dec.head", ch, 1, 1, nn::Norm::none, Activation::none);
}

template <typename S>
void Generator<S>::init(Rng& rng, double stddev) {
  stem_.init(rng, stddev);
  for (auto& b : down_) b.init(rng, stddev);
  for (auto& b : enc_blocks_) b.init(rng, stddev);
  for (auto& b : dec_blocks_) b.init(rng, stddev);
  for (auto& b : up_) b.init(rng, stddev);
  head_.init(rng, stddev);
}

template <typename S>
void Generator<S>::make_identity() {
  cfg_.residual_output = true;
  for (auto* p : head_parameters()) std::fill(p->value.begin(), p->value.end(), S(0));
}

template <typename S>
void Generator<S>::check_input(const Tensor<S>& x) const {
  const int k = cfg_.stride_product();
  if (x.channels != 1 || x.height % k != 0 || x.width % k != 0 || x.height == 0 || x.width == 0)
    throw Error("model_core", "ShapeMismatch",
                "input (" + std::to_string(x.height) + ", " + std::to_string(x.width) +
                    ") is not a multiple of the stride product " + std::to_string(k));
}

template <typename S>
typename Generator<S>::EncoderTrace Generator<S>::encode(const Tensor<S>& x, int depth, bool trace_for_backward,
                                                         const FeatureHook* hook) const {
  check_input(x);
  const int total = cfg_.encoder_layers();
  if (depth <= 0 || depth > total) depth = total;
  EncoderTrace tr;
  auto tap = [&](Tensor<S> t) {
    if (hook) (*hook)(static_cast<int>(tr.taps.size()) + 1, t);
    tr.taps.push_back(std::move(t));
  };
  tap(x);
  if (depth == 1) return tr;
  tap(stem_.forward(x, trace_for_backward ? &tr.stem : nullptr));
  for (std::size_t i = 0; i < down_.size() && tr.depth() < depth; ++i) {
    typename nn::ConvBlock<S>::Cache cache;
    tap(down_[i].forward(tr.taps.back(), trace_for_backward ? &cache : nullptr));
    tr.down.push_back(std::move(cache));
  }
  for (std::size_t i = 0; i < enc_blocks_.size() && tr.depth() < depth; ++i) {
    typename nn::ResBlock<S>::Cache cache;
    tap(enc_blocks_[i].forward(tr.taps.back(), trace_for_backward ? &cache : nullptr));
    tr.blocks.push_back(std::move(cache));
  }
  return tr;
}

template <typename S>
Tensor<S> Generator<S>::decode(const EncoderTrace& enc, DecoderTrace* trace) const {
  Tensor<S> h = enc.taps.back();
  if (trace) {
    trace->blocks.resize(dec_blocks_.size());
    trace->up.resize(up_.size());
  }
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i) h = dec_blocks_[i].forward(h, trace ? &trace->blocks[i] : nullptr);
  for (std::size_t i = 0; i < up_.size(); ++i) h = up_[i].forward(h, trace ? &trace->up[i] : nullptr);
  Tensor<S> y = head_.forward(h, trace ? &trace->head : nullptr);
  if (cfg_.residual_output) y += enc.taps.front();
  return y;
}

template <typename S>
Tensor<S> Generator<S>::forward(const Tensor<S>& x, const FeatureHook* hook) const {
  return decode(encode(x, 0, false, hook), nullptr);
}

template <typename S>
Tensor<S> Generator<S>::decode_backward(const DecoderTrace& trace, const Tensor<S>& grad_out) {
  Tensor<S> g = head_.backward(trace.head, grad_out, true, true);
  for (std::size_t i = up_.size(); i-- > 0;) g = up_[i].backward(trace.up[i], std::move(g), true, true);
  for (std::size_t i = dec_blocks_.size(); i-- > 0;) g = dec_blocks_[i].backward(trace.blocks[i], g, true);
  return g;
}

template <typename S>
Tensor<S> Generator<S>::encode_backward(const EncoderTrace& trace, Tensor<S> grad_top,
                                        const std::map<int, Tensor<S>>& tap_grads, bool need_input_grad) {
  Tensor<S> g = std::move(grad_top);
  const int nd = cfg_.n_downsample;
  for (int layer = trace.depth(); layer >= 1; --layer) {
    if (auto it = tap_grads.find(layer); it != tap_grads.end()) {
      if (g.size() == 0)
        g = it->second;
      else
        g += it->second;
    }
    if (layer == 1) return need_input_grad ? g : Tensor<S>{};
    if (g.size() == 0) continue;
    if (layer > 2 + nd) {
      const auto i = static_cast<std::size_t>(layer - 3 - nd);
      g = enc_blocks_[i].backward(trace.blocks[i], g, true);
    } else if (layer > 2) {
      const auto i = static_cast<std::size_t>(layer - 3);
      g = down_[i].backward(trace.down[i], std::move(g), true, true);
    } else {
      g = stem_.backward(trace.stem, std::move(g), need_input_grad, true);
    }
  }
  return {};
}

template <typename S>
int Generator<S>::layer_channels(int layer) const {
  if (layer < 1 || layer > cfg_.encoder_layers())
    throw Error("model_core", "InvalidLayerIndex", std::to_string(layer));
  if (layer == 1) return 1;
  const int down_steps = std::min(layer - 2, cfg_.n_downsample);
  return cfg_.base_channels << down_steps;
}

template <typename S>
std::pair<int, int> Generator<S>::layer_extent(int layer, int height, int width) const {
  if (layer < 1 || layer > cfg_.encoder_layers())
    throw Error("model_core", "InvalidLayerIndex", std::to_string(layer));
  const int down_steps = std::clamp(layer - 2, 0, cfg_.n_downsample);
  for (int i = 0; i < down_steps; ++i) {
    height = nn::Conv2d<S>::output_size(height, 2);
    width = nn::Conv2d<S>::output_size(width, 2);
  }
  return {height, width};
}

template <typename S>
nn::ParamRefs<S> Generator<S>::parameters() {
  nn::ParamRefs<S> out;
  stem_.collect(out);
  for (auto& b : down_) b.collect(out);
  for (auto& b : enc_blocks_) b.collect(out);
  for (auto& b : dec_blocks_) b.collect(out);
  for (auto& b : up_) b.collect(out);
  head_.collect(out);
  return out;
}

template <typename S>
nn::ParamRefs<S> Generator<S>::head_parameters() {
  nn::ParamRefs<S> out;
  head_.collect(out);
  return out;
}

template class Generator<float>;
template class Generator<double>;

}  // namespace cvc::model
