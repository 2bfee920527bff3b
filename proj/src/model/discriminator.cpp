#include "cvc/model/discriminator.hpp"

#include "cvc/error.hpp"

namespace cvc::model {

void DiscriminatorConfig::validate() const {
  if (n_layers < 1) throw Error("model_core", "InvalidConfig", "discriminator n_layers must be >= 1");
  if (base_channels < 1) throw Error("model_core", "InvalidConfig", "discriminator base_channels must be positive");
}

template <typename S>
Discriminator<S>::Discriminator(DiscriminatorConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  using nn::Activation;
  int ch = cfg_.base_channels;
  layers_.emplace_back("D.conv0", 1, ch, 2, nn::Norm::none, Activation::leaky_relu);
  for (int i = 1; i < cfg_.n_layers; ++i) {
    layers_.emplace_back("D.conv" + std::to_string(i), ch, ch * 2, 2, cfg_.norm, Activation::leaky_relu);
    ch *= 2;
  }
  layers_.emplace_back("D.conv" + std::to_string(cfg_.n_layers), ch, ch * 2, 1, cfg_.norm, Activation::leaky_relu);
  layers_.emplace_back("D.logits", ch * 2, 1, 1, nn::Norm::none, Activation::none);
}

template <typename S>
void Discriminator<S>::init(Rng& rng, double stddev) {
  for (auto& l : layers_) l.init(rng, stddev);
}

template <typename S>
std::pair<int, int> Discriminator<S>::output_extent(int height, int width) const {
  for (const auto& l : layers_) {
    height = nn::Conv2d<S>::output_size(height, l.conv().stride());
    width = nn::Conv2d<S>::output_size(width, l.conv().stride());
  }
  return {height, width};
}

template <typename S>
Tensor<S> Discriminator<S>::forward(const Tensor<S>& m, Trace* trace) const {
  if (m.height < cfg_.total_stride() || m.width < cfg_.total_stride())
    throw Error("model_core", "TooShort",
                "input (" + std::to_string(m.height) + ", " + std::to_string(m.width) + ") shorter than stride " +
                    std::to_string(cfg_.total_stride()));
  if (trace) trace->layers.resize(layers_.size());
  Tensor<S> h = layers_.front().forward(m, trace ? &trace->layers[0] : nullptr);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i].forward(h, trace ? &trace->layers[i] : nullptr);
  return h;
}

template <typename S>
Tensor<S> Discriminator<S>::backward(const Trace& trace, const Tensor<S>& grad_logits, bool need_input_grad,
                                     bool accumulate) {
  Tensor<S> g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want_input = i > 0 || need_input_grad;
    g = layers_[i].backward(trace.layers[i], std::move(g), want_input, accumulate);
    if (!want_input) return {};
  }
  return g;
}

template <typename S>
nn::ParamRefs<S> Discriminator<S>::parameters() {
  nn::ParamRefs<S> out;
  for (auto& l : layers_) l.collect(out);
  return out;
}

template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace cvc::model
