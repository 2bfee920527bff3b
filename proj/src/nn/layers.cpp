#include "cvc/nn/layers.hpp"

#include <cmath>
#include <numeric>

namespace cvc::nn {
namespace {

std::size_t product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::vector<int> clamped_taps(int out, int in, int stride, int k) {
  std::vector<int> idx(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) idx[o] = std::clamp(o * stride + k - 1, 0, in - 1);
  return idx;
}

template <typename S>
void col2im_replicate(const RowMatrix<S>& cols, int stride, Tensor<S>& dx) {
  const int H = dx.height, W = dx.width;
  const int Ho = Conv2d<S>::output_size(H, stride), Wo = Conv2d<S>::output_size(W, stride);
  for (int k = 0; k < 3; ++k) {
    const auto xs = clamped_taps(Wo, W, stride, k);
    for (int c = 0; c < dx.channels; ++c)
      for (int ky = 0; ky < 3; ++ky) {
        const S* src = cols.row(c * 9 + ky * 3 + k).data();
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = std::clamp(oy * stride + ky - 1, 0, H - 1);
          S* dst = dx.data.data() + (static_cast<std::size_t>(c) * H + iy) * W;
          const S* row = src + static_cast<std::size_t>(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) dst[xs[ox]] += row[ox];
        }
      }
  }
}

}  // namespace

template <typename S>
Param<S>::Param(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)), value(product(shape), S(0)), grad(product(shape), S(0)) {}

template <typename S>
RowMatrix<S> im2col_replicate(const Tensor<S>& x, int stride) {
  const int H = x.height, W = x.width;
  const int Ho = Conv2d<S>::output_size(H, stride), Wo = Conv2d<S>::output_size(W, stride);
  RowMatrix<S> cols(x.channels * 9, Ho * Wo);
  for (int k = 0; k < 3; ++k) {
    const auto xs = clamped_taps(Wo, W, stride, k);
    for (int c = 0; c < x.channels; ++c)
      for (int ky = 0; ky < 3; ++ky) {
        S* dst = cols.row(c * 9 + ky * 3 + k).data();
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = std::clamp(oy * stride + ky - 1, 0, H - 1);
          const S* src = x.data.data() + (static_cast<std::size_t>(c) * H + iy) * W;
          S* row = dst + static_cast<std::size_t>(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) row[ox] = src[xs[ox]];
        }
      }
  }
  return cols;
}

template <typename S>
Conv2d<S>::Conv2d(const std::string& name, int in_channels, int out_channels, int stride)
    : weight(name + ".weight", {out_channels, in_channels, 3, 3}),
      bias(name + ".bias", {out_channels}),
      in_channels_(in_channels),
      out_channels_(out_channels),
      stride_(stride) {}

template <typename S>
void Conv2d<S>::init(Rng& rng, double stddev) {
  for (auto& w : weight.value) w = static_cast<S>(normal(rng, 0.0, stddev));
  std::fill(bias.value.begin(), bias.value.end(), S(0));
}

template <typename S>
Tensor<S> Conv2d<S>::forward(const Tensor<S>& x, Cache* cache) const {
  RowMatrix<S> cols = im2col_replicate(x, stride_);
  Tensor<S> y(out_channels_, output_size(x.height, stride_), output_size(x.width, stride_));
  ConstMatrixMap<S> w(weight.value.data(), out_channels_, in_channels_ * 9);
  auto out = y.matrix();
  out.noalias() = w * cols;
  for (int o = 0; o < out_channels_; ++o) out.row(o).array() += bias.value[o];
  if (cache) {
    cache->columns = std::move(cols);
    cache->in_height = x.height;
    cache->in_width = x.width;
  }
  return y;
}

template <typename S>
Tensor<S> Conv2d<S>::backward(const Cache& cache, const Tensor<S>& grad_out, bool need_input_grad, bool accumulate) {
  const auto g = grad_out.matrix();
  if (accumulate) {
    MatrixMap<S> dw(weight.grad.data(), out_channels_, in_channels_ * 9);
    dw.noalias() += g * cache.columns.transpose();
    for (int o = 0; o < out_channels_; ++o) bias.grad[o] += g.row(o).sum();
  }
  if (!need_input_grad) return {};
  ConstMatrixMap<S> w(weight.value.data(), out_channels_, in_channels_ * 9);
  RowMatrix<S> dcols = w.transpose() * g;
  Tensor<S> dx(in_channels_, cache.in_height, cache.in_width);
  col2im_replicate(dcols, stride_, dx);
  return dx;
}

template <typename S>
Tensor<S> instance_norm(const Tensor<S>& x, NormCache<S>* cache) {
  Tensor<S> y(x.channels, x.height, x.width);
  std::vector<S> inv(static_cast<std::size_t>(x.channels));
  const S n = static_cast<S>(x.plane());
  for (int c = 0; c < x.channels; ++c) {
    auto in = x.channel(c);
    auto out = y.channel(c);
    S mean = std::accumulate(in.begin(), in.end(), S(0)) / n;
    S var = 0;
    for (S v : in) var += (v - mean) * (v - mean);
    var /= n;
    const S is = S(1) / std::sqrt(var + static_cast<S>(kInstanceNormEps));
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - mean) * is;
    inv[c] = is;
  }
  if (cache) {
    cache->normalized = y;
    cache->inv_std = std::move(inv);
  }
  return y;
}

template <typename S>
Tensor<S> instance_norm_backward(const NormCache<S>& cache, const Tensor<S>& grad_out) {
  const auto& y = cache.normalized;
  Tensor<S> dx(y.channels, y.height, y.width);
  const S n = static_cast<S>(y.plane());
  for (int c = 0; c < y.channels; ++c) {
    auto g = grad_out.channel(c);
    auto yc = y.channel(c);
    auto d = dx.channel(c);
    S mg = 0, mgy = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      mg += g[i];
      mgy += g[i] * yc[i];
    }
    mg /= n;
    mgy /= n;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = cache.inv_std[c] * (g[i] - mg - yc[i] * mgy);
  }
  return dx;
}

template <typename S>
void activate(Tensor<S>& x, Activation act) {
  switch (act) {
    case Activation::none:
      return;
    case Activation::relu:
      for (auto& v : x.data) v = v > S(0) ? v : S(0);
      return;
    case Activation::leaky_relu:
      for (auto& v : x.data) v = v > S(0) ? v : static_cast<S>(kLeakySlope) * v;
      return;
  }
}

template <typename S>
void activate_backward(const Tensor<S>& output, Tensor<S>& grad, Activation act) {
  switch (act) {
    case Activation::none:
      return;
    case Activation::relu:
      for (std::size_t i = 0; i < grad.data.size(); ++i)
        if (!(output.data[i] > S(0))) grad.data[i] = S(0);
      return;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < grad.data.size(); ++i)
        if (!(output.data[i] > S(0))) grad.data[i] *= static_cast<S>(kLeakySlope);
      return;
  }
}

template <typename S>
Tensor<S> upsample2x(const Tensor<S>& x) {
  Tensor<S> y(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c)
    for (int i = 0; i < y.height; ++i)
      for (int j = 0; j < y.width; ++j) y.at(c, i, j) = x.at(c, i / 2, j / 2);
  return y;
}

template <typename S>
Tensor<S> upsample2x_backward(const Tensor<S>& grad_out) {
  Tensor<S> dx(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
  for (int c = 0; c < grad_out.channels; ++c)
    for (int i = 0; i < grad_out.height; ++i)
      for (int j = 0; j < grad_out.width; ++j) dx.at(c, i / 2, j / 2) += grad_out.at(c, i, j);
  return dx;
}

template <typename S>
ConvBlock<S>::ConvBlock(const std::string& name, int in_channels, int out_channels, int stride, Norm norm,
                        Activation act, bool upsample)
    : conv_(name, in_channels, out_channels, stride), norm_(norm), act_(act), upsample_(upsample) {}

template <typename S>
Tensor<S> ConvBlock<S>::forward(const Tensor<S>& x, Cache* cache) const {
  Tensor<S> y = upsample_ ? conv_.forward(upsample2x(x), cache ? &cache->conv : nullptr)
                          : conv_.forward(x, cache ? &cache->conv : nullptr);
  if (norm_ == Norm::instance) y = instance_norm(y, cache ? &cache->norm : nullptr);
  activate(y, act_);
  if (cache) cache->output = y;
  return y;
}

template <typename S>
Tensor<S> ConvBlock<S>::backward(const Cache& cache, Tensor<S> grad_out, bool need_input_grad, bool accumulate) {
  activate_backward(cache.output, grad_out, act_);
  if (norm_ == Norm::instance) grad_out = instance_norm_backward(cache.norm, grad_out);
  Tensor<S> dx = conv_.backward(cache.conv, grad_out, need_input_grad, accumulate);
  if (need_input_grad && upsample_) return upsample2x_backward(dx);
  return dx;
}

template <typename S>
ResBlock<S>::ResBlock(const std::string& name, int channels, Norm norm)
    : first_(name + ".conv1", channels, channels, 1, norm, Activation::relu),
      second_(name + ".conv2", channels, channels, 1, norm, Activation::none) {}

template <typename S>
Tensor<S> ResBlock<S>::forward(const Tensor<S>& x, Cache* cache) const {
  Tensor<S> h = first_.forward(x, cache ? &cache->first : nullptr);
  Tensor<S> y = second_.forward(h, cache ? &cache->second : nullptr);
  y += x;
  return y;
}

template <typename S>
Tensor<S> ResBlock<S>::backward(const Cache& cache, const Tensor<S>& grad_out, bool accumulate) {
  Tensor<S> gh = second_.backward(cache.second, grad_out, true, accumulate);
  Tensor<S> gx = first_.backward(cache.first, std::move(gh), true, accumulate);
  gx += grad_out;
  return gx;
}

template <typename S>
Linear<S>::Linear(const std::string& name, int in_features, int out_features)
    : weight(name + ".weight", {out_features, in_features}),
      bias(name + ".bias", {out_features}),
      in_(in_features),
      out_(out_features) {}

template <typename S>
void Linear<S>::init(Rng& rng, double stddev) {
  for (auto& w : weight.value) w = static_cast<S>(normal(rng, 0.0, stddev));
  std::fill(bias.value.begin(), bias.value.end(), S(0));
}

template <typename S>
RowMatrix<S> Linear<S>::forward(const RowMatrix<S>& x) const {
  ConstMatrixMap<S> w(weight.value.data(), out_, in_);
  RowMatrix<S> y = x * w.transpose();
  Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> b(bias.value.data(), out_);
  y.rowwise() += b;
  return y;
}

template <typename S>
RowMatrix<S> Linear<S>::backward(const RowMatrix<S>& x, const RowMatrix<S>& grad_out, bool need_input_grad,
                                 bool accumulate) {
  if (accumulate) {
    MatrixMap<S> dw(weight.grad.data(), out_, in_);
    dw.noalias() += grad_out.transpose() * x;
    Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> db(bias.grad.data(), out_);
    db += grad_out.colwise().sum();
  }
  if (!need_input_grad) return {};
  ConstMatrixMap<S> w(weight.value.data(), out_, in_);
  return grad_out * w;
}

#define CVC_INSTANTIATE(S)                                                                   \
  template struct Param<S>;                                                                  \
  template class Conv2d<S>;                                                                  \
  template class ConvBlock<S>;                                                               \
  template class ResBlock<S>;                                                                \
  template class Linear<S>;                                                                  \
  template RowMatrix<S> im2col_replicate<S>(const Tensor<S>&, int);                          \
  template Tensor<S> instance_norm<S>(const Tensor<S>&, NormCache<S>*);                      \
  template Tensor<S> instance_norm_backward<S>(const NormCache<S>&, const Tensor<S>&);       \
  template void activate<S>(Tensor<S>&, Activation);                                         \
  template void activate_backward<S>(const Tensor<S>&, Tensor<S>&, Activation);              \
  template Tensor<S> upsample2x<S>(const Tensor<S>&);                                        \
  template Tensor<S> upsample2x_backward<S>(const Tensor<S>&);

CVC_INSTANTIATE(float)
CVC_INSTANTIATE(double)

}  // namespace cvc::nn
