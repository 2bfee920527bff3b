#pragma once

#include "cvc/rng.hpp"
#include "cvc/tensor.hpp"

#include <string>
#include <vector>

namespace cvc::nn {

/// Named trainable tensor with its gradient accumulator.
template <typename S>
struct Param {
  std::string name;
  std::vector<int> shape;
  AlignedVector<S> value;
  AlignedVector<S> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s);

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }
};

template <typename S>
using ParamRefs = std::vector<Param<S>*>;

enum class Norm { instance, none };
enum class Activation { none, relu, leaky_relu };

inline constexpr double kInstanceNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.2;

/// 3x3 convolution with replication padding of 1 and stride 1 or 2.
template <typename S>
class Conv2d {
 public:
  struct Cache {
    RowMatrix<S> columns;
    int in_height = 0;
    int in_width = 0;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int stride);

  static int output_size(int n, int stride) { return (n - 1) / stride + 1; }

  Tensor<S> forward(const Tensor<S>& x, Cache* cache) const;
  /// Accumulates weight/bias gradients when `accumulate` is set; returns dL/dx
  /// when `need_input_grad` is set (empty tensor otherwise).
  Tensor<S> backward(const Cache& cache, const Tensor<S>& grad_out, bool need_input_grad, bool accumulate);

  void init(Rng& rng, double stddev);
  void collect(ParamRefs<S>& out) { out.push_back(&weight); out.push_back(&bias); }

  int in_channels() const noexcept { return in_channels_; }
  int out_channels() const noexcept { return out_channels_; }
  int stride() const noexcept { return stride_; }

  Param<S> weight;  // (out, in*9)
  Param<S> bias;    // (out)

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
  int stride_ = 1;
};

/// Replication-padded im2col for a 3x3 kernel: rows (c*9 + ky*3 + kx), cols output positions.
template <typename S>
RowMatrix<S> im2col_replicate(const Tensor<S>& x, int stride);

template <typename S>
struct NormCache {
  Tensor<S> normalized;
  std::vector<S> inv_std;
};

/// Per-channel normalization over the spatial plane, no affine parameters.
template <typename S>
Tensor<S> instance_norm(const Tensor<S>& x, NormCache<S>* cache);
template <typename S>
Tensor<S> instance_norm_backward(const NormCache<S>& cache, const Tensor<S>& grad_out);

template <typename S>
void activate(Tensor<S>& x, Activation act);
/// Gradient through an activation given its output.
template <typename S>
void activate_backward(const Tensor<S>& output, Tensor<S>& grad, Activation act);

template <typename S>
Tensor<S> upsample2x(const Tensor<S>& x);
template <typename S>
Tensor<S> upsample2x_backward(const Tensor<S>& grad_out);

/// Optional nearest x2 upsample, conv, optional instance norm, activation.
template <typename S>
class ConvBlock {
 public:
  struct Cache {
    typename Conv2d<S>::Cache conv;
    NormCache<S> norm;
    Tensor<S> output;
  };

  ConvBlock() = default;
  ConvBlock(const std::string& name, int in_channels, int out_channels, int stride, Norm norm, Activation act,
            bool upsample = false);

  Tensor<S> forward(const Tensor<S>& x, Cache* cache) const;
  Tensor<S> backward(const Cache& cache, Tensor<S> grad_out, bool need_input_grad, bool accumulate);

  void init(Rng& rng, double stddev) { conv_.init(rng, stddev); }
  void collect(ParamRefs<S>& out) { conv_.collect(out); }
  const Conv2d<S>& conv() const noexcept { return conv_; }
  Conv2d<S>& conv() noexcept { return conv_; }
  bool upsamples() const noexcept { return upsample_; }

 private:
  Conv2d<S> conv_;
  Norm norm_ = Norm::none;
  Activation act_ = Activation::none;
  bool upsample_ = false;
};

/// x + [conv-norm-relu-conv-norm](x)
template <typename S>
class ResBlock {
 public:
  struct Cache {
    typename ConvBlock<S>::Cache first;
    typename ConvBlock<S>::Cache second;
  };

  ResBlock() = default;
  ResBlock(const std::string& name, int channels, Norm norm);

  Tensor<S> forward(const Tensor<S>& x, Cache* cache) const;
  Tensor<S> backward(const Cache& cache, const Tensor<S>& grad_out, bool accumulate);

  void init(Rng& rng, double stddev) { first_.init(rng, stddev); second_.init(rng, stddev); }
  void collect(ParamRefs<S>& out) { first_.collect(out); second_.collect(out); }

 private:
  ConvBlock<S> first_;
  ConvBlock<S> second_;
};

/// Fully connected layer over row vectors: y = x W^T + b.
template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features);

  RowMatrix<S> forward(const RowMatrix<S>& x) const;
  RowMatrix<S> backward(const RowMatrix<S>& x, const RowMatrix<S>& grad_out, bool need_input_grad, bool accumulate);

  void init(Rng& rng, double stddev);
  void collect(ParamRefs<S>& out) { out.push_back(&weight); out.push_back(&bias); }

  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }

  Param<S> weight;  // (out, in)
  Param<S> bias;

 private:
  int in_ = 0;
  int out_ = 0;
};

template <typename S>
void zero_grads(const ParamRefs<S>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace cvc::nn
