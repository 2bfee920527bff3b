#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace cvc {

/// Heap storage aligned like Eigen's own matrices. Vectorized reductions over a
/// map peel according to the base address, so a fixed alignment keeps the
/// summation order, and hence results, identical from run to run.
template <typename S>
using AlignedVector = std::vector<S, Eigen::aligned_allocator<S>>;

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using MatrixMap = Eigen::Map<RowMatrix<S>>;

template <typename S>
using ConstMatrixMap = Eigen::Map<const RowMatrix<S>>;

/// Dense (channels, height, width) activation map, row-major. Spectrograms
/// are 1-channel maps with height = mel bins and width = frames.
template <typename S>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  AlignedVector<S> data;

  Tensor() = default;
  Tensor(int c, int h, int w, S fill = S(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  int plane() const noexcept { return height * width; }

  S& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  S at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::span<S> channel(int c) { return {data.data() + static_cast<std::size_t>(c) * plane(), static_cast<std::size_t>(plane())}; }
  std::span<const S> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * plane(), static_cast<std::size_t>(plane())};
  }

  /// (channels, height*width) view.
  MatrixMap<S> matrix() { return MatrixMap<S>(data.data(), channels, plane()); }
  ConstMatrixMap<S> matrix() const { return ConstMatrixMap<S>(data.data(), channels, plane()); }

  bool same_shape(const Tensor& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  Tensor& operator+=(const Tensor& o) {
    assert(same_shape(o));
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
  Tensor& operator*=(S k) {
    for (auto& v : data) v *= k;
    return *this;
  }
  void zero() { std::fill(data.begin(), data.end(), S(0)); }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out(t.channels, t.height, t.width);
  std::transform(t.data.begin(), t.data.end(), out.data.begin(), [](From v) { return static_cast<To>(v); });
  return out;
}

}  // namespace cvc
