#pragma once

#include "cvc/model/generator.hpp"
#include "cvc/nn/layers.hpp"

#include <span>
#include <vector>

namespace cvc::model {

struct ProjectionConfig {
  std::vector<int> selected_layers{1, 2, 3, 4, 9};
  int patches_per_layer = 256;  // N + 1
  int embed_dim = 256;          // M
  double temperature = 0.07;
  /// Divide the layer/patch sum of the contrastive loss by L * (N + 1).
  bool mean_reduce = false;

  /// Throws model_core.InvalidConfig / model_core.InvalidLayerIndex.
  void validate(int encoder_layers) const;
};

template <typename S>
struct FeatureStack {
  int layer_index = 0;
  Tensor<S> values;
};

/// Projected, L2-normalized patch vectors of one layer; row i comes from spatial index ids[i].
template <typename S>
struct ProjectedPatches {
  int layer_index = 0;
  std::vector<int> ids;
  RowMatrix<S> vectors;
};

/// Encoder feature stacks for the requested layers, in request order, read
/// from the same encoder pass the generator uses.
template <typename S>
std::vector<FeatureStack<S>> encoder_features(const Generator<S>& g, const Tensor<S>& x, const std::vector<int>& layers);

/// One 2-layer MLP (linear-ReLU-linear) per selected encoder layer, followed by L2 normalization.
template <typename S>
class ProjectionHeads {
 public:
  struct Trace {
    RowMatrix<S> gathered;
    RowMatrix<S> hidden;
    RowMatrix<S> output;
    std::vector<S> norms;
    std::vector<int> ids;
    int channels = 0, height = 0, width = 0;
  };

  ProjectionHeads() = default;
  /// `in_channels[i]` is the channel count of selected layer i.
  ProjectionHeads(const ProjectionConfig& cfg, const std::vector<int>& in_channels);

  void init(Rng& rng, double stddev = 0.02);

  std::size_t size() const noexcept { return first_.size(); }
  const ProjectionConfig& config() const noexcept { return cfg_; }

  /// Gathers columns `ids` of `stack` and projects them with head `head`.
  ProjectedPatches<S> project(std::size_t head, const Tensor<S>& stack, std::span<const int> ids,
                              Trace* trace = nullptr) const;
  /// dL/d(stack) (dense, zeros outside the gathered positions); accumulates head gradients.
  Tensor<S> backward(std::size_t head, const Trace& trace, const RowMatrix<S>& grad_vectors);

  nn::ParamRefs<S> parameters();

 private:
  ProjectionConfig cfg_;
  std::vector<nn::Linear<S>> first_;
  std::vector<nn::Linear<S>> second_;
};

template <typename S>
ProjectionHeads<S> make_projection_heads(const Generator<S>& g, const ProjectionConfig& cfg);

/// Uniform draw of `k` distinct spatial indices per extent (height, width).
/// Throws model_core.NotEnoughSpatialPositions.
std::vector<std::vector<int>> sample_patch_ids(const std::vector<std::pair<int, int>>& extents, int k, Rng& rng);

/// Projects every stack at the given per-layer ids. Validates ids against each stack.
template <typename S>
std::vector<ProjectedPatches<S>> project_patches(const ProjectionHeads<S>& heads,
                                                 const std::vector<FeatureStack<S>>& stacks,
                                                 const std::vector<std::vector<int>>& patch_ids);

/// Samples ids (uniform, without replacement) and projects; the ids are returned in the result.
template <typename S>
std::vector<ProjectedPatches<S>> project_patches(const ProjectionHeads<S>& heads,
                                                 const std::vector<FeatureStack<S>>& stacks, Rng& rng);

}  // namespace cvc::model
