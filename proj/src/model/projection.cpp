#include "cvc/model/projection.hpp"

#include "cvc/error.hpp"

#include <cmath>

namespace cvc::model {

void ProjectionConfig::validate(int encoder_layers) const {
  auto fail = [](const std::string& why) { throw Error("model_core", "InvalidConfig", why); };
  if (selected_layers.empty()) fail("selected_layers must not be empty");
  for (std::size_t i = 0; i < selected_layers.size(); ++i) {
    if (selected_layers[i] < 1 || selected_layers[i] > encoder_layers)
      throw Error("model_core", "InvalidLayerIndex",
                  std::to_string(selected_layers[i]) + " not in 1.." + std::to_string(encoder_layers));
    if (i > 0 && selected_layers[i] <= selected_layers[i - 1]) fail("selected_layers must be strictly increasing");
  }
  if (patches_per_layer < 2) fail("patches_per_layer must be >= 2");
  if (embed_dim < 1) fail("embed_dim must be positive");
  if (!(temperature > 0.0)) fail("temperature must be positive");
}

template <typename S>
std::vector<FeatureStack<S>> encoder_features(const Generator<S>& g, const Tensor<S>& x, const std::vector<int>& layers) {
  int depth = 0;
  for (int l : layers) {
    if (l < 1 || l > g.config().encoder_layers()) throw Error("model_core", "InvalidLayerIndex", std::to_string(l));
    depth = std::max(depth, l);
  }
  auto trace = g.encode(x, depth, false);
  std::vector<FeatureStack<S>> out;
  for (int l : layers) out.push_back({l, trace.taps[static_cast<std::size_t>(l - 1)]});
  return out;
}

template <typename S>
ProjectionHeads<S>::ProjectionHeads(const ProjectionConfig& cfg, const std::vector<int>& in_channels) : cfg_(cfg) {
  for (std::size_t i = 0; i < in_channels.size(); ++i) {
    const std::string name = "P.layer" + std::to_string(cfg.selected_layers.at(i));
    first_.emplace_back(name + ".fc1", in_channels[i], cfg.embed_dim);
    second_.emplace_back(name + ".fc2", cfg.embed_dim, cfg.embed_dim);
  }
}

template <typename S>
void ProjectionHeads<S>::init(Rng& rng, double stddev) {
  for (std::size_t i = 0; i < first_.size(); ++i) {
    first_[i].init(rng, stddev);
    second_[i].init(rng, stddev);
  }
}

template <typename S>
ProjectedPatches<S> ProjectionHeads<S>::project(std::size_t head, const Tensor<S>& stack, std::span<const int> ids,
                                                Trace* trace) const {
  const int n = static_cast<int>(ids.size());
  RowMatrix<S> gathered(n, stack.channels);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < stack.channels; ++c) gathered(i, c) = stack.data[static_cast<std::size_t>(c) * stack.plane() + ids[i]];

  RowMatrix<S> hidden = first_[head].forward(gathered);
  hidden = hidden.cwiseMax(S(0));
  RowMatrix<S> raw = second_[head].forward(hidden);

  ProjectedPatches<S> out;
  out.layer_index = cfg_.selected_layers.at(head);
  out.ids.assign(ids.begin(), ids.end());
  out.vectors.resize(n, raw.cols());
  std::vector<S> norms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const S norm = raw.row(i).norm();
    if (norm > static_cast<S>(1e-12)) {
      norms[i] = norm;
      out.vectors.row(i) = raw.row(i) / norm;
    } else {
      // Dead MLP output: a fixed unit vector, locally constant (zero gradient).
      norms[i] = S(0);
      out.vectors.row(i).setConstant(S(1) / std::sqrt(static_cast<S>(raw.cols())));
    }
  }
  if (trace) {
    trace->gathered = std::move(gathered);
    trace->hidden = std::move(hidden);
    trace->output = out.vectors;
    trace->norms = std::move(norms);
    trace->ids = out.ids;
    trace->channels = stack.channels;
    trace->height = stack.height;
    trace->width = stack.width;
  }
  return out;
}

template <typename S>
Tensor<S> ProjectionHeads<S>::backward(std::size_t head, const Trace& trace, const RowMatrix<S>& grad_vectors) {
  const auto n = static_cast<int>(trace.ids.size());
  RowMatrix<S> graw(n, grad_vectors.cols());
  for (int i = 0; i < n; ++i) {
    if (trace.norms[i] == S(0)) {
      graw.row(i).setZero();
      continue;
    }
    const auto v = trace.output.row(i);
    const S dot = v.dot(grad_vectors.row(i));
    graw.row(i) = (grad_vectors.row(i) - dot * v) / trace.norms[i];
  }
  RowMatrix<S> ghidden = second_[head].backward(trace.hidden, graw, true, true);
  for (Eigen::Index i = 0; i < ghidden.size(); ++i)
    if (!(trace.hidden.data()[i] > S(0))) ghidden.data()[i] = S(0);
  RowMatrix<S> gin = first_[head].backward(trace.gathered, ghidden, true, true);

  Tensor<S> gstack(trace.channels, trace.height, trace.width);
  const int plane = trace.height * trace.width;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < trace.channels; ++c)
      gstack.data[static_cast<std::size_t>(c) * plane + trace.ids[i]] += gin(i, c);
  return gstack;
}

template <typename S>
nn::ParamRefs<S> ProjectionHeads<S>::parameters() {
  nn::ParamRefs<S> out;
  for (std::size_t i = 0; i < first_.size(); ++i) {
    first_[i].collect(out);
    second_[i].collect(out);
  }
  return out;
}

template <typename S>
ProjectionHeads<S> make_projection_heads(const Generator<S>& g, const ProjectionConfig& cfg) {
  cfg.validate(g.config().encoder_layers());
  std::vector<int> channels;
  for (int l : cfg.selected_layers) channels.push_back(g.layer_channels(l));
  return ProjectionHeads<S>(cfg, channels);
}

std::vector<std::vector<int>> sample_patch_ids(const std::vector<std::pair<int, int>>& extents, int k, Rng& rng) {
  std::vector<std::vector<int>> ids;
  for (const auto& [h, w] : extents) {
    if (h * w < k)
      throw Error("model_core", "NotEnoughSpatialPositions",
                  std::to_string(h * w) + " positions for " + std::to_string(k) + " patches");
    ids.push_back(sample_without_replacement(rng, h * w, k));
  }
  return ids;
}

template <typename S>
std::vector<ProjectedPatches<S>> project_patches(const ProjectionHeads<S>& heads,
                                                 const std::vector<FeatureStack<S>>& stacks,
                                                 const std::vector<std::vector<int>>& patch_ids) {
  if (stacks.size() != heads.size() || patch_ids.size() != heads.size())
    throw Error("model_core", "LayerSetMismatch", "stack/head/id counts differ");
  std::vector<ProjectedPatches<S>> out;
  for (std::size_t h = 0; h < stacks.size(); ++h) {
    const int positions = stacks[h].values.plane();
    if (positions < heads.config().patches_per_layer)
      throw Error("model_core", "NotEnoughSpatialPositions", "layer " + std::to_string(stacks[h].layer_index));
    for (int id : patch_ids[h])
      if (id < 0 || id >= positions) throw Error("model_core", "InvalidPatchIndex", std::to_string(id));
    out.push_back(heads.project(h, stacks[h].values, patch_ids[h]));
  }
  return out;
}

template <typename S>
std::vector<ProjectedPatches<S>> project_patches(const ProjectionHeads<S>& heads,
                                                 const std::vector<FeatureStack<S>>& stacks, Rng& rng) {
  std::vector<std::pair<int, int>> extents;
  for (const auto& s : stacks) extents.emplace_back(s.values.height, s.values.width);
  return project_patches(heads, stacks, sample_patch_ids(extents, heads.config().patches_per_layer, rng));
}

#define CVC_INSTANTIATE(S)                                                                                         \
  template class ProjectionHeads<S>;                                                                               \
  template std::vector<FeatureStack<S>> encoder_features<S>(const Generator<S>&, const Tensor<S>&,                \
                                                            const std::vector<int>&);                             \
  template ProjectionHeads<S> make_projection_heads<S>(const Generator<S>&, const ProjectionConfig&);             \
  template std::vector<ProjectedPatches<S>> project_patches<S>(const ProjectionHeads<S>&,                         \
                                                               const std::vector<FeatureStack<S>>&,               \
                                                               const std::vector<std::vector<int>>&);             \
  template std::vector<ProjectedPatches<S>> project_patches<S>(const ProjectionHeads<S>&,                         \
                                                               const std::vector<FeatureStack<S>>&, Rng&);

CVC_INSTANTIATE(float)
CVC_INSTANTIATE(double)

}  // namespace cvc::model
