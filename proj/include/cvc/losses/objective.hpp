#pragma once

#include "cvc/losses/gan.hpp"
#include "cvc/losses/nce.hpp"
#include "cvc/model/discriminator.hpp"
#include "cvc/model/generator.hpp"
#include "cvc/model/projection.hpp"

#include <map>
#include <vector>

namespace cvc::losses {

struct LossWeights {
  double lambda_nce = 1.0;
  double mu_identity = 1.0;

  /// Throws losses.InvalidWeights.
  void validate() const;
};

/// Non-owning handles to the three trainable networks.
template <typename S>
struct ModelHandles {
  model::Generator<S>* generator = nullptr;
  model::Discriminator<S>* discriminator = nullptr;
  model::ProjectionHeads<S>* heads = nullptr;
};

/// Patch positions for one generator step: one id list per selected layer for
/// the (x, G(x)) pair and one for the identity pair (y, G(y)).
struct PatchPlan {
  std::vector<std::vector<int>> source;
  std::vector<std::vector<int>> identity;
};

/// Draws both id sets for inputs of the given extent. Both are always drawn so
/// the generator stream does not depend on whether the identity term is enabled.
template <typename S>
PatchPlan sample_patch_plan(const model::Generator<S>& g, const model::ProjectionConfig& cfg, int height, int width,
                            Rng& rng);

struct LossBreakdown {
  double gan = 0.0;
  double nce = 0.0;
  double identity = 0.0;
  double total = 0.0;
  bool identity_enabled = true;
};

/// Contrastive loss between the encoder stacks of `source` (keys) and of
/// `generated` (queries) at shared patch ids.
template <typename S>
double contrastive_loss(const model::Generator<S>& g, const model::ProjectionHeads<S>& heads, const Tensor<S>& source,
                        const Tensor<S>& generated, const std::vector<std::vector<int>>& ids);

/// Identity regularizer: contrastive loss between y and G(y).
template <typename S>
double identity_nce(const model::Generator<S>& g, const model::ProjectionHeads<S>& heads, const Tensor<S>& y,
                    const std::vector<std::vector<int>>& ids);

/// Generator-side objective gan + lambda * nce + mu * identity. With `backprop`
/// the gradients of `total` are accumulated into the generator and projection
/// parameters (discriminator parameters and gradients are left untouched).
/// The identity branch is skipped entirely when mu == 0.
template <typename S>
LossBreakdown total_loss(ModelHandles<S> models, const Tensor<S>& x, const Tensor<S>& y, const LossWeights& weights,
                         GanVariant variant, const PatchPlan& plan, bool backprop, Tensor<S>* fake_out = nullptr);

/// G(x) with the traces needed for backprop; lets a training step reuse the
/// forward pass across the discriminator and generator updates.
template <typename S>
struct TracedForward {
  typename model::Generator<S>::EncoderTrace encoder;
  typename model::Generator<S>::DecoderTrace decoder;
  Tensor<S> output;
};

template <typename S>
TracedForward<S> traced_forward(const model::Generator<S>& g, const Tensor<S>& x);

/// total_loss() on an already computed G(x); `fx` must come from the current generator.
template <typename S>
LossBreakdown total_loss_from(ModelHandles<S> models, TracedForward<S>&& fx, const Tensor<S>& y,
                              const LossWeights& weights, GanVariant variant, const PatchPlan& plan, bool backprop);

/// Discriminator-side adversarial loss on a real target sample and a detached
/// fake; accumulates discriminator gradients when `backprop`.
template <typename S>
double discriminator_loss(model::Discriminator<S>& d, const Tensor<S>& real, const Tensor<S>& fake,
                          GanVariant variant, bool backprop);

}  // namespace cvc::losses
