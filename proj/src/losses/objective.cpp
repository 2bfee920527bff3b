#include "cvc/losses/objective.hpp"

#include "cvc/error.hpp"

#include <cmath>

namespace cvc::losses {
namespace {

template <typename S>
struct ContrastiveGrads {
  std::map<int, Tensor<S>> source_taps;
  Tensor<S> generated;
};

int max_layer(const model::ProjectionConfig& cfg) { return cfg.selected_layers.back(); }

/// Contrastive term from an existing source trace; with `grads` the gradient of
/// weight * loss is returned for the source taps and the generated input, and
/// head/encoder parameter gradients are accumulated.
template <typename S>
double contrastive_pass(model::Generator<S>& g, model::ProjectionHeads<S>& heads,
                        const typename model::Generator<S>::EncoderTrace& source_trace, const Tensor<S>& generated,
                        const std::vector<std::vector<int>>& ids, double weight, ContrastiveGrads<S>* grads) {
  const auto& cfg = heads.config();
  if (ids.size() != cfg.selected_layers.size())
    throw Error("losses", "LayerSetMismatch", "patch ids do not cover the selected layers");
  const bool backprop = grads != nullptr;
  const auto query_trace = g.encode(generated, max_layer(cfg), backprop);

  std::vector<model::ProjectedPatches<S>> keys, queries;
  std::vector<typename model::ProjectionHeads<S>::Trace> key_traces(ids.size()), query_traces(ids.size());
  for (std::size_t h = 0; h < ids.size(); ++h) {
    const auto tap = static_cast<std::size_t>(cfg.selected_layers[h] - 1);
    const auto& src = source_trace.taps.at(tap);
    if (src.plane() < cfg.patches_per_layer)
      throw Error("model_core", "NotEnoughSpatialPositions", "layer " + std::to_string(cfg.selected_layers[h]));
    keys.push_back(heads.project(h, src, ids[h], backprop ? &key_traces[h] : nullptr));
    queries.push_back(heads.project(h, query_trace.taps.at(tap), ids[h], backprop ? &query_traces[h] : nullptr));
  }
  const auto bundles = make_bundles(queries, keys, cfg.temperature);
  auto res = nce_multilayer(bundles, cfg.mean_reduce, backprop && weight != 0.0, &cfg.selected_layers);

  if (backprop && weight != 0.0) {
    std::map<int, Tensor<S>> query_taps;
    const S w = static_cast<S>(weight);
    for (std::size_t h = 0; h < ids.size(); ++h) {
      const int layer = cfg.selected_layers[h];
      RowMatrix<S> gk = res.grad_keys[h] * w;
      RowMatrix<S> gq = res.grad_queries[h] * w;
      grads->source_taps[layer] = heads.backward(h, key_traces[h], gk);
      query_taps[layer] = heads.backward(h, query_traces[h], gq);
    }
    grads->generated = g.encode_backward(query_trace, {}, query_taps, true);
  }
  return res.value;
}

template <typename S>
void check_finite_loss(double v, const char* what) {
  if (!std::isfinite(v)) throw Error("losses", "NonFiniteLoss", what);
}

}  // namespace

void LossWeights::validate() const {
  if (!std::isfinite(lambda_nce) || !std::isfinite(mu_identity) || lambda_nce < 0.0 || mu_identity < 0.0)
    throw Error("losses", "InvalidWeights", "lambda and mu must be finite and non-negative");
}

template <typename S>
PatchPlan sample_patch_plan(const model::Generator<S>& g, const model::ProjectionConfig& cfg, int height, int width,
                            Rng& rng) {
  std::vector<std::pair<int, int>> extents;
  for (int l : cfg.selected_layers) extents.push_back(g.layer_extent(l, height, width));
  PatchPlan plan;
  plan.source = model::sample_patch_ids(extents, cfg.patches_per_layer, rng);
  plan.identity = model::sample_patch_ids(extents, cfg.patches_per_layer, rng);
  return plan;
}

template <typename S>
double contrastive_loss(const model::Generator<S>& g, const model::ProjectionHeads<S>& heads, const Tensor<S>& source,
                        const Tensor<S>& generated, const std::vector<std::vector<int>>& ids) {
  auto& gm = const_cast<model::Generator<S>&>(g);
  auto& hm = const_cast<model::ProjectionHeads<S>&>(heads);
  const auto trace = g.encode(source, max_layer(heads.config()), false);
  return contrastive_pass<S>(gm, hm, trace, generated, ids, 0.0, nullptr);
}

template <typename S>
double identity_nce(const model::Generator<S>& g, const model::ProjectionHeads<S>& heads, const Tensor<S>& y,
                    const std::vector<std::vector<int>>& ids) {
  return contrastive_loss(g, heads, y, g.forward(y), ids);
}

template <typename S>
TracedForward<S> traced_forward(const model::Generator<S>& g, const Tensor<S>& x) {
  TracedForward<S> fx;
  fx.encoder = g.encode(x, 0, true);
  fx.output = g.decode(fx.encoder, &fx.decoder);
  return fx;
}

template <typename S>
LossBreakdown total_loss(ModelHandles<S> models, const Tensor<S>& x, const Tensor<S>& y, const LossWeights& weights,
                         GanVariant variant, const PatchPlan& plan, bool backprop, Tensor<S>* fake_out) {
  TracedForward<S> fx;
  if (backprop) {
    fx = traced_forward(*models.generator, x);
  } else {
    fx.encoder = models.generator->encode(x, 0, false);
    fx.output = models.generator->decode(fx.encoder, nullptr);
  }
  if (fake_out) *fake_out = fx.output;
  return total_loss_from(models, std::move(fx), y, weights, variant, plan, backprop);
}

template <typename S>
LossBreakdown total_loss_from(ModelHandles<S> models, TracedForward<S>&& fx, const Tensor<S>& y,
                              const LossWeights& weights, GanVariant variant, const PatchPlan& plan, bool backprop) {
  weights.validate();
  auto& g = *models.generator;
  auto& d = *models.discriminator;
  auto& heads = *models.heads;

  LossBreakdown out;
  out.identity_enabled = weights.mu_identity != 0.0;
  const Tensor<S>& fake = fx.output;

  // adversarial term
  typename model::Discriminator<S>::Trace d_trace;
  const Tensor<S> logits = d.forward(fake, backprop ? &d_trace : nullptr);
  const auto adv = gan_loss(logits, logits, variant, GanSide::generator);
  out.gan = adv.value;

  // contrastive term
  ContrastiveGrads<S> nce_grads;
  out.nce = contrastive_pass(g, heads, fx.encoder, fake, plan.source, weights.lambda_nce,
                             backprop ? &nce_grads : nullptr);

  // identity term
  ContrastiveGrads<S> idt_grads;
  typename model::Generator<S>::EncoderTrace enc_y;
  typename model::Generator<S>::DecoderTrace dec_y;
  if (out.identity_enabled) {
    enc_y = g.encode(y, 0, backprop);
    const Tensor<S> same = g.decode(enc_y, backprop ? &dec_y : nullptr);
    out.identity = contrastive_pass(g, heads, enc_y, same, plan.identity, weights.mu_identity,
                                    backprop ? &idt_grads : nullptr);
  }

  out.total = out.gan + weights.lambda_nce * out.nce;
  if (out.identity_enabled) out.total += weights.mu_identity * out.identity;
  check_finite_loss<S>(out.total, "generator objective");

  if (!backprop) return out;

  Tensor<S> d_fake = d.backward(d_trace, adv.grad_fake, true, false);
  if (nce_grads.generated.size() > 0) d_fake += nce_grads.generated;
  Tensor<S> d_top = g.decode_backward(fx.decoder, d_fake);
  g.encode_backward(fx.encoder, std::move(d_top), nce_grads.source_taps, false);

  if (out.identity_enabled && idt_grads.generated.size() > 0) {
    Tensor<S> d_top_y = g.decode_backward(dec_y, idt_grads.generated);
    g.encode_backward(enc_y, std::move(d_top_y), idt_grads.source_taps, false);
  }
  return out;
}

template <typename S>
double discriminator_loss(model::Discriminator<S>& d, const Tensor<S>& real, const Tensor<S>& fake, GanVariant variant,
                          bool backprop) {
  typename model::Discriminator<S>::Trace real_trace, fake_trace;
  const Tensor<S> lr = d.forward(real, backprop ? &real_trace : nullptr);
  const Tensor<S> lf = d.forward(fake, backprop ? &fake_trace : nullptr);
  const auto terms = gan_loss(lr, lf, variant, GanSide::discriminator);
  check_finite_loss<S>(terms.value, "discriminator objective");
  if (backprop) {
    d.backward(real_trace, terms.grad_real, false, true);
    d.backward(fake_trace, terms.grad_fake, false, true);
  }
  return terms.value;
}

#define CVC_INSTANTIATE(S)                                                                                         \
  template PatchPlan sample_patch_plan<S>(const model::Generator<S>&, const model::ProjectionConfig&, int, int,    \
                                          Rng&);                                                                   \
  template double contrastive_loss<S>(const model::Generator<S>&, const model::ProjectionHeads<S>&,               \
                                      const Tensor<S>&, const Tensor<S>&, const std::vector<std::vector<int>>&);   \
  template double identity_nce<S>(const model::Generator<S>&, const model::ProjectionHeads<S>&, const Tensor<S>&, \
                                  const std::vector<std::vector<int>>&);                                           \
  template LossBreakdown total_loss<S>(ModelHandles<S>, const Tensor<S>&, const Tensor<S>&, const LossWeights&,   \
                                       GanVariant, const PatchPlan&, bool, Tensor<S>*);                            \
  template TracedForward<S> traced_forward<S>(const model::Generator<S>&, const Tensor<S>&);                  \
  template LossBreakdown total_loss_from<S>(ModelHandles<S>, TracedForward<S>&&, const Tensor<S>&,              \
                                            const LossWeights&, GanVariant, const PatchPlan&, bool);             \
  template double discriminator_loss<S>(model::Discriminator<S>&, const Tensor<S>&, const Tensor<S>&, GanVariant, \
                                        bool);

CVC_INSTANTIATE(float)
CVC_INSTANTIATE(double)

}  // namespace cvc::losses
