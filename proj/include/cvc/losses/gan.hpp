#pragma once

#include "cvc/tensor.hpp"

#include <string>

namespace cvc::losses {

enum class GanVariant { log_saturating, least_squares };
enum class GanSide { generator, discriminator };

GanVariant parse_gan_variant(const std::string& name);
std::string to_string(GanVariant v);

template <typename S>
struct GanTerms {
  double value = 0.0;
  Tensor<S> grad_real;  // empty on the generator side
  Tensor<S> grad_fake;
};

/// Patch logits are averaged over the map.
/// log_saturating: D side -mean(log s(real)) - mean(log(1 - s(fake))); G side -mean(log s(fake)).
/// least_squares:  D side mean((real-1)^2) + mean(fake^2);             G side mean((fake-1)^2).
template <typename S>
GanTerms<S> gan_loss(const Tensor<S>& d_real, const Tensor<S>& d_fake, GanVariant variant, GanSide side);

/// Generator term of the literal minimax objective, mean(log(1 - s(fake))).
/// Only for loss-value checks; training uses the non-saturating form.
double gan_generator_minimax(const Tensor<double>& d_fake);

}  // namespace cvc::losses
