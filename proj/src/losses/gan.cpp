#include "cvc/losses/gan.hpp"

#include "cvc/error.hpp"

#include <cmath>

namespace cvc::losses {
namespace {

template <typename S>
S softplus(S x) {
  return std::max(x, S(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename S>
S sigmoid(S x) {
  if (x >= 0) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
void check_finite(const Tensor<S>& t) {
  for (S v : t.data)
    if (!std::isfinite(v)) throw Error("losses", "NonFiniteLogits", "discriminator produced a non-finite logit");
}

}  // namespace

GanVariant parse_gan_variant(const std::string& name) {
  if (name == "least_squares") return GanVariant::least_squares;
  if (name == "log_saturating") return GanVariant::log_saturating;
  throw Error("losses", "UnknownGanVariant", name);
}

std::string to_string(GanVariant v) { return v == GanVariant::least_squares ? "least_squares" : "log_saturating"; }

template <typename S>
GanTerms<S> gan_loss(const Tensor<S>& d_real, const Tensor<S>& d_fake, GanVariant variant, GanSide side) {
  check_finite(d_fake);
  GanTerms<S> out;
  out.grad_fake = Tensor<S>(d_fake.channels, d_fake.height, d_fake.width);
  const S nf = static_cast<S>(d_fake.size());

  if (side == GanSide::generator) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
      const S f = d_fake.data[i];
      if (variant == GanVariant::log_saturating) {
        acc += softplus(-f);
        out.grad_fake.data[i] = (sigmoid(f) - S(1)) / nf;
      } else {
        acc += (f - S(1)) * (f - S(1));
        out.grad_fake.data[i] = S(2) * (f - S(1)) / nf;
      }
    }
    out.value = acc / static_cast<double>(nf);
    return out;
  }

  check_finite(d_real);
  out.grad_real = Tensor<S>(d_real.channels, d_real.height, d_real.width);
  const S nr = static_cast<S>(d_real.size());
  double real_acc = 0.0, fake_acc = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    const S r = d_real.data[i];
    if (variant == GanVariant::log_saturating) {
      real_acc += softplus(-r);
      out.grad_real.data[i] = (sigmoid(r) - S(1)) / nr;
    } else {
      real_acc += (r - S(1)) * (r - S(1));
      out.grad_real.data[i] = S(2) * (r - S(1)) / nr;
    }
  }
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    const S f = d_fake.data[i];
    if (variant == GanVariant::log_saturating) {
      fake_acc += softplus(f);
      out.grad_fake.data[i] = sigmoid(f) / nf;
    } else {
      fake_acc += f * f;
      out.grad_fake.data[i] = S(2) * f / nf;
    }
  }
  out.value = real_acc / static_cast<double>(nr) + fake_acc / static_cast<double>(nf);
  return out;
}

double gan_generator_minimax(const Tensor<double>& d_fake) {
  check_finite(d_fake);
  double acc = 0.0;
  for (double f : d_fake.data) acc -= softplus(f);
  return acc / static_cast<double>(d_fake.size());
}

template GanTerms<float> gan_loss<float>(const Tensor<float>&, const Tensor<float>&, GanVariant, GanSide);
template GanTerms<double> gan_loss<double>(const Tensor<double>&, const Tensor<double>&, GanVariant, GanSide);

}  // namespace cvc::losses
