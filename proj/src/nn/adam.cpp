#include "cvc/nn/adam.hpp"

#include <cmath>

namespace cvc::nn {

template <typename S>
Adam<S>::Adam(ParamRefs<S> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->size(), S(0));
    v_.emplace_back(p->size(), S(0));
  }
}

template <typename S>
void Adam<S>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const S step_size = static_cast<S>(cfg_.lr / bc1);
  const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
  const S sqrt_bc2 = static_cast<S>(std::sqrt(bc2));
  const S eps = static_cast<S>(cfg_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const S g = p.grad[i];
      m[i] = b1 * m[i] + (S(1) - b1) * g;
      v[i] = b2 * v[i] + (S(1) - b2) * g * g;
      p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) / sqrt_bc2 + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace cvc::nn
