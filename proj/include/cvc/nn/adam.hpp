#pragma once

#include "cvc/nn/layers.hpp"

#include <vector>

namespace cvc::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Moments are indexed in list order.
template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(ParamRefs<S> params, AdamConfig cfg);

  void step();
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const noexcept { return cfg_.lr; }

  long steps() const noexcept { return t_; }
  std::vector<std::vector<S>>& first_moments() { return m_; }
  std::vector<std::vector<S>>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }
  const ParamRefs<S>& params() const noexcept { return params_; }

 private:
  ParamRefs<S> params_;
  AdamConfig cfg_;
  std::vector<std::vector<S>> m_;
  std::vector<std::vector<S>> v_;
  long t_ = 0;
};

}  // namespace cvc::nn
