#include <doctest.h>

#include "cvc/losses/objective.hpp"
#include "support.hpp"

#include <cmath>

using namespace cvc;
using namespace cvc::losses;

namespace {

struct Mini {
  model::Generator<double> g;
  model::Discriminator<double> d;
  model::ProjectionHeads<double> heads;
};

Mini mini_model() {
  model::GeneratorConfig gc;
  gc.base_channels = 8;
  gc.n_resnet_blocks = 1;
  model::DiscriminatorConfig dc{2, 8};
  model::ProjectionConfig pc;
  pc.selected_layers = {1, 2, 3, 4, 5};
  pc.patches_per_layer = 16;
  pc.embed_dim = 16;
  Mini m{model::Generator<double>(gc), model::Discriminator<double>(dc), {}};
  m.heads = model::make_projection_heads(m.g, pc);
  Rng rng(11);
  m.g.init(rng, 0.2);
  m.d.init(rng, 0.2);
  m.heads.init(rng, 0.2);
  return m;
}

bool close(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return std::abs(analytic - numeric) <= 1e-3 * scale + 1e-7;
}

// Checks `count` parameter entries, spread evenly over `params`, against central differences.
int check_entries(const nn::ParamRefs<double>& params, const std::function<double()>& loss, int per_param) {
  const double h = 1e-5;
  int checked = 0;
  for (auto* p : params) {
    const std::size_t n = p->size();
    for (int k = 0; k < per_param && static_cast<std::size_t>(k) < n; ++k) {
      const std::size_t i = (static_cast<std::size_t>(k) * 7919 + 3) % n;
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = loss();
      p->value[i] = keep - h;
      const double down = loss();
      p->value[i] = keep;
      const double numeric = (up - down) / (2 * h);
      INFO(p->name << "[" << i << "] analytic " << p->grad[i] << " numeric " << numeric);
      CHECK(close(p->grad[i], numeric));
      ++checked;
    }
  }
  return checked;
}

}  // namespace

TEST_CASE("generator objective gradients match central differences") {
  auto m = mini_model();
  ModelHandles<double> h{&m.g, &m.d, &m.heads};
  const auto x = test::random_tensor(1, 16, 16, 21), y = test::random_tensor(1, 16, 16, 22);
  Rng rng(23);
  const auto plan = sample_patch_plan(m.g, m.heads.config(), 16, 16, rng);
  const LossWeights w{1.0, 1.0};

  auto params = m.g.parameters();
  const auto head_params = m.heads.parameters();
  params.insert(params.end(), head_params.begin(), head_params.end());
  nn::zero_grads(params);
  nn::zero_grads(m.d.parameters());
  total_loss(h, x, y, w, GanVariant::least_squares, plan, true);

  const auto loss = [&] { return total_loss(h, x, y, w, GanVariant::least_squares, plan, false).total; };
  CHECK(check_entries(params, loss, 1) >= 20);
}

TEST_CASE("discriminator objective gradients match central differences") {
  for (auto variant : {GanVariant::least_squares, GanVariant::log_saturating}) {
    auto m = mini_model();
    const auto real = test::random_tensor(1, 16, 16, 31), fake = test::random_tensor(1, 16, 16, 32);
    const auto params = m.d.parameters();
    nn::zero_grads(params);
    discriminator_loss(m.d, real, fake, variant, true);
    const auto loss = [&] { return discriminator_loss(m.d, real, fake, variant, false); };
    CHECK(check_entries(params, loss, 4) >= 20);
  }
}
