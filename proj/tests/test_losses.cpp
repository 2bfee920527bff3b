#include <doctest.h>

#include "cvc/error.hpp"
#include "cvc/losses/gan.hpp"
#include "cvc/losses/nce.hpp"
#include "cvc/losses/objective.hpp"
#include "support.hpp"

#include <cmath>
#include <numbers>

using namespace cvc;
using namespace cvc::losses;

namespace {

std::string error_kind(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.qualified_name();
  }
  return "no error";
}

RowMatrix<double> random_unit_rows(int rows, int dim, Rng& rng) {
  RowMatrix<double> m(rows, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  for (int r = 0; r < rows; ++r) m.row(r).normalize();
  return m;
}

// Direct evaluation of -log(exp(q.v+/t) / (exp(q.v+/t) + sum exp(q.v-/t))), no stabilization.
double naive_nce(const Eigen::RowVectorXd& q, const Eigen::RowVectorXd& pos, const RowMatrix<double>& negs, double tau) {
  const double p = std::exp(q.dot(pos) / tau);
  double denom = p;
  for (Eigen::Index n = 0; n < negs.rows(); ++n) denom += std::exp(q.dot(negs.row(n)) / tau);
  return -std::log(p / denom);
}

PatchBundle<double> random_bundle(int layer, int rows, int dim, double tau, Rng& rng) {
  PatchBundle<double> b;
  b.layer_index = layer;
  b.queries = random_unit_rows(rows, dim, rng);
  b.keys = random_unit_rows(rows, dim, rng);
  b.temperature = tau;
  for (int i = 0; i < rows; ++i) b.query_ids.push_back(i), b.key_ids.push_back(i);
  return b;
}

double double_loop(const std::vector<PatchBundle<double>>& bundles) {
  double total = 0.0;
  for (const auto& b : bundles)
    for (Eigen::Index n = 0; n < b.queries.rows(); ++n) {
      RowMatrix<double> negs(b.keys.rows() - 1, b.keys.cols());
      for (Eigen::Index j = 0, k = 0; j < b.keys.rows(); ++j)
        if (j != n) negs.row(k++) = b.keys.row(j);
      const Eigen::RowVectorXd q = b.queries.row(n), v = b.keys.row(n);
      total += nce_single({q.data(), static_cast<std::size_t>(q.size())}, {v.data(), static_cast<std::size_t>(v.size())},
                          negs, b.temperature);
    }
  return total;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Mini {
  model::Generator<double> g;
  model::Discriminator<double> d;
  model::ProjectionHeads<double> heads;
};

Mini mini_model(std::uint64_t seed, int patches = 16) {
  model::GeneratorConfig gc;
  gc.base_channels = 8;
  gc.n_resnet_blocks = 1;
  model::DiscriminatorConfig dc{2, 8};
  model::ProjectionConfig pc;
  pc.selected_layers = {1, 2, 3, 4, 5};
  pc.patches_per_layer = patches;
  pc.embed_dim = 16;
  Mini m{model::Generator<double>(gc), model::Discriminator<double>(dc), {}};
  m.heads = model::make_projection_heads(m.g, pc);
  Rng rng(seed);
  m.g.init(rng, 0.2);
  m.d.init(rng, 0.2);
  m.heads.init(rng, 0.2);
  return m;
}

}  // namespace

TEST_CASE("nce_single uniform similarities give ln(N+1)") {
  for (int n : {1, 7, 255}) {
    const std::vector<double> q = {0.6, 0.8}, v = {0.6, 0.8};
    RowMatrix<double> negs(n, 2);
    for (int i = 0; i < n; ++i) negs.row(i) << 0.6, 0.8;
    CHECK(std::abs(nce_single(q, v, negs, 0.07) - std::log(n + 1.0)) < 1e-9);
  }
  CHECK(std::abs(nce_single(std::vector<double>{1, 0}, std::vector<double>{1, 0}, RowMatrix<double>{{1.0, 0.0}}, 0.07) -
                 std::numbers::ln2) < 1e-12);
}

TEST_CASE("nce_single matches the naive formula on random unit vectors") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = random_unit_rows(1, 16, rng), v = random_unit_rows(1, 16, rng), negs = random_unit_rows(7, 16, rng);
    const double got = nce_single({q.data(), 16}, {v.data(), 16}, negs, 0.07);
    CHECK(test::rel_err(got, naive_nce(q.row(0), v.row(0), negs, 0.07)) < 1e-6);
  }
}

TEST_CASE("nce_single validates its inputs") {
  const std::vector<double> q = {1, 0}, v3 = {1, 0, 0};
  CHECK(error_kind([&] { nce_single(q, v3, RowMatrix<double>::Zero(2, 2), 0.07); }) == "losses.DimensionMismatch");
  CHECK(error_kind([&] { nce_single(q, q, RowMatrix<double>::Zero(2, 3), 0.07); }) == "losses.DimensionMismatch");
  CHECK(error_kind([&] { nce_single(q, q, RowMatrix<double>::Zero(2, 2), 0.0); }) == "losses.NonPositiveTemperature");
  CHECK(error_kind([&] { nce_single(q, q, RowMatrix<double>::Zero(2, 2), -1.0); }) == "losses.NonPositiveTemperature");
}

TEST_CASE("property: nce is non-negative and equals ln(N+1) only at uniform similarity") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 20));
    std::vector<double> negs(static_cast<std::size_t>(n));
    for (auto& s : negs) s = 2.0 * uniform01(rng) - 1.0;
    const double pos = 2.0 * uniform01(rng) - 1.0;
    const double l = nce_from_similarities(pos, negs, 0.1);
    CHECK(l >= 0.0);
    CHECK(std::isfinite(l));
    CHECK(std::abs(l - std::log(n + 1.0)) > 1e-9);
    std::vector<double> same(static_cast<std::size_t>(n), pos);
    CHECK(std::abs(nce_from_similarities(pos, same, 0.1) - std::log(n + 1.0)) < 1e-12);
  }
}

TEST_CASE("property: scaling similarities and temperature together leaves nce unchanged") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const double c = 0.1 + 5.0 * uniform01(rng), tau = 0.05 + uniform01(rng);
    std::vector<double> negs(9), scaled(9);
    for (int i = 0; i < 9; ++i) negs[i] = 2.0 * uniform01(rng) - 1.0, scaled[i] = c * negs[i];
    const double pos = 2.0 * uniform01(rng) - 1.0;
    CHECK(test::rel_err(nce_from_similarities(pos, negs, tau), nce_from_similarities(c * pos, scaled, c * tau)) < 1e-12);
  }
}

TEST_CASE("property: lowering one negative similarity strictly lowers nce") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> negs(5);
    for (auto& s : negs) s = 2.0 * uniform01(rng) - 1.0;
    const double pos = 2.0 * uniform01(rng) - 1.0;
    const double before = nce_from_similarities(pos, negs, 0.2);
    negs[uniform_index(rng, negs.size())] -= 0.05 + 0.5 * uniform01(rng);
    CHECK(nce_from_similarities(pos, negs, 0.2) < before);
  }
}

TEST_CASE("nce_multilayer closed forms") {
  PatchBundle<double> b;
  b.layer_index = 1;
  b.queries = RowMatrix<double>{{1.0, 0.0}, {1.0, 0.0}};
  b.keys = RowMatrix<double>{{1.0, 0.0}, {1.0, 0.0}};
  b.query_ids = b.key_ids = {0, 1};
  const auto r = nce_multilayer<double>({b}, false, false);
  CHECK(std::abs(r.value - 2.0 * std::numbers::ln2) < 1e-12);
  CHECK(std::abs(nce_multilayer<double>({b}, true, false).value - std::numbers::ln2) < 1e-12);

  PatchBundle<double> perfect;
  perfect.layer_index = 1;
  perfect.queries = RowMatrix<double>::Identity(4, 4);
  perfect.keys = RowMatrix<double>::Identity(4, 4);
  perfect.query_ids = perfect.key_ids = {0, 1, 2, 3};
  perfect.temperature = 0.01;
  CHECK(nce_multilayer<double>({perfect}, false, false).value < 1e-40);
}

TEST_CASE("nce_multilayer equals the double-loop oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<PatchBundle<double>> bundles;
    for (int l = 0; l < 2; ++l) bundles.push_back(random_bundle(l + 1, 2 + static_cast<int>(uniform_index(rng, 15)), 8, 0.07, rng));
    const auto r = nce_multilayer(bundles, false, false);
    CHECK(test::rel_err(r.value, double_loop(bundles)) < 1e-6);
    CHECK(test::rel_err(r.per_layer[0] + r.per_layer[1], r.value) < 1e-12);
  }
}

TEST_CASE("nce_multilayer gradients match central differences") {
  Rng rng(6);
  auto bundles = std::vector<PatchBundle<double>>{random_bundle(1, 5, 4, 0.5, rng), random_bundle(2, 3, 4, 0.5, rng)};
  const auto r = nce_multilayer(bundles, false, true);
  const double h = 1e-6;
  for (std::size_t l = 0; l < bundles.size(); ++l)
    for (Eigen::Index i = 0; i < bundles[l].queries.size(); ++i) {
      for (int which = 0; which < 2; ++which) {
        auto& m = which == 0 ? bundles[l].queries : bundles[l].keys;
        const double keep = m.data()[i];
        m.data()[i] = keep + h;
        const double up = nce_multilayer(bundles, false, false).value;
        m.data()[i] = keep - h;
        const double down = nce_multilayer(bundles, false, false).value;
        m.data()[i] = keep;
        const double analytic = which == 0 ? r.grad_queries[l].data()[i] : r.grad_keys[l].data()[i];
        CHECK(std::abs(analytic - (up - down) / (2 * h)) < 1e-6);
      }
    }
}

TEST_CASE("nce_multilayer rejects mismatched layer sets") {
  Rng rng(7);
  auto bundles = std::vector<PatchBundle<double>>{random_bundle(1, 4, 4, 0.07, rng)};
  const std::vector<int> expected = {1, 2};
  CHECK(error_kind([&] { nce_multilayer(bundles, false, false, &expected); }) == "losses.LayerSetMismatch");
  bundles[0].key_ids[0] = 3;
  CHECK(error_kind([&] { nce_multilayer(bundles, false, false); }) == "losses.LayerSetMismatch");
}

TEST_CASE("gan_loss closed forms") {
  const Tensor<double> zero(1, 4, 5, 0.0), one(1, 4, 5, 1.0);
  CHECK(std::abs(gan_loss(zero, zero, GanVariant::log_saturating, GanSide::discriminator).value - 2.0 * std::numbers::ln2) < 1e-9);
  CHECK(gan_loss(one, zero, GanVariant::least_squares, GanSide::discriminator).value == 0.0);
  CHECK(gan_loss(zero, one, GanVariant::least_squares, GanSide::generator).value == 0.0);
  CHECK(std::abs(gan_generator_minimax(zero) - std::log(0.5)) < 1e-12);
}

TEST_CASE("gan_loss matches an elementwise oracle, with gradients") {
  for (auto variant : {GanVariant::log_saturating, GanVariant::least_squares})
    for (auto side : {GanSide::discriminator, GanSide::generator}) {
      const auto r = test::random_tensor(1, 3, 7, 1, 3.0), f = test::random_tensor(1, 3, 7, 2, 3.0);
      double expect = 0.0;
      const double n = static_cast<double>(r.data.size());
      for (std::size_t i = 0; i < r.data.size(); ++i) {
        if (variant == GanVariant::log_saturating) {
          expect += side == GanSide::discriminator
                        ? (-std::log(sigmoid(r.data[i])) - std::log(1.0 - sigmoid(f.data[i]))) / n
                        : -std::log(sigmoid(f.data[i])) / n;
        } else {
          expect += side == GanSide::discriminator
                        ? ((r.data[i] - 1) * (r.data[i] - 1) + f.data[i] * f.data[i]) / n
                        : (f.data[i] - 1) * (f.data[i] - 1) / n;
        }
      }
      const auto got = gan_loss(r, f, variant, side);
      CHECK(test::rel_err(got.value, expect) < 1e-6);
      const double h = 1e-6;
      for (std::size_t i = 0; i < f.data.size(); ++i) {
        auto fu = f, fd = f;
        fu.data[i] += h;
        fd.data[i] -= h;
        const double num = (gan_loss(r, fu, variant, side).value - gan_loss(r, fd, variant, side).value) / (2 * h);
        CHECK(std::abs(got.grad_fake.data[i] - num) < 1e-6);
      }
    }
}

TEST_CASE("gan_loss rejects non-finite logits") {
  Tensor<double> bad(1, 2, 2, 0.0);
  bad.data[1] = std::nan("");
  CHECK(error_kind([&] { gan_loss(bad, bad, GanVariant::least_squares, GanSide::discriminator); }) == "losses.NonFiniteLogits");
}

TEST_CASE("property: the log discriminator loss is minimized toward sigma(real)=1, sigma(fake)=0") {
  Tensor<double> r(1, 1, 1, 0.3), f(1, 1, 1, -0.2);
  double prev = gan_loss(r, f, GanVariant::log_saturating, GanSide::discriminator).value;
  for (int it = 0; it < 200; ++it) {
    for (auto* t : {&r, &f}) {
      double best = t->data[0], best_v = prev;
      for (double step : {-0.5, 0.5}) {
        const double keep = t->data[0];
        t->data[0] = keep + step;
        const double v = gan_loss(r, f, GanVariant::log_saturating, GanSide::discriminator).value;
        if (v < best_v) best_v = v, best = t->data[0];
        t->data[0] = keep;
      }
      t->data[0] = best;
      CHECK(best_v <= prev);
      prev = best_v;
    }
  }
  CHECK(sigmoid(r.data[0]) > 0.99);
  CHECK(sigmoid(f.data[0]) < 0.01);
}

TEST_CASE("total_loss weight bookkeeping") {
  auto m = mini_model(1);
  ModelHandles<double> h{&m.g, &m.d, &m.heads};
  const auto x = test::random_tensor(1, 16, 16, 2), y = test::random_tensor(1, 16, 16, 3);
  Rng rng(4);
  const auto plan = sample_patch_plan(m.g, m.heads.config(), 16, 16, rng);

  const auto zero = total_loss(h, x, y, {0.0, 0.0}, GanVariant::least_squares, plan, false);
  CHECK(zero.total == zero.gan);
  CHECK_FALSE(zero.identity_enabled);

  const auto paper = total_loss(h, x, y, {1.0, 1.0}, GanVariant::least_squares, plan, false);
  CHECK(paper.total == doctest::Approx(paper.gan + paper.nce + paper.identity).epsilon(1e-15));
  CHECK(paper.identity > 0.0);

  // mu = 0: bitwise gan + lambda * nce from independent evaluations.
  const double lambda = 0.7;
  const auto ablated = total_loss(h, x, y, {lambda, 0.0}, GanVariant::least_squares, plan, false);
  const auto fake = m.g.forward(x);
  const double gan = gan_loss(m.d.forward(fake), m.d.forward(fake), GanVariant::least_squares, GanSide::generator).value;
  const double nce = contrastive_loss(m.g, m.heads, x, fake, plan.source);
  CHECK(ablated.gan == gan);
  CHECK(ablated.nce == nce);
  CHECK(ablated.total == gan + lambda * nce);
  CHECK(ablated.identity == 0.0);

  CHECK(error_kind([&] { LossWeights{-1.0, 1.0}.validate(); }) == "losses.InvalidWeights");
  CHECK(error_kind([&] { LossWeights{1.0, std::nan("")}.validate(); }) == "losses.InvalidWeights");
}

TEST_CASE("identity_nce with an identity generator reduces to matched positives") {
  auto m = mini_model(2);
  m.g.make_identity();
  const auto y = test::random_tensor(1, 16, 16, 5);
  Rng rng(6);
  const auto plan = sample_patch_plan(m.g, m.heads.config(), 16, 16, rng);
  const auto keys = model::project_patches(m.heads, model::encoder_features(m.g, y, m.heads.config().selected_layers), plan.identity);
  const auto bundles = make_bundles(keys, keys, m.heads.config().temperature);
  for (const auto& b : bundles)
    for (Eigen::Index n = 0; n < b.queries.rows(); ++n) CHECK(b.queries.row(n).dot(b.keys.row(n)) == doctest::Approx(1.0));
  CHECK(identity_nce(m.g, m.heads, y, plan.identity) == doctest::Approx(nce_multilayer(bundles, false, false).value).epsilon(1e-12));
}

TEST_CASE("identity_nce is seed-invariant under exhaustive patch sampling") {
  // 8x8 input: layers 4 and 5 sit at 2x2, so 4 patches cover every position.
  model::GeneratorConfig gc;
  gc.base_channels = 4;
  gc.n_resnet_blocks = 1;
  model::Generator<double> g(gc);
  model::ProjectionConfig pc;
  pc.selected_layers = {4, 5};
  pc.patches_per_layer = 4;
  pc.embed_dim = 8;
  auto heads = model::make_projection_heads(g, pc);
  Rng init(1);
  g.init(init, 0.3);
  heads.init(init, 0.3);
  const auto y = test::random_tensor(1, 8, 8, 2);
  std::vector<double> values;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    values.push_back(identity_nce(g, heads, y, sample_patch_plan(g, pc, 8, 8, rng).identity));
  }
  for (double v : values) CHECK(test::rel_err(v, values[0]) < 1e-12);
}

TEST_CASE("identity_nce equals nce over G_enc(y) keys and G_enc(G(y)) queries") {
  auto m = mini_model(3);
  const auto y = test::random_tensor(1, 16, 16, 7);
  Rng rng(8);
  const auto plan = sample_patch_plan(m.g, m.heads.config(), 16, 16, rng);
  const auto& layers = m.heads.config().selected_layers;
  const auto keys = model::project_patches(m.heads, model::encoder_features(m.g, y, layers), plan.identity);
  const auto queries = model::project_patches(m.heads, model::encoder_features(m.g, m.g.forward(y), layers), plan.identity);
  const double expect = nce_multilayer(make_bundles(queries, keys, m.heads.config().temperature), false, false).value;
  CHECK(test::rel_err(identity_nce(m.g, m.heads, y, plan.identity), expect) < 1e-12);
}
