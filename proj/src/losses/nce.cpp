#include "cvc/losses/nce.hpp"

#include "cvc/error.hpp"

#include <cmath>
#include <limits>

namespace cvc::losses {
namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("losses", "NonPositiveTemperature", std::to_string(tau));
}

}  // namespace

double nce_from_similarities(double positive, std::span<const double> negatives, double tau) {
  check_tau(tau);
  double mx = positive / tau;
  for (double s : negatives) mx = std::max(mx, s / tau);
  double acc = std::exp(positive / tau - mx);
  for (double s : negatives) acc += std::exp(s / tau - mx);
  return std::max(0.0, mx + std::log(acc) - positive / tau);
}

double nce_single(std::span<const double> q, std::span<const double> v_pos, const RowMatrix<double>& v_negs, double tau) {
  check_tau(tau);
  if (q.size() != v_pos.size() || (v_negs.rows() > 0 && static_cast<std::size_t>(v_negs.cols()) != q.size()))
    throw Error("losses", "DimensionMismatch", "query/key dimensions differ");
  Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(q.size()));
  Eigen::Map<const Eigen::VectorXd> pv(v_pos.data(), static_cast<Eigen::Index>(v_pos.size()));
  const Eigen::VectorXd neg = v_negs * qv;
  return nce_from_similarities(qv.dot(pv), {neg.data(), static_cast<std::size_t>(neg.size())}, tau);
}

template <typename S>
std::vector<PatchBundle<S>> make_bundles(const std::vector<model::ProjectedPatches<S>>& queries,
                                         const std::vector<model::ProjectedPatches<S>>& keys, double temperature) {
  if (queries.size() != keys.size()) throw Error("losses", "LayerSetMismatch", "query/key layer counts differ");
  std::vector<PatchBundle<S>> out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].layer_index != keys[i].layer_index || queries[i].ids != keys[i].ids)
      throw Error("losses", "LayerSetMismatch", "query and key patches do not correspond at layer " +
                                                    std::to_string(queries[i].layer_index));
    out.push_back({queries[i].layer_index, queries[i].ids, keys[i].ids, queries[i].vectors, keys[i].vectors, temperature});
  }
  return out;
}

template <typename S>
NceResult<S> nce_multilayer(const std::vector<PatchBundle<S>>& bundles, bool mean_reduce, bool with_grads,
                            const std::vector<int>* expected_layers) {
  if (expected_layers) {
    bool ok = expected_layers->size() == bundles.size();
    for (std::size_t i = 0; ok && i < bundles.size(); ++i) ok = (*expected_layers)[i] == bundles[i].layer_index;
    if (!ok) throw Error("losses", "LayerSetMismatch", "bundles do not cover the configured layers");
  }
  NceResult<S> res;
  std::size_t total_rows = 0;
  for (const auto& b : bundles) total_rows += static_cast<std::size_t>(b.queries.rows());
  const double scale = mean_reduce && total_rows > 0 ? 1.0 / static_cast<double>(total_rows) : 1.0;

  for (const auto& b : bundles) {
    check_tau(b.temperature);
    if (b.queries.rows() != b.keys.rows() || b.queries.cols() != b.keys.cols())
      throw Error("losses", "DimensionMismatch", "layer " + std::to_string(b.layer_index));
    if (b.query_ids != b.key_ids) throw Error("losses", "LayerSetMismatch", "patch ids differ at layer " + std::to_string(b.layer_index));
    const auto k = b.queries.rows();
    const S inv_tau = static_cast<S>(1.0 / b.temperature);
    RowMatrix<S> logits = (b.queries * b.keys.transpose()) * inv_tau;

    double layer_loss = 0.0;
    RowMatrix<S> dlogits;
    if (with_grads) dlogits.resize(k, k);
    for (Eigen::Index n = 0; n < k; ++n) {
      const S mx = logits.row(n).maxCoeff();
      S acc = 0;
      for (Eigen::Index j = 0; j < k; ++j) acc += std::exp(logits(n, j) - mx);
      const S lse = mx + std::log(acc);
      layer_loss += static_cast<double>(lse - logits(n, n));
      if (with_grads) {
        for (Eigen::Index j = 0; j < k; ++j) dlogits(n, j) = std::exp(logits(n, j) - lse) * static_cast<S>(scale);
        dlogits(n, n) -= static_cast<S>(scale);
      }
    }
    res.per_layer.push_back(layer_loss);
    res.value += layer_loss;
    if (with_grads) {
      res.grad_queries.push_back((dlogits * b.keys) * inv_tau);
      res.grad_keys.push_back((dlogits.transpose() * b.queries) * inv_tau);
    }
  }
  res.value *= scale;
  return res;
}

#define CVC_INSTANTIATE(S)                                                                                   \
  template std::vector<PatchBundle<S>> make_bundles<S>(const std::vector<model::ProjectedPatches<S>>&,       \
                                                       const std::vector<model::ProjectedPatches<S>>&, double); \
  template NceResult<S> nce_multilayer<S>(const std::vector<PatchBundle<S>>&, bool, bool, const std::vector<int>*);

CVC_INSTANTIATE(float)
CVC_INSTANTIATE(double)

}  // namespace cvc::losses
