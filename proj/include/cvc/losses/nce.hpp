#pragma once

#include "cvc/model/projection.hpp"
#include "cvc/tensor.hpp"

#include <span>
#include <vector>

namespace cvc::losses {

/// Queries and keys of one encoder layer; keys row n is the positive of
/// queries row n, every other key row is one of its negatives.
template <typename S>
struct PatchBundle {
  int layer_index = 0;
  std::vector<int> query_ids;
  std::vector<int> key_ids;
  RowMatrix<S> queries;
  RowMatrix<S> keys;
  double temperature = 0.07;
};

/// -log softmax of the positive among {positive, negatives}, each divided by
/// tau, via log-sum-exp. Throws losses.DimensionMismatch / losses.NonPositiveTemperature.
double nce_single(std::span<const double> q, std::span<const double> v_pos, const RowMatrix<double>& v_negs, double tau);

/// Same loss from precomputed similarities (positive first).
double nce_from_similarities(double positive, std::span<const double> negatives, double tau);

/// Pairs projected queries and keys of each layer. Throws losses.LayerSetMismatch
/// if layers or patch ids do not correspond one-to-one.
template <typename S>
std::vector<PatchBundle<S>> make_bundles(const std::vector<model::ProjectedPatches<S>>& queries,
                                         const std::vector<model::ProjectedPatches<S>>& keys, double temperature);

template <typename S>
struct NceResult {
  double value = 0.0;
  std::vector<double> per_layer;
  std::vector<RowMatrix<S>> grad_queries;
  std::vector<RowMatrix<S>> grad_keys;
};

/// Sum over bundles and rows n of l(q_n, k_n, k_{!=n}); divided by L*(N+1)
/// when mean_reduce. Gradients are those of the returned value.
/// Throws losses.LayerSetMismatch when `expected_layers` is given and differs.
template <typename S>
NceResult<S> nce_multilayer(const std::vector<PatchBundle<S>>& bundles, bool mean_reduce, bool with_grads,
                            const std::vector<int>* expected_layers = nullptr);

}  // namespace cvc::losses
