#pragma once

// Two-radii hypersphere isolation loss: natural embeddings are pulled inside
// radius r_minus around a fixed center, manipulated embeddings are pushed
// outside r_plus; each class term is normalized by its own cardinality.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "isoface/exact_mean.hpp"
#include "isoface/tensor.hpp"

namespace isoface {

struct HypersphereSpec {
  Tensor center;        // dimension 2D (or D with sum fusion)
  double r_minus = 0.0; // 0 < r_minus < r_plus
  double r_plus = 0.0;

  double margin() const { return r_plus - r_minus; }

  void validate() const {
    if (!(r_minus > 0.0 && r_minus < r_plus))
      throw std::invalid_argument("radii must satisfy 0 < r_minus < r_plus");
  }
};

struct BatchPartition {
  std::vector<std::size_t> natural;
  std::vector<std::size_t> manipulated;
};

// Radii for an embedding dimension other than the reference one: hypersphere
// volume shrinks as the dimension grows, so radii scale with sqrt(dim ratio).
inline std::pair<double, double> scaled_radii(std::size_t embedding_dim,
                                              std::size_t reference_dim = 256,
                                              double r_minus = 0.042,
                                              double r_plus = 1.638) {
  const double k = std::sqrt(double(embedding_dim) / double(reference_dim));
  return {r_minus * k, r_plus * k};
}

template <typename T>
TensorT<T> compute_center(const std::vector<TensorT<T>>& embeddings) {
  if (embeddings.empty())
    throw std::invalid_argument("compute_center: empty embedding list");
  TensorT<T> c(embeddings.front().shape());
  for (const auto& e : embeddings) {
    if (!e.same_shape(c))
      throw std::invalid_argument("compute_center: dimension mismatch");
    c += e;
  }
  c *= T(1.0 / double(embeddings.size()));
  return c;
}

template <typename T>
double anomaly_score(const TensorT<T>& e, const HypersphereSpec& spec) {
  if (e.size() != spec.center.size())
    throw std::invalid_argument("embedding/center dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = double(e[i]) - spec.center[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

namespace detail {
inline void check_partition(std::size_t n, const BatchPartition& part) {
  if (part.natural.empty() && part.manipulated.empty())
    throw std::invalid_argument("both partitions empty");
  std::vector<char> seen(n, 0);
  for (std::size_t i : part.natural) {
    if (i >= n || seen[i]++) throw std::invalid_argument("bad partition index");
  }
  for (std::size_t i : part.manipulated) {
    if (i >= n || seen[i]++) throw std::invalid_argument("bad partition index");
  }
}
}  // namespace detail

template <typename T>
double isolation_loss(const std::vector<TensorT<T>>& embeddings,
                      const BatchPartition& part, const HypersphereSpec& spec) {
  detail::check_partition(embeddings.size(), part);
  spec.validate();
  // each class term is a correctly rounded mean, so replicating a partition's
  // members any whole number of times leaves the loss bit-identical
  double loss = 0.0;
  if (!part.natural.empty()) {
    std::vector<double> hinges;
    hinges.reserve(part.natural.size());
    for (std::size_t i : part.natural)
      hinges.push_back(
          std::max(0.0, anomaly_score(embeddings[i], spec) - spec.r_minus));
    loss += exact_mean(hinges);
  }
  if (!part.manipulated.empty()) {
    std::vector<double> hinges;
    hinges.reserve(part.manipulated.size());
    for (std::size_t i : part.manipulated)
      hinges.push_back(
          std::max(0.0, spec.r_plus - anomaly_score(embeddings[i], spec)));
    loss += exact_mean(hinges);
  }
  return loss;
}

// Subgradient convention: zero exactly on a hinge boundary, and zero when the
// embedding coincides with the center (radial direction undefined there).
template <typename T>
std::vector<TensorT<T>> isolation_loss_grad(
    const std::vector<TensorT<T>>& embeddings, const BatchPartition& part,
    const HypersphereSpec& spec) {
  detail::check_partition(embeddings.size(), part);
  spec.validate();
  std::vector<TensorT<T>> grads;
  grads.reserve(embeddings.size());
  for (const auto& e : embeddings) grads.emplace_back(e.shape());

  auto radial = [&](std::size_t idx, double sign, double norm_term) {
    const TensorT<T>& e = embeddings[idx];
    const double dist = anomaly_score(e, spec);
    if (dist < 1e-12) return;
    const double scale = sign / (norm_term * dist);
    for (std::size_t k = 0; k < e.size(); ++k)
      grads[idx][k] = T(scale * (double(e[k]) - spec.center[k]));
  };

  for (std::size_t i : part.natural) {
    if (anomaly_score(embeddings[i], spec) > spec.r_minus)
      radial(i, +1.0, double(part.natural.size()));
  }
  for (std::size_t j : part.manipulated) {
    if (anomaly_score(embeddings[j], spec) < spec.r_plus)
      radial(j, -1.0, double(part.manipulated.size()));
  }
  return grads;
}

}  // namespace isoface
