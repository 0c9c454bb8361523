// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fedlora {

void Dataset::validate() const {
  if (labeled()) {
    if (labels.size() != size()) {
      throw ContractViolation("Dataset: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(size()) + " inputs");
    }
    for (std::size_t y : labels) {
      if (y >= classes) throw ContractViolation("Dataset: label out of range");
    }
  } else if (targets.cols() != size()) {
    throw ContractViolation("Dataset: " + std::to_string(targets.cols()) + " targets for " +
                            std::to_string(size()) + " inputs");
  }
}

DenseMatrix Dataset::gather_inputs(const std::vector<std::size_t>& idx) const {
  DenseMatrix out(inputs.rows(), idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    for (std::size_t r = 0; r < inputs.rows(); ++r) out(r, j) = inputs(r, idx[j]);
  }
  return out;
}

Targets Dataset::gather_targets(const std::vector<std::size_t>& idx) const {
  Targets t;
  if (labeled()) {
    t.labels.reserve(idx.size());
    for (std::size_t i : idx) t.labels.push_back(labels[i]);
    return t;
  }
  t.values = DenseMatrix(targets.rows(), idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    for (std::size_t r = 0; r < targets.rows(); ++r) t.values(r, j) = targets(r, idx[j]);
  }
  return t;
}

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  Dataset out;
  out.inputs = inputs.columns(begin, count);
  out.classes = classes;
  if (labeled()) {
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  } else {
    out.targets = targets.columns(begin, count);
  }
  return out;
}

Dataset make_regression(std::size_t n_samples, std::size_t k, std::size_t d_out, double noise_std,
                        RngStream& rng) {
  if (n_samples == 0 || k == 0 || d_out == 0) {
    throw ContractViolation("make_regression: n_samples, k, d_out must be >= 1");
  }
  const DenseMatrix teacher =
      gaussian_matrix(d_out, k, 1.0 / std::sqrt(static_cast<double>(k)), rng);
  Dataset ds;
  ds.inputs = gaussian_matrix(k, n_samples, 1.0, rng);
  ds.targets = matmul(teacher, ds.inputs);
  if (noise_std > 0.0) ds.targets += gaussian_matrix(d_out, n_samples, noise_std, rng);
  return ds;
}

Dataset make_classification(std::size_t n_samples, std::size_t k, std::size_t classes,
                            RngStream& rng, double separation) {
  if (classes < 2) throw ContractViolation("make_classification: classes must be >= 2");
  if (n_samples == 0 || k == 0) throw ContractViolation("make_classification: empty shape");
  const DenseMatrix means =
      gaussian_matrix(k, classes, separation / std::sqrt(static_cast<double>(k)), rng);
  Dataset ds;
  ds.classes = classes;
  ds.labels.resize(n_samples);
  for (auto& y : ds.labels) y = static_cast<std::size_t>(rng.uniform_index(classes));
  ds.inputs = gaussian_matrix(k, n_samples, 1.0, rng);
  for (std::size_t j = 0; j < n_samples; ++j) {
    for (std::size_t r = 0; r < k; ++r) ds.inputs(r, j) += means(r, ds.labels[j]);
  }
  return ds;
}

bool Partition::valid_for(std::size_t n) const {
  std::vector<char> seen(n, 0);
  std::size_t total = 0;
  for (const auto& shard : shards) {
    if (shard.empty()) return false;
    for (std::size_t i : shard) {
      if (i >= n || seen[i]) return false;
      seen[i] = 1;
      ++total;
    }
  }
  return total == n;
}

void shuffle_indices(std::vector<std::size_t>& idx, RngStream& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

Partition partition_iid(const Dataset& dataset, std::size_t n_clients, RngStream& rng) {
  const std::size_t n = dataset.size();
  if (n_clients == 0) throw ContractViolation("partition_iid: need at least one client");
  if (n_clients > n) {
    throw ContractViolation("partition_iid: " + std::to_string(n_clients) + " clients for " +
                            std::to_string(n) + " samples");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle_indices(idx, rng);

  Partition p;
  p.shards.resize(n_clients);
  const std::size_t base = n / n_clients;
  const std::size_t extra = n % n_clients;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < n_clients; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    p.shards[c].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                       idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(p.shards[c].begin(), p.shards[c].end());
    pos += len;
  }
  return p;
}

Partition partition_dirichlet(const Dataset& dataset, std::size_t n_clients, double beta,
                              RngStream& rng) {
  const std::size_t n = dataset.size();
  if (!dataset.labeled()) throw ContractViolation("partition_dirichlet: dataset has no labels");
  if (!(beta > 0.0)) throw ContractViolation("partition_dirichlet: beta must be > 0");
  if (n_clients == 0) throw ContractViolation("partition_dirichlet: need at least one client");
  if (n_clients > n) {
    throw ContractViolation("partition_dirichlet: " + std::to_string(n_clients) +
                            " clients for " + std::to_string(n) + " samples");
  }

  Partition p;
  p.shards.resize(n_clients);
  std::vector<double> props(n_clients);
  for (std::size_t c = 0; c < dataset.classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (dataset.labels[i] == c) members.push_back(i);
    }
    if (members.empty()) continue;
    shuffle_indices(members, rng);

    double total = 0.0;
    for (double& q : props) {
      q = rng.gamma(beta);
      total += q;
    }
    std::size_t start = 0;
    double cumulative = 0.0;
    for (std::size_t client = 0; client < n_clients; ++client) {
      cumulative += props[client] / total;
      std::size_t stop = client + 1 == n_clients
                             ? members.size()
                             : static_cast<std::size_t>(
                                   std::llround(cumulative * static_cast<double>(members.size())));
      stop = std::clamp(stop, start, members.size());
      p.shards[client].insert(p.shards[client].end(),
                              members.begin() + static_cast<std::ptrdiff_t>(start),
                              members.begin() + static_cast<std::ptrdiff_t>(stop));
      start = stop;
    }
  }

  for (auto& shard : p.shards) std::sort(shard.begin(), shard.end());
  for (std::size_t client = 0; client < n_clients; ++client) {
    if (!p.shards[client].empty()) continue;
    auto largest = std::max_element(
        p.shards.begin(), p.shards.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    p.shards[client].push_back(largest->back());
    largest->pop_back();
  }
  return p;
}

}  // namespace fedlora
