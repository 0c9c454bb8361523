// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "fedlora/linalg.hpp"
#include "fedlora/model.hpp"

namespace fedlora {

/// Column-stacked samples: inputs is k x n, targets is d_out x n for
/// regression. Classification datasets carry labels and leave targets empty.
struct Dataset {
  DenseMatrix inputs;
  DenseMatrix targets;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return inputs.cols(); }
  std::size_t input_dim() const noexcept { return inputs.rows(); }
  bool labeled() const noexcept { return classes > 0; }

  /// Throws ContractViolation when lengths disagree or a label is out of range.
  void validate() const;

  /// Gathers the given samples into a batch, in the given order.
  DenseMatrix gather_inputs(const std::vector<std::size_t>& idx) const;
  Targets gather_targets(const std::vector<std::size_t>& idx) const;

  /// Samples [begin, begin + count) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t count) const;
};

/// x ~ N(0, I_k), y = W* x + eps with W* ~ N(0, 1/k) drawn first from `rng`
/// and eps ~ N(0, noise_std^2).
Dataset make_regression(std::size_t n_samples, std::size_t k, std::size_t d_out, double noise_std,
                        RngStream& rng);

/// Labels uniform over `classes`; x = mu_label + N(0, I_k), with class means
/// mu_c ~ N(0, separation^2 / k * I_k) so that ||mu_c|| is close to `separation`.
Dataset make_classification(std::size_t n_samples, std::size_t k, std::size_t classes,
                            RngStream& rng, double separation = 3.0);

/// N disjoint, exhaustive, non-empty index lists (each sorted ascending).
struct Partition {
  std::vector<std::vector<std::size_t>> shards;

  std::size_t clients() const noexcept { return shards.size(); }
  /// Disjoint, exhaustive over [0, n), no empty shard.
  bool valid_for(std::size_t n) const;
};

/// Shuffle, then split into near-equal contiguous blocks (sizes differ by at
/// most one, larger blocks first).
Partition partition_iid(const Dataset& dataset, std::size_t n_clients, RngStream& rng);

/// Label skew: for each class, proportions p ~ Dir(beta * 1_N) decide how that
/// class's (shuffled) samples are split across clients. An empty shard takes
/// one sample from the largest shard.
Partition partition_dirichlet(const Dataset& dataset, std::size_t n_clients, double beta,
                              RngStream& rng);

/// Fisher-Yates, driven by `rng`.
void shuffle_indices(std::vector<std::size_t>& idx, RngStream& rng);

}  // namespace fedlora
