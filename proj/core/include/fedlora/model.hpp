// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "fedlora/adapter.hpp"
#include "fedlora/linalg.hpp"

namespace fedlora {

enum class Activation { kIdentity, kTanh, kRelu };
enum class LossKind { kSquaredError, kCrossEntropy };

std::string_view to_string(Activation a) noexcept;
std::optional<Activation> parse_activation(std::string_view name) noexcept;
std::string_view to_string(LossKind k) noexcept;

/// A frozen base matrix with a trainable adapter. The base matrix is shared
/// read-only between every client that holds a copy of the network.
struct AdaptedLayer {
  std::shared_ptr<const DenseMatrix> w0;
  LoraAdapter adapter;
  Activation activation = Activation::kIdentity;

  std::size_t out_dim() const noexcept { return w0->rows(); }
  std::size_t in_dim() const noexcept { return w0->cols(); }
};

struct AdaptedNetwork {
  std::vector<AdaptedLayer> layers;
  LossKind loss_kind = LossKind::kSquaredError;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  /// Throws ContractViolation if the stack is empty or widths do not chain.
  void validate() const;
};

/// Everything the backward pass needs, one entry per layer.
struct ForwardTrace {
  std::vector<DenseMatrix> inputs;          // x_l (in_dim x batch)
  std::vector<DenseMatrix> adapter_inputs;  // A_l x_l
  std::vector<DenseMatrix> pre_activations; // W0 x + gamma B A x
  std::vector<DenseMatrix> contributions;   // gamma B A x
  DenseMatrix output;

  std::size_t size() const noexcept { return inputs.size(); }
};

struct ForwardResult {
  DenseMatrix output;
  ForwardTrace trace;
};

ForwardResult forward(const AdaptedNetwork& net, const DenseMatrix& x);

/// Evaluation forward that folds each adapter into Delta W = gamma B A first,
/// so the cost does not grow with the batch times the rank. The trace has no
/// adapter_inputs and is not meant for backward().
ForwardResult forward_merged(const AdaptedNetwork& net, const DenseMatrix& x);

/// The network with every adapter removed: only W0 and activations.
DenseMatrix frozen_forward(const AdaptedNetwork& net, const DenseMatrix& x);

struct LossResult {
  double loss = 0.0;
  DenseMatrix grad;  // v = dL/d(output), same shape as the output
};

/// 0.5 * ||f - y||^2 averaged over the batch columns; v = (f - y) / batch.
LossResult squared_error_loss(const DenseMatrix& output, const DenseMatrix& target);
/// Softmax negative log-likelihood averaged over the batch; v = (softmax - onehot) / batch.
/// Throws ContractViolation for a label outside [0, output.rows()).
LossResult cross_entropy_loss(const DenseMatrix& output, const std::vector<std::size_t>& labels);

/// Target of one batch: real vectors for squared error, class indices for cross entropy.
struct Targets {
  DenseMatrix values;
  std::vector<std::size_t> labels;
};

LossResult loss(const DenseMatrix& output, const Targets& target, LossKind kind);

/// Per-layer adapter gradients, in layer order.
std::vector<AdapterGradients> backward(const AdaptedNetwork& net, const ForwardTrace& trace,
                                       const DenseMatrix& v_final);

/// exp(loss) for cross entropy, the loss itself for squared error.
double perplexity_analog(double loss, LossKind kind) noexcept;

/// Builds a stack of frozen layers with fresh adapters. Widths are
/// in_dim -> hidden -> ... -> out_dim; hidden layers use `hidden_activation`,
/// the last layer is linear. Base weights are N(0, 1/fan_in).
struct NetworkShape {
  std::size_t in_dim = 64;
  std::size_t hidden = 64;
  std::size_t out_dim = 64;
  std::size_t layers = 2;
  Activation hidden_activation = Activation::kTanh;
};

std::vector<std::shared_ptr<const DenseMatrix>> make_frozen_weights(const NetworkShape& shape,
                                                                    std::uint64_t seed);

}  // namespace fedlora
