// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "fedlora/linalg.hpp"

namespace fedlora {

/// How the adapter scale gamma is derived from (alpha, client count N, rank r).
///
///   kStandard        alpha / r
///   kRankStabilized  alpha / sqrt(r)
///   kFederated       alpha * sqrt(N / r)
///   kAblationSmall   1 / (sqrt(N) * sqrt(r))
///   kAblationLarge   N^2 / sqrt(r)
///   kFixed           value
struct ScalingRule {
  enum class Kind { kStandard, kRankStabilized, kFederated, kAblationSmall, kAblationLarge, kFixed };

  Kind kind = Kind::kFederated;
  /// alpha for the alpha-parameterized rules, gamma itself for kFixed, unused otherwise.
  double value = 8.0;

  static ScalingRule standard(double alpha) { return {Kind::kStandard, alpha}; }
  static ScalingRule rank_stabilized(double alpha) { return {Kind::kRankStabilized, alpha}; }
  static ScalingRule federated(double alpha) { return {Kind::kFederated, alpha}; }
  static ScalingRule ablation_small() { return {Kind::kAblationSmall, 0.0}; }
  static ScalingRule ablation_large() { return {Kind::kAblationLarge, 0.0}; }
  static ScalingRule fixed(double gamma) { return {Kind::kFixed, gamma}; }

  bool uses_alpha() const noexcept {
    return kind == Kind::kStandard || kind == Kind::kRankStabilized || kind == Kind::kFederated;
  }

  friend bool operator==(const ScalingRule&, const ScalingRule&) = default;
};

std::string_view to_string(ScalingRule::Kind kind) noexcept;
/// Accepts the names produced by to_string(): standard, rank_stabilized,
/// federated, ablation_small, ablation_large, fixed.
std::optional<ScalingRule::Kind> parse_scaling_kind(std::string_view name) noexcept;

/// Resolves gamma. Throws ContractViolation for N == 0, r == 0 or a
/// non-positive alpha / fixed value.
double scaling_factor(const ScalingRule& rule, std::size_t n_clients, std::size_t rank);

/// One low-rank adapter attached to a frozen d x k base matrix.
/// `gamma` is 0 until a run binds it with scaling_factor(); it is not changed
/// afterwards.
struct LoraAdapter {
  DenseMatrix a;  // r x k
  DenseMatrix b;  // d x r
  std::size_t rank = 0;
  double gamma = 0.0;
  double sigma_a = 0.0;

  std::size_t out_dim() const noexcept { return b.rows(); }
  std::size_t in_dim() const noexcept { return a.cols(); }
};

struct AdapterGradients {
  DenseMatrix grad_a;  // r x k
  DenseMatrix grad_b;  // d x r
  DenseMatrix grad_x;  // k x batch, adapter path only
};

/// B = 0, A ~ N(0, sigma_a^2).
LoraAdapter init_adapter(std::size_t d, std::size_t k, std::size_t r, double sigma_a,
                         RngStream& rng);

struct AdapterOutput {
  DenseMatrix h;      // W0 x + gamma B A x
  DenseMatrix delta;  // gamma B A x
  DenseMatrix ax;     // A x, kept so the backward pass does not recompute it
};

/// Forward pass h = W0 x + gamma * B (A x) with column-stacked inputs x (k x batch).
AdapterOutput adapter_forward(const LoraAdapter& adapter, const DenseMatrix& w0,
                              const DenseMatrix& x);

/// Closed-form parameter gradients given v = dL/dh (d x batch):
///   grad_B = gamma v x^T A^T
///   grad_A = gamma B^T v x^T
///   grad_x = gamma A^T B^T v   (the frozen path W0^T v is left to the caller)
AdapterGradients adapter_backward(const LoraAdapter& adapter, const DenseMatrix& x,
                                  const DenseMatrix& v);
/// Same as above with A x supplied by the caller.
AdapterGradients adapter_backward(const LoraAdapter& adapter, const DenseMatrix& x,
                                  const DenseMatrix& ax, const DenseMatrix& v);

/// W0 + gamma B A.
DenseMatrix merge_adapter(const LoraAdapter& adapter, const DenseMatrix& w0);

}  // namespace fedlora
