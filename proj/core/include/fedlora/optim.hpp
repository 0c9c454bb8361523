// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "fedlora/adapter.hpp"
#include "fedlora/linalg.hpp"

namespace fedlora {

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind k) noexcept;
std::optional<OptimizerKind> parse_optimizer(std::string_view name) noexcept;

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled (AdamW-style) decay; ignored by SGD.
  double weight_decay = 0.0;
};

/// Which adapter matrices an update may touch.
struct UpdateMask {
  bool a = true;
  bool b = true;
};

/// Client-local optimizer state for one adapter. Moment buffers are created
/// lazily on the first Adam step.
struct OptimizerState {
  OptimizerSettings settings;
  DenseMatrix m_a, v_a, m_b, v_b;
  std::uint64_t step = 0;

  explicit OptimizerState(OptimizerSettings s = {}) : settings(s) {}
  void reset();
};

enum class UpdateStatus { kApplied, kNonFiniteGradient };

/// sgd:  p <- p - lr * g
/// adam: bias-corrected first/second moments, p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
///
/// A non-finite gradient leaves both the adapter and the state untouched and
/// returns kNonFiniteGradient.
UpdateStatus apply_update(OptimizerState& state, LoraAdapter& adapter,
                          const AdapterGradients& grads, UpdateMask mask = {});

}  // namespace fedlora
