// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/optim.hpp"

#include <cmath>

namespace fedlora {

namespace {

void adam_step(const OptimizerSettings& s, std::uint64_t step, DenseMatrix& param,
               const DenseMatrix& grad, DenseMatrix& m, DenseMatrix& v) {
  if (m.empty()) {
    m = DenseMatrix(param.rows(), param.cols());
    v = DenseMatrix(param.rows(), param.cols());
  }
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  auto p = param.data();
  auto g = grad.data();
  auto md = m.data();
  auto vd = v.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    md[i] = s.beta1 * md[i] + (1.0 - s.beta1) * g[i];
    vd[i] = s.beta2 * vd[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double m_hat = md[i] / bc1;
    const double v_hat = vd[i] / bc2;
    p[i] -= s.learning_rate * (m_hat / (std::sqrt(v_hat) + s.epsilon) + s.weight_decay * p[i]);
  }
}

}  // namespace

std::string_view to_string(OptimizerKind k) noexcept {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

std::optional<OptimizerKind> parse_optimizer(std::string_view name) noexcept {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam" || name == "adamw") return OptimizerKind::kAdam;
  return std::nullopt;
}

void OptimizerState::reset() {
  m_a = v_a = m_b = v_b = DenseMatrix();
  step = 0;
}

UpdateStatus apply_update(OptimizerState& state, LoraAdapter& adapter,
                          const AdapterGradients& grads, UpdateMask mask) {
  if (mask.a && !grads.grad_a.same_shape(adapter.a)) {
    throw ContractViolation("apply_update: grad_A " + describe_shape(grads.grad_a) + " vs A " +
                            describe_shape(adapter.a));
  }
  if (mask.b && !grads.grad_b.same_shape(adapter.b)) {
    throw ContractViolation("apply_update: grad_B " + describe_shape(grads.grad_b) + " vs B " +
                            describe_shape(adapter.b));
  }
  if ((mask.a && !grads.grad_a.all_finite()) || (mask.b && !grads.grad_b.all_finite())) {
    return UpdateStatus::kNonFiniteGradient;
  }

  const auto& s = state.settings;
  if (s.kind == OptimizerKind::kSgd) {
    if (mask.a) adapter.a.axpy(-s.learning_rate, grads.grad_a);
    if (mask.b) adapter.b.axpy(-s.learning_rate, grads.grad_b);
    ++state.step;
    return UpdateStatus::kApplied;
  }

  ++state.step;
  if (mask.a) adam_step(s, state.step, adapter.a, grads.grad_a, state.m_a, state.v_a);
  if (mask.b) adam_step(s, state.step, adapter.b, grads.grad_b, state.m_b, state.v_b);
  return UpdateStatus::kApplied;
}

}  // namespace fedlora
