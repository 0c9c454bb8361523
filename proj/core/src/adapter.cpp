// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/adapter.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace fedlora {

namespace {

constexpr std::array<std::pair<ScalingRule::Kind, std::string_view>, 6> kRuleNames{{
    {ScalingRule::Kind::kStandard, "standard"},
    {ScalingRule::Kind::kRankStabilized, "rank_stabilized"},
    {ScalingRule::Kind::kFederated, "federated"},
    {ScalingRule::Kind::kAblationSmall, "ablation_small"},
    {ScalingRule::Kind::kAblationLarge, "ablation_large"},
    {ScalingRule::Kind::kFixed, "fixed"},
}};

void check_forward_shapes(const LoraAdapter& adapter, const DenseMatrix& w0,
                          const DenseMatrix& x) {
  if (w0.rows() != adapter.b.rows() || w0.cols() != adapter.a.cols() ||
      adapter.a.rows() != adapter.b.cols() || x.rows() != w0.cols()) {
    throw ContractViolation("adapter_forward: W0 " + describe_shape(w0) + ", A " +
                            describe_shape(adapter.a) + ", B " + describe_shape(adapter.b) +
                            ", x " + describe_shape(x));
  }
}

}  // namespace

std::string_view to_string(ScalingRule::Kind kind) noexcept {
  for (const auto& [k, name] : kRuleNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<ScalingRule::Kind> parse_scaling_kind(std::string_view name) noexcept {
  for (const auto& [k, n] : kRuleNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

double scaling_factor(const ScalingRule& rule, std::size_t n_clients, std::size_t rank) {
  if (n_clients == 0) throw ContractViolation("scaling_factor: client count must be >= 1");
  if (rank == 0) throw ContractViolation("scaling_factor: rank must be >= 1");
  if ((rule.uses_alpha() || rule.kind == ScalingRule::Kind::kFixed) && !(rule.value > 0.0)) {
    throw ContractViolation("scaling_factor: alpha / fixed gamma must be > 0");
  }
  const auto n = static_cast<double>(n_clients);
  const auto r = static_cast<double>(rank);
  switch (rule.kind) {
    case ScalingRule::Kind::kStandard:
      return rule.value / r;
    case ScalingRule::Kind::kRankStabilized:
      return rule.value / std::sqrt(r);
    case ScalingRule::Kind::kFederated:
      return rule.value * std::sqrt(n / r);
    case ScalingRule::Kind::kAblationSmall:
      return 1.0 / (std::sqrt(n) * std::sqrt(r));
    case ScalingRule::Kind::kAblationLarge:
      return n * n / std::sqrt(r);
    case ScalingRule::Kind::kFixed:
      return rule.value;
  }
  throw ContractViolation("scaling_factor: unknown rule");
}

LoraAdapter init_adapter(std::size_t d, std::size_t k, std::size_t r, double sigma_a,
                         RngStream& rng) {
  if (d == 0 || k == 0 || r == 0) throw ContractViolation("init_adapter: d, k, r must be >= 1");
  LoraAdapter adapter;
  adapter.a = gaussian_matrix(r, k, sigma_a, rng);
  adapter.b = DenseMatrix(d, r);
  adapter.rank = r;
  adapter.sigma_a = sigma_a;
  return adapter;
}

AdapterOutput adapter_forward(const LoraAdapter& adapter, const DenseMatrix& w0,
                              const DenseMatrix& x) {
  check_forward_shapes(adapter, w0, x);
  AdapterOutput out;
  out.ax = matmul(adapter.a, x);
  out.delta = matmul(adapter.b, out.ax);
  out.delta *= adapter.gamma;
  out.h = matmul(w0, x);
  out.h += out.delta;
  return out;
}

AdapterGradients adapter_backward(const LoraAdapter& adapter, const DenseMatrix& x,
                                  const DenseMatrix& v) {
  if (x.rows() != adapter.a.cols()) {
    throw ContractViolation("adapter_backward: x " + describe_shape(x) + " vs A " +
                            describe_shape(adapter.a));
  }
  return adapter_backward(adapter, x, matmul(adapter.a, x), v);
}

AdapterGradients adapter_backward(const LoraAdapter& adapter, const DenseMatrix& x,
                                  const DenseMatrix& ax, const DenseMatrix& v) {
  if (x.rows() != adapter.a.cols() || v.rows() != adapter.b.rows() || x.cols() != v.cols() ||
      ax.rows() != adapter.a.rows() || ax.cols() != x.cols() ||
      adapter.a.rows() != adapter.b.cols()) {
    throw ContractViolation("adapter_backward: A " + describe_shape(adapter.a) + ", B " +
                            describe_shape(adapter.b) + ", x " + describe_shape(x) + ", v " +
                            describe_shape(v));
  }
  const double g = adapter.gamma;
  AdapterGradients grads;
  grads.grad_b = matmul_nt(v, ax);
  grads.grad_b *= g;
  DenseMatrix btv = matmul_tn(adapter.b, v);
  grads.grad_a = matmul_nt(btv, x);
  grads.grad_a *= g;
  grads.grad_x = matmul_tn(adapter.a, btv);
  grads.grad_x *= g;
  return grads;
}

DenseMatrix merge_adapter(const LoraAdapter& adapter, const DenseMatrix& w0) {
  if (w0.rows() != adapter.b.rows() || w0.cols() != adapter.a.cols()) {
    throw ContractViolation("merge_adapter: W0 " + describe_shape(w0) + " vs adapter " +
                            describe_shape(adapter.b) + "x" + describe_shape(adapter.a));
  }
  DenseMatrix merged = matmul(adapter.b, adapter.a);
  merged *= adapter.gamma;
  merged += w0;
  return merged;
}

}  // namespace fedlora
