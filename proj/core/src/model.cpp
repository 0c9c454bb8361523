// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedlora {

namespace {

void apply_activation(Activation act, DenseMatrix& m) {
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kTanh:
      for (double& v : m.data()) v = std::tanh(v);
      return;
    case Activation::kRelu:
      for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
      return;
  }
}

// v <- v * act'(pre), elementwise.
void scale_by_derivative(Activation act, const DenseMatrix& pre, DenseMatrix& v) {
  auto p = pre.data();
  auto g = v.data();
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kTanh:
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = std::tanh(p[i]);
        g[i] *= 1.0 - t * t;
      }
      return;
    case Activation::kRelu:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(p[i] > 0.0)) g[i] = 0.0;
      }
      return;
  }
}

}  // namespace

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
  }
  return "unknown";
}

std::optional<Activation> parse_activation(std::string_view name) noexcept {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  return std::nullopt;
}

std::string_view to_string(LossKind k) noexcept {
  return k == LossKind::kSquaredError ? "squared_error" : "cross_entropy";
}

void AdaptedNetwork::validate() const {
  if (layers.empty()) throw ContractViolation("AdaptedNetwork: at least one layer required");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (!layer.w0) throw ContractViolation("AdaptedNetwork: layer without base weights");
    if (layer.adapter.b.rows() != layer.out_dim() || layer.adapter.a.cols() != layer.in_dim()) {
      throw ContractViolation("AdaptedNetwork: adapter of layer " + std::to_string(l) +
                              " does not match its base matrix");
    }
    if (l > 0 && layers[l - 1].out_dim() != layer.in_dim()) {
      throw ContractViolation("AdaptedNetwork: layer " + std::to_string(l) +
                              " input width does not match previous output");
    }
  }
}

ForwardResult forward(const AdaptedNetwork& net, const DenseMatrix& x) {
  net.validate();
  if (x.rows() != net.in_dim()) {
    throw ContractViolation("forward: input " + describe_shape(x) + " but network expects " +
                            std::to_string(net.in_dim()) + " rows");
  }
  ForwardResult result;
  auto& trace = result.trace;
  trace.inputs.reserve(net.layers.size());
  DenseMatrix current = x;
  for (const auto& layer : net.layers) {
    AdapterOutput out = adapter_forward(layer.adapter, *layer.w0, current);
    trace.inputs.push_back(std::move(current));
    trace.adapter_inputs.push_back(std::move(out.ax));
    trace.contributions.push_back(std::move(out.delta));
    current = out.h;
    trace.pre_activations.push_back(std::move(out.h));
    apply_activation(layer.activation, current);
  }
  trace.output = current;
  result.output = std::move(current);
  return result;
}

ForwardResult forward_merged(const AdaptedNetwork& net, const DenseMatrix& x) {
  net.validate();
  if (x.rows() != net.in_dim()) {
    throw ContractViolation("forward_merged: input " + describe_shape(x) +
                            " but network expects " + std::to_string(net.in_dim()) + " rows");
  }
  ForwardResult result;
  auto& trace = result.trace;
  DenseMatrix current = x;
  for (const auto& layer : net.layers) {
    DenseMatrix delta_w = matmul(layer.adapter.b, layer.adapter.a);
    delta_w *= layer.adapter.gamma;
    DenseMatrix delta = matmul(delta_w, current);
    DenseMatrix pre = matmul(*layer.w0, current);
    pre += delta;
    trace.inputs.push_back(std::move(current));
    trace.contributions.push_back(std::move(delta));
    current = pre;
    trace.pre_activations.push_back(std::move(pre));
    apply_activation(layer.activation, current);
  }
  trace.output = current;
  result.output = std::move(current);
  return result;
}

DenseMatrix frozen_forward(const AdaptedNetwork& net, const DenseMatrix& x) {
  net.validate();
  DenseMatrix current = x;
  for (const auto& layer : net.layers) {
    current = matmul(*layer.w0, current);
    apply_activation(layer.activation, current);
  }
  return current;
}

LossResult squared_error_loss(const DenseMatrix& output, const DenseMatrix& target) {
  if (!output.same_shape(target) || output.cols() == 0) {
    throw ContractViolation("squared_error_loss: output " + describe_shape(output) +
                            " vs target " + describe_shape(target));
  }
  const auto batch = static_cast<double>(output.cols());
  LossResult r;
  r.grad = output - target;
  double acc = 0.0;
  for (double e : r.grad.data()) acc += e * e;
  r.loss = 0.5 * acc / batch;
  for (double& e : r.grad.data()) e /= batch;
  return r;
}

LossResult cross_entropy_loss(const DenseMatrix& output, const std::vector<std::size_t>& labels) {
  if (labels.size() != output.cols() || output.cols() == 0) {
    throw ContractViolation("cross_entropy_loss: " + std::to_string(labels.size()) +
                            " labels for output " + describe_shape(output));
  }
  const std::size_t classes = output.rows();
  const auto batch = static_cast<double>(output.cols());
  LossResult r;
  r.grad = DenseMatrix(classes, output.cols());
  double total = 0.0;
  for (std::size_t j = 0; j < output.cols(); ++j) {
    const std::size_t y = labels[j];
    if (y >= classes) {
      throw ContractViolation("cross_entropy_loss: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    double mx = output(0, j);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, output(c, j));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(output(c, j) - mx);
    const double log_z = mx + std::log(z);
    total += log_z - output(y, j);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(output(c, j) - log_z);
      r.grad(c, j) = (p - (c == y ? 1.0 : 0.0)) / batch;
    }
  }
  r.loss = total / batch;
  return r;
}

LossResult loss(const DenseMatrix& output, const Targets& target, LossKind kind) {
  return kind == LossKind::kSquaredError ? squared_error_loss(output, target.values)
                                         : cross_entropy_loss(output, target.labels);
}

std::vector<AdapterGradients> backward(const AdaptedNetwork& net, const ForwardTrace& trace,
                                       const DenseMatrix& v_final) {
  net.validate();
  const std::size_t n = net.layers.size();
  if (trace.size() != n || trace.pre_activations.size() != n ||
      trace.adapter_inputs.size() != n) {
    throw ContractViolation("backward: trace has " + std::to_string(trace.size()) +
                            " layers, network has " + std::to_string(n));
  }
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = net.layers[l];
    if (trace.inputs[l].rows() != layer.in_dim() ||
        trace.pre_activations[l].rows() != layer.out_dim() ||
        trace.adapter_inputs[l].rows() != layer.adapter.rank) {
      throw ContractViolation("backward: stale trace at layer " + std::to_string(l));
    }
  }
  if (!v_final.same_shape(trace.pre_activations.back())) {
    throw ContractViolation("backward: v " + describe_shape(v_final) + " vs output " +
                            describe_shape(trace.pre_activations.back()));
  }

  std::vector<AdapterGradients> grads(n);
  DenseMatrix v = v_final;
  for (std::size_t l = n; l-- > 0;) {
    const auto& layer = net.layers[l];
    scale_by_derivative(layer.activation, trace.pre_activations[l], v);
    grads[l] = adapter_backward(layer.adapter, trace.inputs[l], trace.adapter_inputs[l], v);
    if (l > 0) {
      DenseMatrix upstream = matmul_tn(*layer.w0, v);
      upstream += grads[l].grad_x;
      v = std::move(upstream);
    }
  }
  return grads;
}

double perplexity_analog(double loss, LossKind kind) noexcept {
  return kind == LossKind::kCrossEntropy ? std::exp(loss) : loss;
}

std::vector<std::shared_ptr<const DenseMatrix>> make_frozen_weights(const NetworkShape& shape,
                                                                    std::uint64_t seed) {
  if (shape.layers == 0 || shape.in_dim == 0 || shape.out_dim == 0 ||
      (shape.layers > 1 && shape.hidden == 0)) {
    throw ContractViolation("make_frozen_weights: all widths and the layer count must be >= 1");
  }
  std::vector<std::shared_ptr<const DenseMatrix>> weights;
  std::size_t fan_in = shape.in_dim;
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const std::size_t fan_out = l + 1 == shape.layers ? shape.out_dim : shape.hidden;
    RngStream rng(seed, {StreamKind::kNetwork, l, 0});
    weights.push_back(std::make_shared<const DenseMatrix>(
        gaussian_matrix(fan_out, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng)));
    fan_in = fan_out;
  }
  return weights;
}

}  // namespace fedlora
