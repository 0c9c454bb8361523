// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "fedlora/model.hpp"

namespace fedlora {
namespace {

RngStream stream(std::uint64_t entity) { return RngStream(13, {StreamKind::kTest, entity, 0}); }

AdaptedNetwork make_net(const std::vector<std::size_t>& widths, Activation hidden, LossKind kind,
                        RngStream& rng, bool fresh = false) {
  AdaptedNetwork net;
  net.loss_kind = kind;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    AdaptedLayer layer;
    layer.w0 = std::make_shared<const DenseMatrix>(gaussian_matrix(widths[l + 1], widths[l], 0.5, rng));
    layer.adapter = init_adapter(widths[l + 1], widths[l], 3, 0.5, rng);
    if (!fresh) layer.adapter.b = gaussian_matrix(widths[l + 1], 3, 0.5, rng);
    layer.adapter.gamma = 0.9;
    layer.activation = l + 2 == widths.size() ? Activation::kIdentity : hidden;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

TEST(Forward, SingleIdentityLayerEqualsAdapterForward) {
  auto rng = stream(0);
  const auto net = make_net({4, 3}, Activation::kTanh, LossKind::kSquaredError, rng);
  const auto x = gaussian_matrix(4, 5, 1.0, rng);
  const auto& layer = net.layers.front();
  EXPECT_EQ(forward(net, x).output, adapter_forward(layer.adapter, *layer.w0, x).h);
}

TEST(Forward, FreshAdaptersMatchFrozenNetwork) {
  auto rng = stream(1);
  const auto net = make_net({5, 6, 4}, Activation::kTanh, LossKind::kSquaredError, rng, true);
  const auto x = gaussian_matrix(5, 7, 1.0, rng);
  const auto fr = forward(net, x);
  EXPECT_EQ(fr.output, frozen_forward(net, x));
  EXPECT_EQ(forward_merged(net, x).output, frozen_forward(net, x));
  for (const auto& c : fr.trace.contributions) EXPECT_EQ(max_abs(c), 0.0);
}

TEST(Forward, TwoLayerTanhMatchesStraightLineRecomputation) {
  auto rng = stream(2);
  const auto net = make_net({3, 4, 2}, Activation::kTanh, LossKind::kSquaredError, rng);
  const auto x = gaussian_matrix(3, 1, 1.0, rng);
  const auto out = forward(net, x).output;

  std::vector<double> cur(x.data().begin(), x.data().end());
  for (const auto& layer : net.layers) {
    const auto& w0 = *layer.w0;
    const auto& a = layer.adapter.a;
    const auto& b = layer.adapter.b;
    std::vector<double> next(w0.rows());
    for (std::size_t i = 0; i < w0.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < w0.cols(); ++j) {
        double eff = w0(i, j);
        for (std::size_t p = 0; p < a.rows(); ++p) eff += layer.adapter.gamma * b(i, p) * a(p, j);
        s += eff * cur[j];
      }
      next[i] = layer.activation == Activation::kTanh ? std::tanh(s) : s;
    }
    cur = next;
  }
  for (std::size_t i = 0; i < cur.size(); ++i) EXPECT_NEAR(out(i, 0), cur[i], 1e-12);
}

TEST(Forward, MergedPathAgreesWithFactoredPath) {
  auto rng = stream(3);
  const auto net = make_net({6, 5, 4}, Activation::kRelu, LossKind::kSquaredError, rng);
  const auto x = gaussian_matrix(6, 3, 1.0, rng);
  EXPECT_LE(max_abs_diff(forward(net, x).output, forward_merged(net, x).output), 1e-12);
}

TEST(Forward, InputWidthMismatchThrows) {
  auto rng = stream(4);
  const auto net = make_net({4, 3}, Activation::kTanh, LossKind::kSquaredError, rng);
  EXPECT_THROW(forward(net, DenseMatrix(5, 1)), ContractViolation);
  AdaptedNetwork empty;
  EXPECT_THROW(empty.validate(), ContractViolation);
}

TEST(SquaredError, PerfectFitIsZero) {
  const auto y = DenseMatrix::from_rows({{1, 2}, {3, 4}});
  const auto r = squared_error_loss(y, y);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad, DenseMatrix(2, 2));
}

TEST(SquaredError, ScalarExample) {
  const auto r = squared_error_loss(DenseMatrix::from_rows({{3}}), DenseMatrix::from_rows({{1}}));
  EXPECT_EQ(r.loss, 2.0);
  EXPECT_EQ(r.grad, DenseMatrix::from_rows({{2}}));
}

TEST(SquaredError, AveragesOverBatch) {
  const auto r = squared_error_loss(DenseMatrix::from_rows({{3, 1}}), DenseMatrix::from_rows({{1, 1}}));
  EXPECT_EQ(r.loss, 1.0);
  EXPECT_EQ(r.grad, DenseMatrix::from_rows({{1, 0}}));
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  auto rng = stream(5);
  DenseMatrix logits = gaussian_matrix(3, 2, 1.0, rng);
  const std::vector<std::size_t> labels = {2, 0};
  const auto r = cross_entropy_loss(logits, labels);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double saved = logits.data()[i];
    logits.data()[i] = saved + 1e-6;
    const double up = cross_entropy_loss(logits, labels).loss;
    logits.data()[i] = saved - 1e-6;
    const double down = cross_entropy_loss(logits, labels).loss;
    logits.data()[i] = saved;
    const double numeric = (up - down) / 2e-6;
    EXPECT_NEAR(r.grad.data()[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(CrossEntropy, StableForHugeLogits) {
  const auto r = cross_entropy_loss(DenseMatrix::from_rows({{1000}, {0}}), {0});
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(CrossEntropy, InvalidLabelThrows) {
  EXPECT_THROW(cross_entropy_loss(DenseMatrix(3, 1), {3}), ContractViolation);
  EXPECT_THROW(cross_entropy_loss(DenseMatrix(3, 2), {0}), ContractViolation);
}

TEST(Perplexity, Values) {
  EXPECT_EQ(perplexity_analog(0.0, LossKind::kCrossEntropy), 1.0);
  EXPECT_NEAR(perplexity_analog(std::log(4.0), LossKind::kCrossEntropy), 4.0, 1e-12);
  EXPECT_EQ(perplexity_analog(2.5, LossKind::kSquaredError), 2.5);
  const auto uniform = cross_entropy_loss(DenseMatrix(10, 4), {0, 3, 5, 9});
  EXPECT_NEAR(perplexity_analog(uniform.loss, LossKind::kCrossEntropy), 10.0, 0.1);
}

TEST(Backward, SingleLayerEqualsAdapterBackward) {
  auto rng = stream(6);
  const auto net = make_net({4, 3}, Activation::kTanh, LossKind::kSquaredError, rng);
  const auto x = gaussian_matrix(4, 2, 1.0, rng);
  const auto v = gaussian_matrix(3, 2, 1.0, rng);
  const auto grads = backward(net, forward(net, x).trace, v);
  const auto direct = adapter_backward(net.layers[0].adapter, x, v);
  EXPECT_EQ(grads[0].grad_a, direct.grad_a);
  EXPECT_EQ(grads[0].grad_b, direct.grad_b);
}

TEST(Backward, ZeroSensitivityGivesZeroGradients) {
  auto rng = stream(7);
  const auto net = make_net({4, 5, 3}, Activation::kTanh, LossKind::kSquaredError, rng);
  const auto x = gaussian_matrix(4, 2, 1.0, rng);
  for (const auto& g : backward(net, forward(net, x).trace, DenseMatrix(3, 2))) {
    EXPECT_EQ(max_abs(g.grad_a), 0.0);
    EXPECT_EQ(max_abs(g.grad_b), 0.0);
  }
}

TEST(Backward, StaleTraceThrows) {
  auto rng = stream(8);
  const auto net = make_net({4, 5, 3}, Activation::kTanh, LossKind::kSquaredError, rng);
  const auto other = make_net({4, 6, 3}, Activation::kTanh, LossKind::kSquaredError, rng);
  const auto trace = forward(other, gaussian_matrix(4, 2, 1.0, rng)).trace;
  EXPECT_THROW(backward(net, trace, DenseMatrix(3, 2)), ContractViolation);
  const auto good = forward(net, gaussian_matrix(4, 2, 1.0, rng)).trace;
  EXPECT_THROW(backward(net, good, DenseMatrix(3, 3)), ContractViolation);
}

// Every trainable parameter of nets up to three layers against central differences.
TEST(Backward, FullNetworkFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto rng = stream(100 + seed);
    const std::size_t depth = 1 + seed % 3;
    std::vector<std::size_t> widths = {1 + rng.uniform_index(8)};
    for (std::size_t l = 0; l < depth; ++l) widths.push_back(2 + rng.uniform_index(7));
    const LossKind kind = seed % 2 ? LossKind::kCrossEntropy : LossKind::kSquaredError;
    const Activation act = seed % 4 < 2 ? Activation::kTanh : Activation::kIdentity;
    AdaptedNetwork net = make_net(widths, act, kind, rng);
    const auto x = gaussian_matrix(widths.front(), 3, 1.0, rng);
    Targets y;
    y.values = gaussian_matrix(widths.back(), 3, 1.0, rng);
    y.labels = {0, 1, widths.back() - 1};

    const auto fr = forward(net, x);
    const auto grads = backward(net, fr.trace, loss(fr.output, y, kind).grad);
    auto f = [&] { return loss(forward(net, x).output, y, kind).loss; };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      for (DenseMatrix* p : {&net.layers[l].adapter.a, &net.layers[l].adapter.b}) {
        const DenseMatrix& analytic = p == &net.layers[l].adapter.a ? grads[l].grad_a : grads[l].grad_b;
        for (std::size_t i = 0; i < p->size(); ++i) {
          const double saved = p->data()[i];
          p->data()[i] = saved + 1e-6;
          const double up = f();
          p->data()[i] = saved - 1e-6;
          const double down = f();
          p->data()[i] = saved;
          const double numeric = (up - down) / 2e-6;
          EXPECT_NEAR(analytic.data()[i], numeric, 1e-5 * std::max(1.0, std::abs(numeric)))
              << "seed " << seed << " layer " << l;
        }
      }
    }
  }
}

TEST(Trace, ContributionsSumToZeroAtInit) {
  auto rng = stream(9);
  const auto net = make_net({4, 4, 4, 2}, Activation::kTanh, LossKind::kSquaredError, rng, true);
  const auto trace = forward(net, gaussian_matrix(4, 3, 1.0, rng)).trace;
  ASSERT_EQ(trace.size(), 3u);
  double total = 0.0;
  for (const auto& c : trace.contributions) total += frobenius_norm(c);
  EXPECT_EQ(total, 0.0);
}

TEST(FrozenWeights, DeterministicAndScaled) {
  NetworkShape shape;
  shape.in_dim = 64;
  shape.hidden = 64;
  shape.out_dim = 10;
  const auto w1 = make_frozen_weights(shape, 3);
  const auto w2 = make_frozen_weights(shape, 3);
  ASSERT_EQ(w1.size(), 2u);
  EXPECT_EQ(*w1[0], *w2[0]);
  EXPECT_EQ(w1[1]->rows(), 10u);
  EXPECT_NEAR(frobenius_norm(*w1[0]), std::sqrt(64.0), 0.1 * 8.0);
  EXPECT_NE(*make_frozen_weights(shape, 4)[0], *w1[0]);
}

TEST(Activation, NamesRoundTrip) {
  for (Activation a : {Activation::kIdentity, Activation::kTanh, Activation::kRelu}) {
    EXPECT_EQ(parse_activation(to_string(a)), a);
  }
  EXPECT_FALSE(parse_activation("gelu"));
}

}  // namespace
}  // namespace fedlora
