// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

// Deliberately self-contained: plain loops over DenseMatrix storage, so that a
// bug in the shared linear algebra or model code cannot cancel out.

#include <string>

#include "fedlora/metrics.hpp"

namespace fedlora {

namespace {

DenseMatrix loop_mul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ContractViolation("trajectory_oracle: inner dimensions differ");
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
  }
  return out;
}

DenseMatrix loop_transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

// out = a + s * b, entry by entry.
DenseMatrix loop_axpy(const DenseMatrix& a, double s, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) + s * b(i, j);
  }
  return out;
}

DenseMatrix loop_mean(const std::vector<DenseMatrix>& ms) {
  DenseMatrix out(ms.front().rows(), ms.front().cols());
  for (const auto& m : ms) out = loop_axpy(out, 1.0, m);
  DenseMatrix scaled(out.rows(), out.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      scaled(i, j) = out(i, j) / static_cast<double>(ms.size());
    }
  }
  return scaled;
}

// v = (W0 x + gamma B A x - y) / b
DenseMatrix residual(const TrajectoryInputs& in, const DenseMatrix& b_mat, const DenseMatrix& a_mat,
                     const DenseMatrix& x, const DenseMatrix& y) {
  const DenseMatrix base = loop_mul(in.w0, x);
  const DenseMatrix adapted = loop_mul(b_mat, loop_mul(a_mat, x));
  DenseMatrix v(base.rows(), base.cols());
  const auto batch = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < v.rows(); ++i) {
    for (std::size_t j = 0; j < v.cols(); ++j) {
      v(i, j) = (base(i, j) + in.gamma * adapted(i, j) - y(i, j)) / batch;
    }
  }
  return v;
}

}  // namespace

TrajectoryState trajectory_oracle(const TrajectoryInputs& in) {
  const std::size_t n = in.initial_a.size();
  if (n == 0) throw ContractViolation("trajectory_oracle: no clients");
  if (in.x.size() != n || in.y.size() != n) {
    throw ContractViolation("trajectory_oracle: need data for every client");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (in.x[i].size() < 2 || in.y[i].size() < 2) {
      throw ContractViolation("trajectory_oracle: client " + std::to_string(i) +
                              " needs batches for two rounds");
    }
  }
  const std::size_t d = in.w0.rows();
  const std::size_t r = in.initial_a.front().rows();
  const double step = in.eta * in.gamma;

  TrajectoryState s;
  for (std::size_t i = 0; i < n; ++i) {
    const DenseMatrix b0(d, r);
    const DenseMatrix v0 = residual(in, b0, in.initial_a[i], in.x[i][0], in.y[i][0]);
    const DenseMatrix g = loop_mul(loop_mul(v0, loop_transpose(in.x[i][0])),
                                   loop_transpose(in.initial_a[i]));
    s.b1.push_back(loop_axpy(b0, -step, g));
  }
  const DenseMatrix abar = loop_mean(in.initial_a);
  s.a1.assign(n, abar);

  std::vector<DenseMatrix> a_local;
  for (std::size_t i = 0; i < n; ++i) {
    const DenseMatrix v1 = residual(in, s.b1[i], abar, in.x[i][1], in.y[i][1]);
    const DenseMatrix vxt = loop_mul(v1, loop_transpose(in.x[i][1]));
    s.b2.push_back(loop_axpy(s.b1[i], -step, loop_mul(vxt, loop_transpose(abar))));
    a_local.push_back(loop_axpy(abar, -step, loop_mul(loop_transpose(s.b1[i]), vxt)));
  }
  s.a2.assign(n, loop_mean(a_local));
  return s;
}

}  // namespace fedlora
