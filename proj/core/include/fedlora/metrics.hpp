// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedlora/adapter.hpp"
#include "fedlora/config.hpp"
#include "fedlora/linalg.hpp"
#include "fedlora/model.hpp"
#include "fedlora/optim.hpp"

namespace fedlora {

/// One row of the metrics log.
struct MetricsRecord {
  std::size_t round = 0;
  double mean_loss = 0.0;
  double perplexity = 0.0;
  /// Empty for the evaluation-only round 0.
  std::optional<double> avg_grad_norm;
  std::vector<double> act_mean;  // per layer
  std::vector<double> act_var;   // per layer
  std::size_t diverged_count = 0;
};

/// Mean over the trainable matrices of ||G||_F / sqrt(#entries), i.e. the
/// mean per-entry RMS gradient. Matrices excluded by `mask` are skipped.
double avg_grad_norm(std::span<const AdapterGradients> grads, UpdateMask mask = {});

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Entry-wise mean and (population) variance of each layer's adapter
/// contribution gamma B A x over the batch. One-pass (Welford).
std::vector<Moments> activation_moments(const ForwardTrace& trace);
Moments entry_moments(const DenseMatrix& m);

struct MomentIdentityResult {
  double target = 0.0;                   // r * sigma^2 / N
  double abar_diag_mean = 0.0;           // E[Abar^T Abar], mean of the diagonal
  double abar_offdiag_max = 0.0;         // worst |off-diagonal|
  double cross_diag_mean = 0.0;          // E[A_i^T Abar], diagonal mean
  double cross_offdiag_max = 0.0;
};

/// Monte-Carlo estimate of E[Abar^T Abar] and E[(A_0)^T Abar] (both k x k)
/// where Abar is the mean of N i.i.d. r x k Gaussian matrices with entry
/// std-dev sigma_a. Each sample uses its own stream (kMonteCarlo, sample).
MomentIdentityResult moment_identity_check(std::size_t rank, std::size_t n_clients, std::size_t k,
                                           double sigma_a, std::size_t samples,
                                           std::uint64_t seed);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

enum class SweepAxis { kRank, kClients };
std::string_view to_string(SweepAxis a) noexcept;

struct SweepPoint {
  double swept_value = 0.0;
  std::vector<MetricsRecord> records;
  double round1_grad_norm = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
};

struct StabilityReport {
  SweepAxis axis = SweepAxis::kRank;
  std::vector<SweepPoint> points;
  /// max / min of the round-1 average gradient norm across the sweep.
  double flatness_ratio = 1.0;
  /// log-log slope of the round-1 gradient norm against the swept value
  /// (0 for a single point).
  double slope = 0.0;
};

/// Runs one experiment per value with everything else (seeds included)
/// fixed. Values must be non-empty and strictly increasing.
StabilityReport stability_sweep(const ExperimentConfig& base, SweepAxis axis,
                                std::span<const std::size_t> values, bool parallel = false);

// ---------------------------------------------------------------------------
// Trajectory oracle
// ---------------------------------------------------------------------------

/// Inputs for the closed-form two-round recursion of split aggregation with a
/// single linear adapted layer, squared-error loss, plain SGD and one local
/// step per round. x[i][n] / y[i][n] are client i's batch in round n+1.
struct TrajectoryInputs {
  double eta = 0.0;
  double gamma = 0.0;
  DenseMatrix w0;                               // d x k
  std::vector<DenseMatrix> initial_a;           // per client, r x k
  std::vector<std::vector<DenseMatrix>> x;      // [client][round] k x b
  std::vector<std::vector<DenseMatrix>> y;      // [client][round] d x b
};

struct TrajectoryState {
  std::vector<DenseMatrix> b1, a1, b2, a2;  // per client
};

/// Recomputes B_i^(1), A_i^(1), B_i^(2), A_i^(2) with its own loop code:
///   B1_i = -eta gamma v0 x0^T A0_i^T,        A1_i = Abar = mean_j A0_j
///   B2_i = B1_i - eta gamma v1 x1^T Abar^T,  A2_i = mean_j (Abar - eta gamma B1_j^T v1_j x1_j^T)
/// where v_n is the batch-mean residual at the state that round starts from.
TrajectoryState trajectory_oracle(const TrajectoryInputs& in);

}  // namespace fedlora
