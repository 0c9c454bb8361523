// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "fedlora/fed.hpp"

namespace fedlora {

namespace {

double rms(const DenseMatrix& g) noexcept {
  if (g.empty()) return 0.0;
  return frobenius_norm(g) / std::sqrt(static_cast<double>(g.size()));
}

}  // namespace

double avg_grad_norm(std::span<const AdapterGradients> grads, UpdateMask mask) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& g : grads) {
    if (mask.a && !g.grad_a.empty()) {
      total += rms(g.grad_a);
      ++count;
    }
    if (mask.b && !g.grad_b.empty()) {
      total += rms(g.grad_b);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

Moments entry_moments(const DenseMatrix& m) {
  Moments out;
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double v : m.data()) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  if (n == 0) return out;
  out.mean = mean;
  out.variance = m2 / static_cast<double>(n);
  return out;
}

std::vector<Moments> activation_moments(const ForwardTrace& trace) {
  std::vector<Moments> out;
  out.reserve(trace.contributions.size());
  for (const auto& c : trace.contributions) out.push_back(entry_moments(c));
  return out;
}

MomentIdentityResult moment_identity_check(std::size_t rank, std::size_t n_clients, std::size_t k,
                                           double sigma_a, std::size_t samples,
                                           std::uint64_t seed) {
  if (rank == 0 || n_clients == 0 || k == 0) {
    throw ContractViolation("moment_identity_check: rank, clients and k must be >= 1");
  }
  if (samples < 100) throw ContractViolation("moment_identity_check: needs >= 100 samples");
  if (!(sigma_a >= 0.0)) throw ContractViolation("moment_identity_check: sigma_a must be >= 0");

  DenseMatrix abar_sum(k, k);
  DenseMatrix cross_sum(k, k);
  for (std::size_t s = 0; s < samples; ++s) {
    RngStream rng(seed, {StreamKind::kMonteCarlo, s, 0});
    DenseMatrix first;
    DenseMatrix abar(rank, k);
    for (std::size_t i = 0; i < n_clients; ++i) {
      DenseMatrix a = gaussian_matrix(rank, k, sigma_a, rng);
      abar += a;
      if (i == 0) first = std::move(a);
    }
    abar *= 1.0 / static_cast<double>(n_clients);
    abar_sum += matmul_tn(abar, abar);
    cross_sum += matmul_tn(first, abar);
  }
  const double inv = 1.0 / static_cast<double>(samples);
  abar_sum *= inv;
  cross_sum *= inv;

  MomentIdentityResult r;
  r.target = static_cast<double>(rank) * sigma_a * sigma_a / static_cast<double>(n_clients);
  for (std::size_t i = 0; i < k; ++i) {
    r.abar_diag_mean += abar_sum(i, i);
    r.cross_diag_mean += cross_sum(i, i);
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      r.abar_offdiag_max = std::max(r.abar_offdiag_max, std::abs(abar_sum(i, j)));
      r.cross_offdiag_max = std::max(r.cross_offdiag_max, std::abs(cross_sum(i, j)));
    }
  }
  r.abar_diag_mean /= static_cast<double>(k);
  r.cross_diag_mean /= static_cast<double>(k);
  return r;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractViolation("loglog_slope: x and y differ in length");
  if (x.size() < 2) return 0.0;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw ContractViolation("loglog_slope: values must be positive and finite");
    }
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  const auto n = static_cast<double>(x.size());
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw ContractViolation("loglog_slope: x values are all equal");
  return sxy / sxx;
}

std::string_view to_string(SweepAxis a) noexcept {
  return a == SweepAxis::kRank ? "rank" : "clients";
}

StabilityReport stability_sweep(const ExperimentConfig& base, SweepAxis axis,
                                std::span<const std::size_t> values, bool parallel) {
  if (values.empty()) throw ConfigError("sweep: the list of values is empty");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] <= values[i - 1]) {
      throw ConfigError("sweep: values must be strictly increasing");
    }
  }

  StabilityReport report;
  report.axis = axis;
  report.points.resize(values.size());

  auto run_point = [&](std::size_t i) {
    ExperimentConfig cfg = base;
    (axis == SweepAxis::kRank ? cfg.rank : cfg.n_clients) = values[i];
    cfg.run_id.clear();
    cfg.validate();
    ExperimentResult res = run_experiment(cfg);
    SweepPoint& p = report.points[i];
    p.swept_value = static_cast<double>(values[i]);
    p.diverged = res.verdict == Verdict::kDiverged;
    p.round1_grad_norm = std::numeric_limits<double>::quiet_NaN();
    if (res.records.size() > 1 && res.records[1].avg_grad_norm) {
      p.round1_grad_norm = *res.records[1].avg_grad_norm;
    }
    p.final_loss = res.records.back().mean_loss;
    p.records = std::move(res.records);
  };

  if (parallel && values.size() > 1) {
    std::vector<std::exception_ptr> errors(values.size());
    {
      std::vector<std::jthread> pool;
      for (std::size_t i = 0; i < values.size(); ++i) {
        pool.emplace_back([&, i] {
          try {
            run_point(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) run_point(i);
  }

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& p : report.points) {
    if (std::isfinite(p.round1_grad_norm) && p.round1_grad_norm > 0.0) {
      xs.push_back(p.swept_value);
      ys.push_back(p.round1_grad_norm);
    }
  }
  if (xs.size() == report.points.size() && !xs.empty()) {
    const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
    report.flatness_ratio = *hi / *lo;
    report.slope = loglog_slope(xs, ys);
  } else if (report.points.size() > 1) {
    report.flatness_ratio = std::numeric_limits<double>::infinity();
    report.slope = xs.size() >= 2 ? loglog_slope(xs, ys) : std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

}  // namespace fedlora
