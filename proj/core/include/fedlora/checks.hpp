// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedlora/adapter.hpp"

namespace fedlora {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  /// One line shown in the summary table.
  std::string summary;
  /// Full description of the first failing case; empty when passed.
  std::string first_failure;
};

struct CheckReport {
  std::vector<SuiteResult> suites;
  bool passed() const noexcept;
};

struct CheckOptions {
  std::uint64_t seed = 20260101;
  /// Randomized finite-difference instances (each checked for both losses).
  std::size_t fd_instances = 100;
  double fd_tolerance = 1e-6;
  double trajectory_tolerance = 1e-10;
  std::size_t moment_samples = 10000;
  double moment_relative_tolerance = 0.05;
  double moment_offdiag_bound = 0.1;
  /// Applied to the analytic gradients before they are compared with finite
  /// differences. Used to plant faults and confirm the suite catches them.
  std::function<void(std::vector<AdapterGradients>&)> gradient_hook;
};

SuiteResult finite_difference_suite(const CheckOptions& opts);
SuiteResult trajectory_suite(const CheckOptions& opts);
SuiteResult moment_identity_suite(const CheckOptions& opts);

/// Every suite, in the order above.
CheckReport run_checks(const CheckOptions& opts = {});

/// Fixed-width table: suite, cases, PASS/FAIL, summary.
std::string format_check_table(const CheckReport& report);

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||); 0 when both vanish.
double relative_error(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace fedlora
