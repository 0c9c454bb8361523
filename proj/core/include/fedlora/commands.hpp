// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "fedlora/checks.hpp"
#include "fedlora/config.hpp"
#include "fedlora/metrics.hpp"

namespace fedlora {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kIo = 1;
inline constexpr int kDiverged = 2;
inline constexpr int kOracleFailure = 3;
}  // namespace exit_code

/// Echoes the resolved config to `log`, then streams one metrics row per
/// round to `out_path`. 0 for converged or stagnant runs, 2 for diverged
/// runs, 1 when the file cannot be written.
int cmd_run(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& log);

/// Writes `out_path` (every row of every run plus swept_value) and
/// `<out_path without .csv>.summary.csv`.
int cmd_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::size_t>& values,
              const std::string& out_path, std::ostream& log);

/// Runs every oracle suite and prints the table. 3 with the first failing
/// case when a suite fails.
int cmd_check(const CheckOptions& opts, std::ostream& out);

/// Writes the generated training set with each sample's client.
int cmd_partition_dump(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& log);

/// `metrics.csv` -> `metrics.summary.csv`
std::string summary_path(const std::string& out_path);

}  // namespace fedlora
