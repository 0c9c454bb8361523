// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedlora/config.hpp"
#include "fedlora/metrics.hpp"
#include "fedlora/tasks.hpp"

namespace fedlora {

/// A file could not be opened, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// run_id, method, rule, strategy, rank, n_clients, seed, round, mean_loss,
/// ppl_analog, avg_grad_norm, act_mean_l0.., act_var_l0.., diverged_count
/// and, for sweep files, a trailing swept_value.
std::vector<std::string> metrics_header(std::size_t layers, bool with_swept_value = false);

/// One row (no trailing newline). Reals use 9 significant digits; a missing
/// gradient norm is an empty field.
std::string format_metrics_row(const ExperimentConfig& cfg, const MetricsRecord& rec,
                               std::optional<double> swept_value = std::nullopt);

std::string join_csv(const std::vector<std::string>& fields);
/// Splits one line, honouring double-quoted fields.
std::vector<std::string> split_csv(std::string_view line);

/// Appends one row per record and flushes after each, so an interrupted run
/// leaves a valid prefix.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, const ExperimentConfig& cfg);
  void write(const MetricsRecord& rec);

 private:
  std::ofstream out_;
  ExperimentConfig cfg_;
  std::string path_;
};

/// Full metrics table of one run, header included.
std::string metrics_csv(const ExperimentConfig& cfg, const std::vector<MetricsRecord>& records);

/// Every record of every sweep point, tagged with its swept value.
std::string sweep_csv(const ExperimentConfig& base, const StabilityReport& report);
/// axis, values, round-1 norms, final losses, diverged flags, flatness ratio, slope.
std::string sweep_summary_csv(const ExperimentConfig& base, const StabilityReport& report);

/// sample_index, client, label, x_0.., y_0.. ; one sample per row. label is
/// empty for regression data, y columns are absent for classification data.
std::string dataset_csv(const Dataset& data, const Partition& partition);

struct DatasetDump {
  Dataset data;
  Partition partition;
};
DatasetDump parse_dataset_csv(std::string_view text);

/// Whole-file helpers; throw IoError.
void write_text_file(const std::string& path, std::string_view text);
std::string read_text_file(const std::string& path);

}  // namespace fedlora
