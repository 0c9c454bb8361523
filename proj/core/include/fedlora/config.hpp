// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedlora/adapter.hpp"
#include "fedlora/model.hpp"
#include "fedlora/optim.hpp"

namespace fedlora {

/// Missing, unknown or invalid configuration. The message always names the key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AggregationStrategy { kShareAOnly, kShareBoth, kFreezeA, kAlternating };
enum class TaskKind { kRegression, kClassification };
enum class PartitionKind { kIid, kDirichlet };

std::string_view to_string(AggregationStrategy s) noexcept;
std::optional<AggregationStrategy> parse_strategy(std::string_view name) noexcept;
std::string_view to_string(TaskKind t) noexcept;
std::string_view to_string(PartitionKind p) noexcept;

/// Everything that determines one run. Two runs with equal configs produce
/// byte-identical metric files.
struct ExperimentConfig {
  std::string run_id;  // empty: derived from rule, rank, clients and seed
  std::string method;  // empty: "<strategy>+<rule>"

  std::size_t n_clients = 3;
  std::size_t rank = 8;
  std::size_t d = 64;  // hidden width, and output width for regression
  std::size_t k = 64;  // input width
  std::size_t layers = 2;
  Activation activation = Activation::kTanh;

  ScalingRule::Kind rule = ScalingRule::Kind::kFederated;
  double alpha = 8.0;
  double fixed_gamma = 1.0;  // used by rule = fixed only
  double sigma_a = 0.0;      // <= 0: 1/sqrt(fan_in) per layer

  AggregationStrategy strategy = AggregationStrategy::kShareAOnly;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double lr = 0.005;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  bool reset_optim = false;

  std::size_t rounds = 50;
  std::size_t local_steps = 10;
  std::size_t batch_size = 16;

  TaskKind task = TaskKind::kRegression;
  std::size_t classes = 10;
  std::size_t n_samples = 4096;
  std::size_t val_samples = 256;
  double noise_std = 0.1;
  double class_separation = 3.0;
  PartitionKind partition = PartitionKind::kIid;
  double beta = 0.5;  // Dirichlet concentration

  std::uint64_t seed = 0;
  double divergence_threshold = 1e6;
  bool parallel = false;
  std::size_t threads = 0;  // 0: hardware concurrency

  ScalingRule scaling_rule() const;
  /// gamma for this config's (rule, N, r).
  double gamma() const;
  LossKind loss_kind() const noexcept {
    return task == TaskKind::kRegression ? LossKind::kSquaredError : LossKind::kCrossEntropy;
  }
  std::size_t out_dim() const noexcept { return task == TaskKind::kRegression ? d : classes; }
  std::string resolved_run_id() const;
  std::string resolved_method() const;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Every key accepted by parse_config / apply_setting, in serialization order.
const std::vector<std::string>& config_keys();
/// Keys whose values are booleans (usable as bare command-line flags).
bool is_boolean_key(std::string_view key);

/// Sets one field from its textual value. Throws ConfigError for an unknown
/// key or an unparsable value.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Reads a flat key/value document: one `key = value` per line, `#` starts a
/// comment, string values may be double-quoted. The layout is a subset of TOML.
std::map<std::string, std::string> read_key_values(std::string_view text);

/// Defaults, then the file (if any), then overrides; validated.
ExperimentConfig parse_config(const std::optional<std::string>& path,
                              const std::map<std::string, std::string>& overrides = {});
ExperimentConfig parse_config_text(std::string_view text,
                                   const std::map<std::string, std::string>& overrides = {});

/// Writes every key; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

/// Shortest decimal text that parses back to exactly `v`, locale independent.
std::string format_round_trip(double v);
/// `digits` significant digits, %g style, '.' separator, locale independent.
std::string format_significant(double v, int digits = 9);

}  // namespace fedlora
