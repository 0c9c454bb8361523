// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <charconv>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedlora/commands.hpp"
#include "fedlora/config.hpp"
#include "fedlora/csv.hpp"

namespace {

using fedlora::exit_code::kIo;

struct ConfigFlags {
  std::optional<std::string> config_path;
  std::map<std::string, std::string> overrides;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// One option per config key, spelled both --snake_case and --dash-case.
void add_config_flags(CLI::App* app, ConfigFlags& flags) {
  app->add_option_function<std::string>(
      "--config", [&flags](const std::string& p) { flags.config_path = p; },
      "Key/value config file; flags override it");
  for (const std::string& key : fedlora::config_keys()) {
    std::string names = "--" + key;
    if (dashed(key) != key) names += ",--" + dashed(key);
    if (fedlora::is_boolean_key(key)) {
      app->add_flag_function(
          names, [&flags, key](std::int64_t n) { flags.overrides[key] = n > 0 ? "true" : "false"; },
          "config key '" + key + "' (use --" + key + "=false to clear)");
    } else {
      app->add_option_function<std::string>(
          names, [&flags, key](const std::string& v) { flags.overrides[key] = v; },
          "config key '" + key + "'");
    }
  }
}

std::vector<std::size_t> parse_values(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw fedlora::ConfigError("--values: '" + item + "' is not a non-negative integer");
    }
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated low-rank adapter simulator"};
  app.require_subcommand(1);

  ConfigFlags run_flags, sweep_flags, dump_flags;
  std::string run_out = "metrics.csv";
  std::string sweep_out = "sweep.csv";
  std::string dump_out = "partition.csv";
  std::string axis = "rank";
  std::string values;

  auto* run = app.add_subcommand("run", "Run one experiment and write its metrics CSV");
  add_config_flags(run, run_flags);
  run->add_option("--out,-o", run_out, "Metrics CSV path")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Sweep rank or client count and write the report");
  add_config_flags(sweep, sweep_flags);
  sweep->add_option("--out,-o", sweep_out, "Sweep CSV path")->capture_default_str();
  sweep->add_option("--axis", axis, "rank or clients")
      ->check(CLI::IsMember({"rank", "clients"}))
      ->capture_default_str();
  sweep->add_option("--values", values, "Comma-separated, strictly increasing")->required();

  fedlora::CheckOptions check_opts;
  std::string inject;
  auto* check = app.add_subcommand("check", "Run the oracle suites");
  check->add_option("--seed", check_opts.seed, "Seed for randomized instances")
      ->capture_default_str();
  check->add_option("--fd-instances,--fd_instances", check_opts.fd_instances,
                    "Finite-difference instances per loss kind")
      ->capture_default_str();
  check->add_option("--inject-fault,--inject_fault", inject, "Plant a known fault (grad_b_sign)")
      ->check(CLI::IsMember({"grad_b_sign"}))
      ->group("");

  auto* dump = app.add_subcommand("partition-dump", "Write the training set and its client split");
  add_config_flags(dump, dump_flags);
  dump->add_option("--out,-o", dump_out, "Dataset CSV path")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = fedlora::parse_config(run_flags.config_path, run_flags.overrides);
      return fedlora::cmd_run(cfg, run_out, std::cerr);
    }
    if (sweep->parsed()) {
      const auto cfg = fedlora::parse_config(sweep_flags.config_path, sweep_flags.overrides);
      const auto ax = axis == "rank" ? fedlora::SweepAxis::kRank : fedlora::SweepAxis::kClients;
      return fedlora::cmd_sweep(cfg, ax, parse_values(values), sweep_out, std::cerr);
    }
    if (check->parsed()) {
      if (inject == "grad_b_sign") {
        check_opts.gradient_hook = [](std::vector<fedlora::AdapterGradients>& grads) {
          for (auto& g : grads) g.grad_b *= -1.0;
        };
      }
      return fedlora::cmd_check(check_opts, std::cout);
    }
    if (dump->parsed()) {
      const auto cfg = fedlora::parse_config(dump_flags.config_path, dump_flags.overrides);
      return fedlora::cmd_partition_dump(cfg, dump_out, std::cerr);
    }
  } catch (const fedlora::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fedlora::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kIo;
}
