// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/commands.hpp"

#include "fedlora/csv.hpp"
#include "fedlora/fed.hpp"

namespace fedlora {

namespace {

void echo_config(const ExperimentConfig& cfg, std::ostream& log) {
  log << "# resolved config (gamma = " << format_significant(cfg.gamma(), 9) << ")\n"
      << serialize_config(cfg);
}

}  // namespace

std::string summary_path(const std::string& out_path) {
  constexpr std::string_view kExt = ".csv";
  if (out_path.size() > kExt.size() && out_path.ends_with(kExt)) {
    return out_path.substr(0, out_path.size() - kExt.size()) + ".summary.csv";
  }
  return out_path + ".summary.csv";
}

int cmd_run(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& log) {
  try {
    cfg.validate();
    echo_config(cfg, log);
    MetricsWriter writer(out_path, cfg);
    const ExperimentResult res =
        run_experiment(cfg, [&](const MetricsRecord& rec) { writer.write(rec); });
    log << "verdict: " << to_string(res.verdict) << " after " << res.rounds.size()
        << " rounds, final loss " << format_significant(res.records.back().mean_loss, 9) << '\n';
    return res.verdict == Verdict::kDiverged ? exit_code::kDiverged : exit_code::kOk;
  } catch (const IoError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kIo;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kIo;
  }
}

int cmd_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::size_t>& values,
              const std::string& out_path, std::ostream& log) {
  try {
    base.validate();
    echo_config(base, log);
    const StabilityReport report = stability_sweep(base, axis, values, base.parallel);
    write_text_file(out_path, sweep_csv(base, report));
    write_text_file(summary_path(out_path), sweep_summary_csv(base, report));
    log << "sweep over " << to_string(axis) << ": flatness ratio "
        << format_significant(report.flatness_ratio, 6) << ", log-log slope "
        << format_significant(report.slope, 6) << '\n';
    return exit_code::kOk;
  } catch (const IoError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kIo;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kIo;
  }
}

int cmd_check(const CheckOptions& opts, std::ostream& out) {
  const CheckReport report = run_checks(opts);
  out << format_check_table(report);
  for (const auto& s : report.suites) {
    if (!s.passed) {
      out << "\nfirst failure in suite '" << s.name << "':\n" << s.first_failure << '\n';
      return exit_code::kOracleFailure;
    }
  }
  return exit_code::kOk;
}

int cmd_partition_dump(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& log) {
  try {
    cfg.validate();
    const Dataset all = make_task_dataset(cfg);
    const Dataset train = all.slice(0, cfg.n_samples);
    const Partition part = make_partition(cfg, train);
    write_text_file(out_path, dataset_csv(train, part));
    for (std::size_t c = 0; c < part.shards.size(); ++c) {
      log << "client " << c << ": " << part.shards[c].size() << " samples\n";
    }
    return exit_code::kOk;
  } catch (const IoError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kIo;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kIo;
  }
}

}  // namespace fedlora
