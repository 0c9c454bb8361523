// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
//
//   fedlora_acceptance [--config FILE] [criterion ...]

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedlora/checks.hpp"
#include "fedlora/commands.hpp"
#include "fedlora/config.hpp"
#include "fedlora/csv.hpp"
#include "fedlora/fed.hpp"
#include "fedlora/metrics.hpp"

#ifndef FEDLORA_ACCEPTANCE_CONFIG
#define FEDLORA_ACCEPTANCE_CONFIG "acceptance.cfg"
#endif

namespace {

using namespace fedlora;

class Thresholds {
 public:
  explicit Thresholds(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  double real(const std::string& key) const { return parse<double>(key, raw(key)); }
  std::size_t count(const std::string& key) const { return parse<std::size_t>(key, raw(key)); }
  std::vector<std::size_t> list(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(raw(key));
    for (std::string item; std::getline(ss, item, ',');) out.push_back(parse<std::size_t>(key, item));
    return out;
  }

 private:
  template <typename T>
  static T parse(const std::string& key, const std::string& text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ConfigError("acceptance config: '" + key + "' has bad value '" + text + "'");
    }
    return value;
  }

  const std::string& raw(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("acceptance config lacks '" + key + "'");
    return it->second;
  }
  std::map<std::string, std::string> kv_;
};

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) { return format_significant(v, digits); }

bool within_time(double seconds, double limit, std::string& detail) {
  detail += "; " + fmt(seconds, 3) + " s (limit " + fmt(limit, 3) + " s)";
  return seconds < limit;
}

// First round whose loss is <= level, or nullopt.
std::optional<std::size_t> rounds_to_reach(const std::vector<MetricsRecord>& records, double level) {
  for (const auto& r : records) {
    if (std::isfinite(r.mean_loss) && r.mean_loss <= level) return r.round;
  }
  return std::nullopt;
}

std::string rounds_text(const std::optional<std::size_t>& r) {
  return r ? std::to_string(*r) : std::string("never");
}

bool strictly_later(const std::optional<std::size_t>& slow, const std::optional<std::size_t>& fast) {
  if (!fast) return false;
  return !slow || *slow > *fast;
}

Outcome gradient_correctness(const Thresholds& t, double& limit) {
  limit = t.real("fd_seconds");
  CheckOptions opts;
  opts.fd_instances = t.count("fd_instances");
  opts.fd_tolerance = t.real("fd_tolerance");
  const SuiteResult s = finite_difference_suite(opts);
  Outcome o{s.passed && s.cases >= 100, std::to_string(s.cases) + " instances, " + s.summary};
  if (!s.passed) o.detail += "\n    " + s.first_failure;
  return o;
}

Outcome zero_init(const Thresholds& t, double& limit) {
  limit = std::numeric_limits<double>::infinity();
  Outcome o{true, ""};
  std::size_t checked = 0;
  for (std::size_t seed = 0; seed < t.count("zero_init_seeds"); ++seed) {
    for (TaskKind task : {TaskKind::kRegression, TaskKind::kClassification}) {
      ExperimentConfig cfg;
      cfg.seed = seed;
      cfg.task = task;
      cfg.rank = 8 << seed;
      const Federation fed(cfg);
      const RoundResult r0 = fed.evaluate(0);
      const auto& net = fed.clients().front().net;
      const DenseMatrix frozen = frozen_forward(net, fed.validation_inputs());
      const double frozen_loss = loss(frozen, fed.validation_targets(), net.loss_kind).loss;
      const bool same_bits = std::memcmp(&frozen_loss, &r0.record.mean_loss, sizeof(double)) == 0;
      bool zero_moments = true;
      for (double v : r0.record.act_mean) zero_moments = zero_moments && v == 0.0;
      for (double v : r0.record.act_var) zero_moments = zero_moments && v == 0.0;
      ++checked;
      if (!same_bits || !zero_moments) {
        o.passed = false;
        o.detail = "seed " + std::to_string(seed) + " " + std::string(to_string(task)) +
                   ": round-0 loss " + format_round_trip(r0.record.mean_loss) + " vs frozen " +
                   format_round_trip(frozen_loss) + (zero_moments ? "" : ", non-zero moments");
        return o;
      }
    }
  }
  o.detail = std::to_string(checked) + " configs: round-0 loss bit-identical to the frozen network, "
             "all activation moments exactly 0";
  return o;
}

Outcome trajectory(const Thresholds& t, double& limit) {
  limit = t.real("trajectory_seconds");
  CheckOptions opts;
  opts.trajectory_tolerance = t.real("trajectory_tolerance");
  const SuiteResult s = trajectory_suite(opts);
  Outcome o{s.passed && s.cases == 81, std::to_string(s.cases) + " grid points, " + s.summary};
  if (!s.passed) o.detail += "\n    " + s.first_failure;
  return o;
}

Outcome moment_identity(const Thresholds& t, double& limit) {
  limit = t.real("moment_seconds");
  CheckOptions opts;
  opts.moment_samples = t.count("moment_samples");
  opts.moment_relative_tolerance = t.real("moment_relative_tolerance");
  opts.moment_offdiag_bound = t.real("moment_offdiag_bound");
  const SuiteResult s = moment_identity_suite(opts);
  return {s.passed, s.summary};
}

Outcome collapse_vs_flatness(const Thresholds& t, double& limit) {
  limit = t.real("collapse_seconds");
  const auto ranks = t.list("sweep_ranks");
  ExperimentConfig base;
  base.n_clients = t.count("sweep_clients");

  base.rule = ScalingRule::Kind::kStandard;
  const StabilityReport standard = stability_sweep(base, SweepAxis::kRank, ranks);
  base.rule = ScalingRule::Kind::kFederated;
  const StabilityReport federated = stability_sweep(base, SweepAxis::kRank, ranks);

  const double collapse =
      standard.points.front().round1_grad_norm / standard.points.back().round1_grad_norm;
  const bool std_ok = standard.slope >= t.real("standard_slope_min") &&
                      standard.slope <= t.real("standard_slope_max");
  const bool fed_ok = federated.slope >= t.real("federated_slope_min") &&
                      federated.slope <= t.real("federated_slope_max");
  const bool collapse_ok = collapse >= t.real("collapse_ratio_min");

  std::string norms_std, norms_fed;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    norms_std += (i ? " " : "") + fmt(standard.points[i].round1_grad_norm, 3);
    norms_fed += (i ? " " : "") + fmt(federated.points[i].round1_grad_norm, 3);
  }
  Outcome o;
  o.passed = std_ok && fed_ok && collapse_ok;
  o.detail = "standard slope " + fmt(standard.slope) + (std_ok ? " ok" : " OUT OF BAND") +
             ", federated slope " + fmt(federated.slope) + (fed_ok ? " ok" : " OUT OF BAND") +
             ", standard r=" + std::to_string(ranks.front()) + "/r=" + std::to_string(ranks.back()) +
             " norm ratio " + fmt(collapse) + (collapse_ok ? " ok" : " TOO SMALL") +
             "\n    round-1 avg_grad_norm standard [" + norms_std + "] federated [" + norms_fed + "]";
  return o;
}

Outcome client_robustness(const Thresholds& t, double& limit) {
  limit = t.real("client_seconds");
  const auto counts = t.list("client_counts");
  ExperimentConfig base;
  base.rank = t.count("client_rank");

  base.rule = ScalingRule::Kind::kFederated;
  const StabilityReport fed = stability_sweep(base, SweepAxis::kClients, counts);
  base.rule = ScalingRule::Kind::kStandard;
  const StabilityReport std_rep = stability_sweep(base, SweepAxis::kClients, counts);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  bool below = true;
  bool monotone = true;
  std::string losses;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double f = fed.points[i].final_loss;
    const double s = std_rep.points[i].final_loss;
    lo = std::min(lo, f);
    hi = std::max(hi, f);
    below = below && std::isfinite(f) && f < s;
    if (i > 0) monotone = monotone && s >= std_rep.points[i - 1].final_loss;
    losses += " N=" + std::to_string(counts[i]) + ":" + fmt(f) + "/" + fmt(s);
  }
  const double spread = (hi - lo) / lo;
  const bool spread_ok = std::isfinite(spread) && spread <= t.real("client_loss_spread_max");
  Outcome o;
  o.passed = spread_ok && below && monotone;
  o.detail = "federated spread " + fmt(spread) + (spread_ok ? " ok" : " TOO WIDE") +
             ", federated below standard " + (below ? "ok" : "NO") +
             ", standard non-decreasing " + (monotone ? "ok" : "NO") +
             "\n    final loss federated/standard" + losses;
  return o;
}

Outcome ablation_ordering(const Thresholds& t, double& limit) {
  limit = t.real("ablation_seconds");
  ExperimentConfig base;
  base.rank = t.count("ablation_rank");
  base.n_clients = t.count("ablation_clients");

  auto run = [&](ScalingRule::Kind rule) {
    ExperimentConfig cfg = base;
    cfg.rule = rule;
    return run_experiment(cfg);
  };
  const ExperimentResult fed = run(ScalingRule::Kind::kFederated);
  const ExperimentResult large = run(ScalingRule::Kind::kAblationLarge);
  const ExperimentResult small = run(ScalingRule::Kind::kAblationSmall);
  const ExperimentResult rs = run(ScalingRule::Kind::kRankStabilized);

  const double fed_final = fed.records.back().mean_loss;
  const double large_final = large.records.back().mean_loss;
  const bool large_ok = large.verdict == Verdict::kDiverged ||
                        large_final >= t.real("ablation_loss_factor") * fed_final;

  const double level = t.real("ablation_reach_factor") * fed_final;
  const auto r_fed = rounds_to_reach(fed.records, level);
  const auto r_small = rounds_to_reach(small.records, level);
  const auto r_rs = rounds_to_reach(rs.records, level);
  const bool small_ok = strictly_later(r_small, r_fed);
  const bool rs_ok = strictly_later(r_rs, r_fed);

  Outcome o;
  o.passed = fed.verdict != Verdict::kDiverged && large_ok && small_ok && rs_ok;
  o.detail = "N=" + std::to_string(base.n_clients) + " r=" + std::to_string(base.rank) +
             ": large-factor run " + std::string(to_string(large.verdict)) + " (loss " +
             fmt(large_final) + " vs federated " + fmt(fed_final) + ")" + (large_ok ? " ok" : " NO") +
             "; rounds to " + fmt(level) + ": federated " + rounds_text(r_fed) + ", small-factor " +
             rounds_text(r_small) + (small_ok ? " ok" : " NO") + ", rank-stabilized " +
             rounds_text(r_rs) + (rs_ok ? " ok" : " NO");
  return o;
}

Outcome protocol_consensus(const Thresholds& t, double& limit) {
  limit = t.real("consensus_seconds");
  ExperimentConfig cfg;
  cfg.n_clients = t.count("consensus_clients");
  cfg.task = TaskKind::kClassification;
  cfg.partition = PartitionKind::kDirichlet;
  cfg.rank = 16;

  Federation share(cfg);
  bool a_identical = true;
  bool b_differ = true;
  for (std::size_t round = 0; round < t.count("consensus_rounds"); ++round) {
    share.run_round();
    const auto& cs = share.clients();
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      bool any_b_diff = false;
      for (std::size_t i = 1; i < cs.size(); ++i) {
        a_identical = a_identical && cs[i].net.layers[l].adapter.a == cs[0].net.layers[l].adapter.a;
        any_b_diff = any_b_diff || !(cs[i].net.layers[l].adapter.b == cs[0].net.layers[l].adapter.b);
      }
      b_differ = b_differ && any_b_diff;
    }
  }

  cfg.strategy = AggregationStrategy::kFreezeA;
  Federation freeze(cfg);
  std::vector<std::vector<DenseMatrix>> initial;
  for (const auto& c : freeze.clients()) {
    initial.emplace_back();
    for (const auto& layer : c.net.layers) initial.back().push_back(layer.adapter.a);
  }
  bool a_frozen = true;
  for (std::size_t round = 0; round < t.count("consensus_rounds"); ++round) {
    freeze.run_round();
    for (std::size_t i = 0; i < freeze.clients().size(); ++i) {
      for (std::size_t l = 0; l < cfg.layers; ++l) {
        a_frozen = a_frozen && freeze.clients()[i].net.layers[l].adapter.a == initial[i][l];
      }
    }
  }
  Outcome o;
  o.passed = cfg.n_clients >= 2 && a_identical && b_differ && a_frozen;
  o.detail = std::string("share_a: A bit-identical across clients ") + (a_identical ? "ok" : "NO") +
             ", B differs between clients " + (b_differ ? "ok" : "NO") + "; freeze_a: A unchanged " +
             (a_frozen ? "ok" : "NO") + " (" + std::to_string(t.count("consensus_rounds")) +
             " rounds, N=" + std::to_string(cfg.n_clients) + ", dirichlet shards)";
  return o;
}

Outcome determinism(const Thresholds& t, double& limit) {
  limit = std::numeric_limits<double>::infinity();
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fedlora_acceptance_determinism";
  fs::create_directories(dir);

  ExperimentConfig cfg;
  cfg.rounds = t.count("determinism_rounds");
  cfg.n_clients = t.count("determinism_clients");
  std::ostringstream sink;
  const std::string first = (dir / "first.csv").string();
  const std::string second = (dir / "second.csv").string();
  const std::string threaded = (dir / "threaded.csv").string();
  cmd_run(cfg, first, sink);
  cmd_run(cfg, second, sink);
  ExperimentConfig par = cfg;
  par.parallel = true;
  par.threads = t.count("determinism_threads");
  cmd_run(par, threaded, sink);

  const std::string a = read_text_file(first);
  const std::string b = read_text_file(second);
  const std::string c = read_text_file(threaded);

  ExperimentConfig sweep_base = cfg;
  sweep_base.rounds = 2;
  const std::vector<std::size_t> ranks = {4, 8, 16};
  const std::string s_seq =
      sweep_csv(sweep_base, stability_sweep(sweep_base, SweepAxis::kRank, ranks, false));
  const std::string s_par =
      sweep_csv(sweep_base, stability_sweep(sweep_base, SweepAxis::kRank, ranks, true));
  fs::remove_all(dir);

  Outcome o;
  o.passed = !a.empty() && a == b && a == c && s_seq == s_par;
  o.detail = std::string("repeat run ") + (a == b ? "identical" : "DIFFERS") +
             ", sequential vs " + std::to_string(par.threads) + " threads " +
             (a == c ? "identical" : "DIFFERS") + ", sweep sequential vs parallel " +
             (s_seq == s_par ? "identical" : "DIFFERS") + " (" + std::to_string(a.size()) +
             " bytes)";
  return o;
}

Outcome noniid(const Thresholds& t, double& limit) {
  limit = t.real("noniid_seconds");
  ExperimentConfig cfg;
  cfg.task = TaskKind::kClassification;
  cfg.partition = PartitionKind::kDirichlet;
  cfg.beta = t.real("noniid_beta");
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.lr = t.real("noniid_lr");
  cfg.rank = t.count("noniid_rank");

  cfg.rule = ScalingRule::Kind::kFederated;
  const ExperimentResult fed = run_experiment(cfg);
  cfg.rule = ScalingRule::Kind::kStandard;
  const ExperimentResult std_res = run_experiment(cfg);

  const double level = t.real("noniid_reach_factor") * fed.records.back().mean_loss;
  const auto r_fed = rounds_to_reach(fed.records, level);
  const auto r_std = rounds_to_reach(std_res.records, level);
  const bool fed_ok = fed.verdict == Verdict::kConverged;
  const bool std_ok = std_res.verdict == Verdict::kStagnant || strictly_later(r_std, r_fed);

  Outcome o;
  o.passed = fed_ok && std_ok;
  o.detail = "federated " + std::string(to_string(fed.verdict)) + " (final " +
             fmt(fed.records.back().mean_loss) + ")" + (fed_ok ? " ok" : " NO") + "; standard " +
             std::string(to_string(std_res.verdict)) + " (final " +
             fmt(std_res.records.back().mean_loss) + "); rounds to " + fmt(level) +
             ": federated " + rounds_text(r_fed) + ", standard " + rounds_text(r_std) +
             (std_ok ? " ok" : " NO");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const Thresholds&, double&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::string config_path = FEDLORA_ACCEPTANCE_CONFIG;
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config_path = argv[++i];
    } else {
      selected.push_back(std::stoi(arg));
    }
  }

  std::optional<Thresholds> thresholds;
  try {
    thresholds.emplace(read_key_values(read_text_file(config_path)));
  } catch (const std::exception& e) {
    std::cerr << "cannot load acceptance config: " << e.what() << '\n';
    return 1;
  }

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "zero-init transparency", zero_init},
      {3, "trajectory oracle", trajectory},
      {4, "moment identity", moment_identity},
      {5, "collapse vs flatness", collapse_vs_flatness},
      {6, "client-count robustness", client_robustness},
      {7, "ablation ordering", ablation_ordering},
      {8, "protocol consensus", protocol_consensus},
      {9, "determinism", determinism},
      {10, "non-IID generalization", noniid},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) {
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    double limit = std::numeric_limits<double>::infinity();
    try {
      o = c.run(*thresholds, limit);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (std::isfinite(limit)) {
      o.passed = within_time(seconds, limit, o.detail) && o.passed;
    } else {
      o.detail += "; " + fmt(seconds, 3) + " s";
    }
    std::cout << (o.passed ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name
              << "): " << o.detail << std::endl;
    if (!o.passed) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
