// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace fedlora {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) +
                    "' as " + std::string(want));
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite real number");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

struct KeySpec {
  std::string name;
  bool boolean = false;
  bool quoted = false;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Field>
KeySpec size_key(std::string name, Field field) {
  return {name, false, false,
          [name, field](ExperimentConfig& c, std::string_view v) { c.*field = parse_size(name, v); },
          [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

template <typename Field>
KeySpec real_key(std::string name, Field field) {
  return {name, false, false,
          [name, field](ExperimentConfig& c, std::string_view v) { c.*field = parse_real(name, v); },
          [field](const ExperimentConfig& c) { return format_round_trip(c.*field); }};
}

template <typename Field>
KeySpec bool_key(std::string name, Field field) {
  return {name, true, false,
          [name, field](ExperimentConfig& c, std::string_view v) { c.*field = parse_bool(name, v); },
          [field](const ExperimentConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

template <typename Field>
KeySpec string_key(std::string name, Field field) {
  return {name, false, true,
          [field](ExperimentConfig& c, std::string_view v) { c.*field = std::string(v); },
          [field](const ExperimentConfig& c) { return c.*field; }};
}

template <typename Enum, typename Field, typename Parse>
KeySpec enum_key(std::string name, Field field, Parse parse, std::string choices) {
  return {name, false, true,
          [name, field, parse, choices](ExperimentConfig& c, std::string_view v) {
            std::optional<Enum> e = parse(v);
            if (!e) bad_value(name, v, "one of " + choices);
            c.*field = *e;
          },
          [field](const ExperimentConfig& c) { return std::string(to_string(c.*field)); }};
}

std::optional<TaskKind> parse_task(std::string_view v) {
  if (v == "regression") return TaskKind::kRegression;
  if (v == "classification") return TaskKind::kClassification;
  return std::nullopt;
}

std::optional<PartitionKind> parse_partition(std::string_view v) {
  if (v == "iid") return PartitionKind::kIid;
  if (v == "dirichlet") return PartitionKind::kDirichlet;
  return std::nullopt;
}

const std::vector<KeySpec>& key_specs() {
  using C = ExperimentConfig;
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> s;
    s.push_back(string_key("run_id", &C::run_id));
    s.push_back(string_key("method", &C::method));
    s.push_back(size_key("n_clients", &C::n_clients));
    s.push_back(size_key("rank", &C::rank));
    s.push_back(size_key("d", &C::d));
    s.push_back(size_key("k", &C::k));
    s.push_back(size_key("layers", &C::layers));
    s.push_back(enum_key<Activation>("activation", &C::activation, parse_activation,
                                     "identity, tanh, relu"));
    s.push_back(enum_key<ScalingRule::Kind>(
        "rule", &C::rule, parse_scaling_kind,
        "standard, rank_stabilized, federated, ablation_small, ablation_large, fixed"));
    s.push_back(real_key("alpha", &C::alpha));
    s.push_back(real_key("fixed_gamma", &C::fixed_gamma));
    s.push_back(real_key("sigma_a", &C::sigma_a));
    s.push_back(enum_key<AggregationStrategy>("strategy", &C::strategy, parse_strategy,
                                              "share_a, share_both, freeze_a, alternating"));
    s.push_back(enum_key<OptimizerKind>("optimizer", &C::optimizer, parse_optimizer, "sgd, adam"));
    s.push_back(real_key("lr", &C::lr));
    s.push_back(real_key("adam_beta1", &C::adam_beta1));
    s.push_back(real_key("adam_beta2", &C::adam_beta2));
    s.push_back(real_key("adam_eps", &C::adam_eps));
    s.push_back(real_key("weight_decay", &C::weight_decay));
    s.push_back(bool_key("reset_optim", &C::reset_optim));
    s.push_back(size_key("rounds", &C::rounds));
    s.push_back(size_key("local_steps", &C::local_steps));
    s.push_back(size_key("batch_size", &C::batch_size));
    s.push_back(enum_key<TaskKind>("task", &C::task, parse_task, "regression, classification"));
    s.push_back(size_key("classes", &C::classes));
    s.push_back(size_key("n_samples", &C::n_samples));
    s.push_back(size_key("val_samples", &C::val_samples));
    s.push_back(real_key("noise_std", &C::noise_std));
    s.push_back(real_key("class_separation", &C::class_separation));
    s.push_back(enum_key<PartitionKind>("partition", &C::partition, parse_partition,
                                        "iid, dirichlet"));
    s.push_back(real_key("beta", &C::beta));
    s.push_back({"seed", false, false,
                 [](C& c, std::string_view v) { c.seed = parse_u64("seed", v); },
                 [](const C& c) { return std::to_string(c.seed); }});
    s.push_back(real_key("divergence_threshold", &C::divergence_threshold));
    s.push_back(bool_key("parallel", &C::parallel));
    s.push_back(size_key("threads", &C::threads));
    return s;
  }();
  return specs;
}

const KeySpec* find_key(std::string_view key) {
  for (const auto& spec : key_specs()) {
    if (spec.name == key) return &spec;
  }
  return nullptr;
}

void require(bool ok, std::string_view key, std::string_view what) {
  if (!ok) throw ConfigError("config key '" + std::string(key) + "': " + std::string(what));
}

}  // namespace

std::string_view to_string(AggregationStrategy s) noexcept {
  switch (s) {
    case AggregationStrategy::kShareAOnly:
      return "share_a";
    case AggregationStrategy::kShareBoth:
      return "share_both";
    case AggregationStrategy::kFreezeA:
      return "freeze_a";
    case AggregationStrategy::kAlternating:
      return "alternating";
  }
  return "unknown";
}

std::optional<AggregationStrategy> parse_strategy(std::string_view name) noexcept {
  if (name == "share_a") return AggregationStrategy::kShareAOnly;
  if (name == "share_both") return AggregationStrategy::kShareBoth;
  if (name == "freeze_a") return AggregationStrategy::kFreezeA;
  if (name == "alternating") return AggregationStrategy::kAlternating;
  return std::nullopt;
}

std::string_view to_string(TaskKind t) noexcept {
  return t == TaskKind::kRegression ? "regression" : "classification";
}

std::string_view to_string(PartitionKind p) noexcept {
  return p == PartitionKind::kIid ? "iid" : "dirichlet";
}

ScalingRule ExperimentConfig::scaling_rule() const {
  return {rule, rule == ScalingRule::Kind::kFixed ? fixed_gamma : alpha};
}

double ExperimentConfig::gamma() const { return scaling_factor(scaling_rule(), n_clients, rank); }

std::string ExperimentConfig::resolved_run_id() const {
  if (!run_id.empty()) return run_id;
  return std::string(to_string(rule)) + "_r" + std::to_string(rank) + "_n" +
         std::to_string(n_clients) + "_s" + std::to_string(seed);
}

std::string ExperimentConfig::resolved_method() const {
  if (!method.empty()) return method;
  return std::string(to_string(strategy)) + "+" + std::string(to_string(rule));
}

void ExperimentConfig::validate() const {
  require(n_clients >= 1, "n_clients", "must be >= 1");
  require(rank >= 1, "rank", "must be >= 1");
  require(d >= 1, "d", "must be >= 1");
  require(k >= 1, "k", "must be >= 1");
  require(layers >= 1, "layers", "must be >= 1");
  if (scaling_rule().uses_alpha()) require(alpha > 0.0, "alpha", "must be > 0");
  if (rule == ScalingRule::Kind::kFixed) require(fixed_gamma > 0.0, "fixed_gamma", "must be > 0");
  require(lr > 0.0, "lr", "must be > 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1", "must lie in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2", "must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps", "must be > 0");
  require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(val_samples >= 1, "val_samples", "must be >= 1");
  require(n_samples >= n_clients, "n_samples", "must be >= n_clients");
  require(noise_std >= 0.0, "noise_std", "must be >= 0");
  require(divergence_threshold > 0.0, "divergence_threshold", "must be > 0");
  if (task == TaskKind::kClassification) {
    require(classes >= 2, "classes", "must be >= 2 for classification");
    require(class_separation >= 0.0, "class_separation", "must be >= 0");
  }
  if (partition == PartitionKind::kDirichlet) {
    require(task == TaskKind::kClassification, "partition",
            "dirichlet partitioning needs task = classification");
    require(beta > 0.0, "beta", "must be > 0");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& spec : key_specs()) k.push_back(spec.name);
    return k;
  }();
  return keys;
}

bool is_boolean_key(std::string_view key) {
  const KeySpec* spec = find_key(key);
  return spec != nullptr && spec->boolean;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) throw ConfigError("unknown config key '" + std::string(key) + "'");
  spec->set(cfg, value);
}

std::map<std::string, std::string> read_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    // Strip comments outside quotes.
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_quotes = !in_quotes;
      if (line[i] == '#' && !in_quotes) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    std::string_view raw = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    std::string value;
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
      raw = raw.substr(1, raw.size() - 2);
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\\' && i + 1 < raw.size()) ++i;
        value.push_back(raw[i]);
      }
    } else {
      value = std::string(raw);
    }
    if (out.contains(key)) {
      throw ConfigError("config key '" + key + "' given twice (line " + std::to_string(line_no) +
                        ")");
    }
    out.emplace(key, std::move(value));
  }
  return out;
}

ExperimentConfig parse_config_text(std::string_view text,
                                   const std::map<std::string, std::string>& overrides) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : read_key_values(text)) apply_setting(cfg, key, value);
  for (const auto& [key, value] : overrides) apply_setting(cfg, key, value);
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::optional<std::string>& path,
                              const std::map<std::string, std::string>& overrides) {
  std::string text;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read config file '" + *path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  return parse_config_text(text, overrides);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& spec : key_specs()) {
    const std::string value = spec.get(cfg);
    out += spec.name + " = " + (spec.quoted ? quote(value) : value) + "\n";
  }
  return out;
}

std::string format_round_trip(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  // Keep reals recognizable as reals in the TOML-style output.
  if (std::isfinite(v) && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string format_significant(double v, int digits) {
  if (v == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, ptr);
}

}  // namespace fedlora
