// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/csv.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace fedlora {

namespace {

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string real(double v) { return format_significant(v, 9); }

std::vector<std::string> row_fields(const ExperimentConfig& cfg, const MetricsRecord& rec) {
  std::vector<std::string> f;
  f.push_back(cfg.resolved_run_id());
  f.push_back(cfg.resolved_method());
  f.emplace_back(to_string(cfg.rule));
  f.emplace_back(to_string(cfg.strategy));
  f.push_back(std::to_string(cfg.rank));
  f.push_back(std::to_string(cfg.n_clients));
  f.push_back(std::to_string(cfg.seed));
  f.push_back(std::to_string(rec.round));
  f.push_back(real(rec.mean_loss));
  f.push_back(real(rec.perplexity));
  f.push_back(rec.avg_grad_norm ? real(*rec.avg_grad_norm) : std::string());
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    f.push_back(l < rec.act_mean.size() ? real(rec.act_mean[l]) : std::string("nan"));
  }
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    f.push_back(l < rec.act_var.size() ? real(rec.act_var[l]) : std::string("nan"));
  }
  f.push_back(std::to_string(rec.diverged_count));
  return f;
}

ExperimentConfig point_config(const ExperimentConfig& base, SweepAxis axis, double value) {
  ExperimentConfig cfg = base;
  (axis == SweepAxis::kRank ? cfg.rank : cfg.n_clients) = static_cast<std::size_t>(value);
  cfg.run_id.clear();
  return cfg;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw IoError("dataset csv line " + std::to_string(line) + ": bad number '" +
                  std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

}  // namespace

std::vector<std::string> metrics_header(std::size_t layers, bool with_swept_value) {
  std::vector<std::string> h = {"run_id",    "method",   "rule",       "strategy",
                                "rank",      "n_clients", "seed",      "round",
                                "mean_loss", "ppl_analog", "avg_grad_norm"};
  for (std::size_t l = 0; l < layers; ++l) h.push_back("act_mean_l" + std::to_string(l));
  for (std::size_t l = 0; l < layers; ++l) h.push_back("act_var_l" + std::to_string(l));
  h.emplace_back("diverged_count");
  if (with_swept_value) h.emplace_back("swept_value");
  return h;
}

std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += quote_if_needed(fields[i]);
  }
  return out;
}

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string format_metrics_row(const ExperimentConfig& cfg, const MetricsRecord& rec,
                               std::optional<double> swept_value) {
  auto fields = row_fields(cfg, rec);
  if (swept_value) fields.push_back(real(*swept_value));
  return join_csv(fields);
}

MetricsWriter::MetricsWriter(const std::string& path, const ExperimentConfig& cfg)
    : out_(path, std::ios::binary | std::ios::trunc), cfg_(cfg), path_(path) {
  if (!out_) throw IoError("cannot open '" + path + "' for writing");
  out_ << join_csv(metrics_header(cfg_.layers)) << '\n';
  out_.flush();
  if (!out_) throw IoError("write to '" + path_ + "' failed");
}

void MetricsWriter::write(const MetricsRecord& rec) {
  out_ << format_metrics_row(cfg_, rec) << '\n';
  out_.flush();
  if (!out_) throw IoError("write to '" + path_ + "' failed");
}

std::string metrics_csv(const ExperimentConfig& cfg, const std::vector<MetricsRecord>& records) {
  std::string out = join_csv(metrics_header(cfg.layers)) + '\n';
  for (const auto& r : records) out += format_metrics_row(cfg, r) + '\n';
  return out;
}

std::string sweep_csv(const ExperimentConfig& base, const StabilityReport& report) {
  std::string out = join_csv(metrics_header(base.layers, true)) + '\n';
  for (const auto& p : report.points) {
    const ExperimentConfig cfg = point_config(base, report.axis, p.swept_value);
    for (const auto& r : p.records) out += format_metrics_row(cfg, r, p.swept_value) + '\n';
  }
  return out;
}

std::string sweep_summary_csv(const ExperimentConfig& base, const StabilityReport& report) {
  std::string out = join_csv({"axis", "swept_value", "run_id", "round1_avg_grad_norm",
                              "final_loss", "diverged", "flatness_ratio", "slope"}) +
                    '\n';
  for (const auto& p : report.points) {
    const ExperimentConfig cfg = point_config(base, report.axis, p.swept_value);
    out += join_csv({std::string(to_string(report.axis)), real(p.swept_value),
                     cfg.resolved_run_id(), real(p.round1_grad_norm), real(p.final_loss),
                     p.diverged ? "1" : "0", real(report.flatness_ratio), real(report.slope)}) +
           '\n';
  }
  return out;
}

std::string dataset_csv(const Dataset& data, const Partition& partition) {
  data.validate();
  if (!partition.valid_for(data.size())) {
    throw ContractViolation("dataset_csv: partition does not cover the dataset");
  }
  std::vector<std::size_t> owner(data.size());
  for (std::size_t c = 0; c < partition.shards.size(); ++c) {
    for (std::size_t idx : partition.shards[c]) owner[idx] = c;
  }
  const std::size_t k = data.input_dim();
  const std::size_t dy = data.labeled() ? 0 : data.targets.rows();

  std::vector<std::string> header = {"sample_index", "client", "label"};
  for (std::size_t i = 0; i < k; ++i) header.push_back("x_" + std::to_string(i));
  for (std::size_t i = 0; i < dy; ++i) header.push_back("y_" + std::to_string(i));

  std::string out = join_csv(header) + '\n';
  for (std::size_t s = 0; s < data.size(); ++s) {
    std::vector<std::string> row = {std::to_string(s), std::to_string(owner[s]),
                                    data.labeled() ? std::to_string(data.labels[s]) : ""};
    for (std::size_t i = 0; i < k; ++i) row.push_back(format_round_trip(data.inputs(i, s)));
    for (std::size_t i = 0; i < dy; ++i) row.push_back(format_round_trip(data.targets(i, s)));
    out += join_csv(row) + '\n';
  }
  return out;
}

DatasetDump parse_dataset_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw IoError("dataset csv: empty file");
  const auto header = split_csv(lines.front());
  if (header.size() < 3 || header[0] != "sample_index" || header[1] != "client" ||
      header[2] != "label") {
    throw IoError("dataset csv: header must start with sample_index,client,label");
  }
  std::size_t k = 0;
  std::size_t dy = 0;
  for (std::size_t i = 3; i < header.size(); ++i) {
    if (header[i] == "x_" + std::to_string(k) && dy == 0) {
      ++k;
    } else if (header[i] == "y_" + std::to_string(dy)) {
      ++dy;
    } else {
      throw IoError("dataset csv: unexpected column '" + header[i] + "'");
    }
  }
  const std::size_t n = lines.size() - 1;
  DatasetDump dump;
  dump.data.inputs = DenseMatrix(k, n);
  if (dy > 0) dump.data.targets = DenseMatrix(dy, n);
  std::size_t max_client = 0;
  std::vector<std::size_t> owner(n);
  bool labeled = false;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t line_no = s + 2;
    const auto f = split_csv(lines[s + 1]);
    if (f.size() != header.size()) {
      throw IoError("dataset csv line " + std::to_string(line_no) + ": expected " +
                    std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    if (parse_number<std::size_t>(f[0], line_no) != s) {
      throw IoError("dataset csv line " + std::to_string(line_no) + ": sample_index out of order");
    }
    owner[s] = parse_number<std::size_t>(f[1], line_no);
    max_client = std::max(max_client, owner[s]);
    if (!f[2].empty()) {
      labeled = true;
      dump.data.labels.push_back(parse_number<std::size_t>(f[2], line_no));
    }
    for (std::size_t i = 0; i < k; ++i) dump.data.inputs(i, s) = parse_number<double>(f[3 + i], line_no);
    for (std::size_t i = 0; i < dy; ++i) {
      dump.data.targets(i, s) = parse_number<double>(f[3 + k + i], line_no);
    }
  }
  if (labeled) {
    if (dump.data.labels.size() != n) throw IoError("dataset csv: some rows lack a label");
    dump.data.classes = *std::max_element(dump.data.labels.begin(), dump.data.labels.end()) + 1;
  }
  dump.partition.shards.resize(n == 0 ? 0 : max_client + 1);
  for (std::size_t s = 0; s < n; ++s) dump.partition.shards[owner[s]].push_back(s);
  return dump;
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read from '" + path + "' failed");
  return ss.str();
}

}  // namespace fedlora
