// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/fed.hpp"

#include <algorithm>
#include <exception>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

namespace fedlora {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void parallel_for(std::size_t n, bool parallel, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads == 0 ? std::thread::hardware_concurrency() : threads;
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (!parallel || workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Mean that is exact when all values are equal: x0 + sum(x_i - x0) / n.
double shifted_mean(std::span<const double> values) {
  if (values.empty()) return kNaN;
  const double base = values.front();
  double acc = 0.0;
  for (double v : values) acc += v - base;
  return base + acc / static_cast<double>(values.size());
}

void check_upload_shapes(const std::vector<DenseMatrix>& reference,
                         const std::vector<DenseMatrix>& other, std::size_t client,
                         const char* which) {
  if (reference.size() != other.size()) {
    throw ContractViolation(std::string("aggregate: client ") + std::to_string(client) +
                            " uploaded a different number of " + which + " matrices");
  }
  for (std::size_t l = 0; l < reference.size(); ++l) {
    if (!reference[l].same_shape(other[l])) {
      throw ContractViolation(std::string("aggregate: client ") + std::to_string(client) + " " +
                              which + "[" + std::to_string(l) + "] " +
                              describe_shape(other[l]) + " vs " + describe_shape(reference[l]));
    }
  }
}

std::vector<DenseMatrix> average(const std::vector<AdapterUpload>& uploads,
                                 std::vector<DenseMatrix> AdapterUpload::*field) {
  std::vector<DenseMatrix> sum = uploads.front().*field;
  for (std::size_t u = 1; u < uploads.size(); ++u) {
    const auto& mats = uploads[u].*field;
    for (std::size_t l = 0; l < sum.size(); ++l) sum[l] += mats[l];
  }
  const auto n = static_cast<double>(uploads.size());
  for (auto& m : sum) {
    for (double& v : m.data()) v /= n;
  }
  return sum;
}

}  // namespace

AggregationPlan aggregation_plan(AggregationStrategy strategy, std::size_t round) noexcept {
  switch (strategy) {
    case AggregationStrategy::kShareAOnly:
      return {true, false};
    case AggregationStrategy::kShareBoth:
      return {true, true};
    case AggregationStrategy::kFreezeA:
      return {false, true};
    case AggregationStrategy::kAlternating:
      return round % 2 == 1 ? AggregationPlan{true, false} : AggregationPlan{false, true};
  }
  return {};
}

UpdateMask training_mask(AggregationStrategy strategy) noexcept {
  if (strategy == AggregationStrategy::kFreezeA) return {false, true};
  return {true, true};
}

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::kConverged:
      return "converged";
    case Verdict::kDiverged:
      return "diverged";
    case Verdict::kStagnant:
      return "stagnant";
  }
  return "unknown";
}

std::vector<std::size_t> sample_batch(const std::vector<std::size_t>& shard,
                                      std::size_t batch_size, RngStream& rng) {
  if (shard.empty()) throw ContractViolation("sample_batch: empty shard");
  if (batch_size >= shard.size()) return shard;
  std::vector<std::size_t> pool = shard;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(batch_size);
  return pool;
}

RngStream batch_stream(std::uint64_t seed, std::size_t client, std::size_t round) {
  return RngStream(seed, {StreamKind::kBatch, client, round});
}

RngStream adapter_init_stream(std::uint64_t seed, std::size_t client, std::size_t layer) {
  return RngStream(seed, {StreamKind::kAdapterInit, client, layer});
}

LocalTrainResult local_train(ClientState& client, const Dataset& data,
                             const LocalTrainSettings& settings, RngStream& rng) {
  LocalTrainResult result;
  if (client.diverged) return result;
  if (client.shard.empty()) throw ContractViolation("local_train: client has an empty shard");
  if (client.optimizers.size() != client.net.layers.size()) {
    throw ContractViolation("local_train: one optimizer state per layer required");
  }
  const LossKind kind = client.net.loss_kind;

  for (std::size_t step = 0; step < settings.local_steps; ++step) {
    const auto idx = sample_batch(client.shard, settings.batch_size, rng);
    const DenseMatrix x = data.gather_inputs(idx);
    const Targets y = data.gather_targets(idx);

    ForwardResult fr = forward(client.net, x);
    LossResult lr = loss(fr.output, y, kind);
    if (!std::isfinite(lr.loss)) {
      client.diverged = true;
      break;
    }
    const auto grads = backward(client.net, fr.trace, lr.grad);
    const bool finite = std::all_of(grads.begin(), grads.end(), [&](const AdapterGradients& g) {
      return (!settings.mask.a || g.grad_a.all_finite()) &&
             (!settings.mask.b || g.grad_b.all_finite());
    });
    if (!finite) {
      client.diverged = true;
      break;
    }
    result.losses.push_back(lr.loss);
    result.grad_norms.push_back(avg_grad_norm(grads, settings.mask));
    for (std::size_t l = 0; l < grads.size(); ++l) {
      apply_update(client.optimizers[l], client.net.layers[l].adapter, grads[l], settings.mask);
    }
  }
  return result;
}

Broadcast aggregate(ServerState& server, std::vector<AdapterUpload> uploads) {
  if (uploads.empty()) throw ContractViolation("aggregate: no uploads (every client diverged)");
  std::sort(uploads.begin(), uploads.end(),
            [](const AdapterUpload& x, const AdapterUpload& y) { return x.client_id < y.client_id; });
  for (std::size_t u = 1; u < uploads.size(); ++u) {
    if (uploads[u].client_id == uploads[u - 1].client_id) {
      throw ContractViolation("aggregate: duplicate upload from client " +
                              std::to_string(uploads[u].client_id));
    }
    check_upload_shapes(uploads.front().a, uploads[u].a, uploads[u].client_id, "A");
    check_upload_shapes(uploads.front().b, uploads[u].b, uploads[u].client_id, "B");
  }
  Broadcast out;
  if (!uploads.front().a.empty()) out.a_bar = average(uploads, &AdapterUpload::a);
  if (!uploads.front().b.empty()) out.b_bar = average(uploads, &AdapterUpload::b);
  server.buffer = out;
  return out;
}

void for_each_client(std::vector<ClientState>& clients, bool parallel, std::size_t threads,
                     const std::function<void(ClientState&)>& fn) {
  parallel_for(clients.size(), parallel, threads, [&](std::size_t i) { fn(clients[i]); });
}

Dataset make_task_dataset(const ExperimentConfig& cfg) {
  RngStream rng(cfg.seed, {StreamKind::kData, 0, 0});
  const std::size_t total = cfg.n_samples + cfg.val_samples;
  if (cfg.task == TaskKind::kRegression) {
    return make_regression(total, cfg.k, cfg.out_dim(), cfg.noise_std, rng);
  }
  return make_classification(total, cfg.k, cfg.classes, rng, cfg.class_separation);
}

Partition make_partition(const ExperimentConfig& cfg, const Dataset& train) {
  RngStream rng(cfg.seed, {StreamKind::kPartition, 0, 0});
  if (cfg.partition == PartitionKind::kDirichlet) {
    return partition_dirichlet(train, cfg.n_clients, cfg.beta, rng);
  }
  return partition_iid(train, cfg.n_clients, rng);
}

Federation::Federation(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  gamma_ = cfg_.gamma();

  NetworkShape shape;
  shape.in_dim = cfg_.k;
  shape.hidden = cfg_.d;
  shape.out_dim = cfg_.out_dim();
  shape.layers = cfg_.layers;
  shape.hidden_activation = cfg_.activation;
  weights_ = make_frozen_weights(shape, cfg_.seed);

  const Dataset all = make_task_dataset(cfg_);
  train_ = all.slice(0, cfg_.n_samples);
  const Dataset val = all.slice(cfg_.n_samples, cfg_.val_samples);
  std::vector<std::size_t> val_idx(val.size());
  std::iota(val_idx.begin(), val_idx.end(), std::size_t{0});
  val_x_ = val.gather_inputs(val_idx);
  val_y_ = val.gather_targets(val_idx);

  partition_ = make_partition(cfg_, train_);
  server_.strategy = cfg_.strategy;

  OptimizerSettings opt;
  opt.kind = cfg_.optimizer;
  opt.learning_rate = cfg_.lr;
  opt.beta1 = cfg_.adam_beta1;
  opt.beta2 = cfg_.adam_beta2;
  opt.epsilon = cfg_.adam_eps;
  opt.weight_decay = cfg_.weight_decay;

  // Split aggregation draws an independent A^(0) per client; with A frozen,
  // every client shares client 0's draw so that averaging B is meaningful.
  const bool shared_init = cfg_.strategy == AggregationStrategy::kFreezeA;

  clients_.resize(cfg_.n_clients);
  for (std::size_t i = 0; i < cfg_.n_clients; ++i) {
    ClientState& c = clients_[i];
    c.id = i;
    c.shard = partition_.shards[i];
    c.net.loss_kind = cfg_.loss_kind();
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto& w0 = weights_[l];
      const double sigma =
          cfg_.sigma_a > 0.0 ? cfg_.sigma_a : 1.0 / std::sqrt(static_cast<double>(w0->cols()));
      RngStream rng = adapter_init_stream(cfg_.seed, shared_init ? 0 : i, l);
      AdaptedLayer layer;
      layer.w0 = w0;
      layer.adapter = init_adapter(w0->rows(), w0->cols(), cfg_.rank, sigma, rng);
      layer.adapter.gamma = gamma_;
      layer.activation = l + 1 == cfg_.layers ? Activation::kIdentity : cfg_.activation;
      c.net.layers.push_back(std::move(layer));
      c.optimizers.emplace_back(opt);
    }
  }
}

RoundResult Federation::evaluate(std::size_t round) const {
  RoundResult result;
  result.round = round;
  result.client_loss.assign(clients_.size(), kNaN);
  std::vector<std::vector<Moments>> moments(clients_.size());

  parallel_for(clients_.size(), cfg_.parallel, cfg_.threads, [&](std::size_t i) {
    const ClientState& c = clients_[i];
    if (c.diverged) return;
    ForwardResult fr = forward_merged(c.net, val_x_);
    result.client_loss[i] = loss(fr.output, val_y_, c.net.loss_kind).loss;
    moments[i] = activation_moments(fr.trace);
  });

  std::vector<double> losses;
  std::vector<std::vector<double>> means(cfg_.layers), vars(cfg_.layers);
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    if (clients_[i].diverged) {
      ++result.record.diverged_count;
      continue;
    }
    losses.push_back(result.client_loss[i]);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      means[l].push_back(moments[i][l].mean);
      vars[l].push_back(moments[i][l].variance);
    }
  }
  auto& rec = result.record;
  rec.round = round;
  rec.mean_loss = shifted_mean(losses);
  rec.perplexity = perplexity_analog(rec.mean_loss, cfg_.loss_kind());
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    rec.act_mean.push_back(shifted_mean(means[l]));
    rec.act_var.push_back(shifted_mean(vars[l]));
  }
  result.aborted = losses.empty();
  return result;
}

RoundResult Federation::run_round() {
  const std::size_t t = ++server_.round;
  const AggregationPlan plan = aggregation_plan(cfg_.strategy, t);
  LocalTrainSettings settings;
  settings.local_steps = cfg_.local_steps;
  settings.batch_size = cfg_.batch_size;
  settings.mask = training_mask(cfg_.strategy);

  std::vector<LocalTrainResult> local(clients_.size());
  for_each_client(clients_, cfg_.parallel, cfg_.threads, [&](ClientState& c) {
    if (c.diverged) return;
    if (cfg_.reset_optim) {
      for (auto& o : c.optimizers) o.reset();
    }
    RngStream rng = batch_stream(cfg_.seed, c.id, t);
    local[c.id] = local_train(c, train_, settings, rng);
  });

  std::vector<AdapterUpload> uploads;
  for (const ClientState& c : clients_) {
    if (c.diverged) continue;
    AdapterUpload up;
    up.client_id = c.id;
    for (const auto& layer : c.net.layers) {
      if (plan.a) up.a.push_back(layer.adapter.a);
      if (plan.b) up.b.push_back(layer.adapter.b);
    }
    uploads.push_back(std::move(up));
  }
  if (uploads.empty()) {
    RoundResult dead = evaluate(t);
    dead.aborted = true;
    return dead;
  }

  const Broadcast bc = aggregate(server_, std::move(uploads));
  for (ClientState& c : clients_) {
    if (c.diverged) continue;
    for (std::size_t l = 0; l < c.net.layers.size(); ++l) {
      if (!bc.a_bar.empty()) c.net.layers[l].adapter.a = bc.a_bar[l];
      if (!bc.b_bar.empty()) c.net.layers[l].adapter.b = bc.b_bar[l];
    }
  }

  RoundResult result = evaluate(t);
  std::vector<double> client_norms;
  for (const ClientState& c : clients_) {
    const auto& norms = local[c.id].grad_norms;
    if (c.diverged || norms.empty()) continue;
    client_norms.push_back(std::accumulate(norms.begin(), norms.end(), 0.0) /
                           static_cast<double>(norms.size()));
  }
  if (!client_norms.empty()) {
    result.record.avg_grad_norm =
        std::accumulate(client_norms.begin(), client_norms.end(), 0.0) /
        static_cast<double>(client_norms.size());
  }
  return result;
}

Verdict classify_run(std::span<const MetricsRecord> records, double divergence_threshold) {
  if (records.empty()) return Verdict::kStagnant;
  for (const auto& r : records) {
    if (!std::isfinite(r.mean_loss) || std::abs(r.mean_loss) > divergence_threshold) {
      return Verdict::kDiverged;
    }
  }
  const std::size_t last = records.size() - 1;
  const double reference = records[std::min<std::size_t>(5, last)].mean_loss;
  return records[last].mean_loss > 0.9 * reference ? Verdict::kStagnant : Verdict::kConverged;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::function<void(const MetricsRecord&)>& on_record) {
  Federation fed(cfg);
  ExperimentResult out;
  auto emit = [&](const MetricsRecord& rec) {
    out.records.push_back(rec);
    if (on_record) on_record(rec);
  };

  RoundResult initial = fed.evaluate(0);
  emit(initial.record);
  bool aborted = false;
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    RoundResult rr = fed.run_round();
    emit(rr.record);
    aborted = rr.aborted;
    out.rounds.push_back(std::move(rr));
    if (aborted) break;
  }
  out.verdict = aborted ? Verdict::kDiverged : classify_run(out.records, cfg.divergence_threshold);
  return out;
}

}  // namespace fedlora
