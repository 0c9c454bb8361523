// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "fedlora/config.hpp"
#include "fedlora/linalg.hpp"
#include "fedlora/metrics.hpp"
#include "fedlora/model.hpp"
#include "fedlora/optim.hpp"
#include "fedlora/tasks.hpp"

namespace fedlora {

/// Which adapter matrices the server averages in a given round (1-based).
struct AggregationPlan {
  bool a = false;
  bool b = false;
};
AggregationPlan aggregation_plan(AggregationStrategy strategy, std::size_t round) noexcept;

/// Which matrices clients train locally.
UpdateMask training_mask(AggregationStrategy strategy) noexcept;

struct ClientState {
  std::size_t id = 0;
  AdaptedNetwork net;
  std::vector<OptimizerState> optimizers;  // one per layer
  std::vector<std::size_t> shard;
  bool diverged = false;
};

/// Per-layer matrices a client sends to the server. A list is empty when the
/// strategy does not upload that matrix this round.
struct AdapterUpload {
  std::size_t client_id = 0;
  std::vector<DenseMatrix> a;
  std::vector<DenseMatrix> b;
};

struct Broadcast {
  std::vector<DenseMatrix> a_bar;  // empty when A is not aggregated
  std::vector<DenseMatrix> b_bar;  // empty when B is not aggregated
};

struct ServerState {
  AggregationStrategy strategy = AggregationStrategy::kShareAOnly;
  std::size_t round = 0;
  Broadcast buffer;
};

struct LocalTrainSettings {
  std::size_t local_steps = 10;
  std::size_t batch_size = 16;
  UpdateMask mask;
};

struct LocalTrainResult {
  std::vector<double> grad_norms;  // one per completed step
  std::vector<double> losses;      // training loss per step
};

/// Batch drawn for one local step: the whole shard in order when batch_size
/// covers it, otherwise batch_size distinct samples (partial Fisher-Yates).
std::vector<std::size_t> sample_batch(const std::vector<std::size_t>& shard,
                                      std::size_t batch_size, RngStream& rng);

/// Stream used by client `client` for its local steps in `round`.
RngStream batch_stream(std::uint64_t seed, std::size_t client, std::size_t round);
/// Stream used to draw A^(0) of `layer` for `client`.
RngStream adapter_init_stream(std::uint64_t seed, std::size_t client, std::size_t layer);

/// Runs forward -> loss -> backward -> update for `settings.local_steps`
/// mini-batches of the client's shard. A non-finite loss or gradient marks the
/// client diverged and stops early. Diverged clients are left untouched.
LocalTrainResult local_train(ClientState& client, const Dataset& data,
                             const LocalTrainSettings& settings, RngStream& rng);

/// Averages the uploaded matrices, summing in ascending client_id order and
/// dividing by the number of uploads. Throws ContractViolation when there are
/// no uploads or shapes disagree.
Broadcast aggregate(ServerState& server, std::vector<AdapterUpload> uploads);

struct RoundResult {
  std::size_t round = 0;
  /// Validation loss of each client's model; NaN for diverged clients.
  std::vector<double> client_loss;
  MetricsRecord record;
  /// True when no client survived this round.
  bool aborted = false;
};

enum class Verdict { kConverged, kDiverged, kStagnant };
std::string_view to_string(Verdict v) noexcept;

/// The simulated federation for one config: frozen network, data, clients
/// and server. Construction draws everything from the config's seed.
class Federation {
 public:
  explicit Federation(ExperimentConfig cfg);

  /// Evaluation of the current client models on the shared validation batch,
  /// without training.
  RoundResult evaluate(std::size_t round) const;

  /// One protocol round: local training on every surviving client, upload,
  /// aggregation, broadcast, evaluation.
  RoundResult run_round();

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const ServerState& server() const noexcept { return server_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  std::vector<ClientState>& clients() noexcept { return clients_; }
  const Dataset& train_data() const noexcept { return train_; }
  const DenseMatrix& validation_inputs() const noexcept { return val_x_; }
  const Targets& validation_targets() const noexcept { return val_y_; }
  const std::vector<std::shared_ptr<const DenseMatrix>>& frozen_weights() const noexcept {
    return weights_;
  }
  const Partition& partition() const noexcept { return partition_; }
  double gamma() const noexcept { return gamma_; }

 private:
  ExperimentConfig cfg_;
  double gamma_ = 0.0;
  std::vector<std::shared_ptr<const DenseMatrix>> weights_;
  Dataset train_;
  DenseMatrix val_x_;
  Targets val_y_;
  Partition partition_;
  ServerState server_;
  std::vector<ClientState> clients_;
};

/// Runs every client in `clients` through `fn`, optionally on worker
/// threads. Results do not depend on the thread count.
void for_each_client(std::vector<ClientState>& clients, bool parallel, std::size_t threads,
                     const std::function<void(ClientState&)>& fn);

/// Builds the dataset (train followed by held-out validation samples) for a config.
Dataset make_task_dataset(const ExperimentConfig& cfg);
Partition make_partition(const ExperimentConfig& cfg, const Dataset& train);

struct ExperimentResult {
  std::vector<MetricsRecord> records;  // round 0 .. last executed round
  std::vector<RoundResult> rounds;     // training rounds only
  Verdict verdict = Verdict::kConverged;
};

/// diverged: any non-finite or |loss| > threshold record (or every client lost);
/// stagnant: final loss > 0.9 x the round-min(5, last) loss; converged otherwise.
Verdict classify_run(std::span<const MetricsRecord> records, double divergence_threshold);

/// Validates the config, then executes `cfg.rounds` rounds. `on_record` sees
/// each metrics row as soon as it exists.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::function<void(const MetricsRecord&)>& on_record = {});

}  // namespace fedlora
