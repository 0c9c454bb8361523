// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

// Randomized invariants. Each case draws its shapes and values from a
// dedicated test stream so failures are reproducible from the case index.

#include <gtest/gtest.h>

#include <cmath>

#include "fedlora/fed.hpp"

namespace fedlora {
namespace {

constexpr std::uint64_t kCases = 40;

RngStream case_stream(std::uint64_t c) { return RngStream(777, {StreamKind::kTest, c, 0}); }

std::size_t draw(RngStream& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_index(hi - lo + 1));
}

TEST(Property, FederatedGammaKeepsSquaredRatioFixed) {
  for (std::uint64_t c = 0; c < kCases; ++c) {
    auto rng = case_stream(c);
    const std::size_t n = draw(rng, 1, 64);
    const std::size_t r = draw(rng, 1, 1024);
    const double alpha = 0.5 + 16.0 * rng.uniform();
    const double g = scaling_factor(ScalingRule::federated(alpha), n, r);
    EXPECT_NEAR(g * g * static_cast<double>(r) / static_cast<double>(n), alpha * alpha,
                1e-12 * alpha * alpha)
        << "case " << c;
  }
}

TEST(Property, MergedWeightsMatchFactoredForward) {
  for (std::uint64_t c = 0; c < kCases; ++c) {
    auto rng = case_stream(c);
    const std::size_t d = draw(rng, 1, 9), k = draw(rng, 1, 9), r = draw(rng, 1, 6);
    LoraAdapter ad = init_adapter(d, k, r, 1.0, rng);
    ad.b = gaussian_matrix(d, r, 1.0, rng);
    ad.gamma = 0.1 + rng.uniform();
    const auto w0 = gaussian_matrix(d, k, 1.0, rng);
    const auto x = gaussian_matrix(k, draw(rng, 1, 5), 1.0, rng);
    EXPECT_LE(max_abs_diff(adapter_forward(ad, w0, x).h, matmul(merge_adapter(ad, w0), x)), 1e-12)
        << "case " << c;
  }
}

TEST(Property, AdapterOutputAffineInB) {
  for (std::uint64_t c = 0; c < kCases; ++c) {
    auto rng = case_stream(c);
    const std::size_t d = draw(rng, 1, 7), k = draw(rng, 1, 7), r = draw(rng, 1, 5);
    LoraAdapter ad = init_adapter(d, k, r, 1.0, rng);
    ad.gamma = 0.7;
    const auto w0 = gaussian_matrix(d, k, 1.0, rng);
    const auto x = gaussian_matrix(k, 3, 1.0, rng);
    const auto b1 = gaussian_matrix(d, r, 1.0, rng);
    const auto b2 = gaussian_matrix(d, r, 1.0, rng);
    auto delta = [&](const DenseMatrix& b) {
      LoraAdapter copy = ad;
      copy.b = b;
      return adapter_forward(copy, w0, x).delta;
    };
    EXPECT_LE(max_abs_diff(delta(b1 + b2), delta(b1) + delta(b2)), 1e-12) << "case " << c;
  }
}

TEST(Property, AggregateCommutesWithScaling) {
  for (std::uint64_t c = 0; c < kCases; ++c) {
    auto rng = case_stream(c);
    const std::size_t n = draw(rng, 1, 6), rows = draw(rng, 1, 5), cols = draw(rng, 1, 5);
    std::vector<AdapterUpload> ups, scaled;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = gaussian_matrix(rows, cols, 1.0, rng);
      ups.push_back({i, {a}, {}});
      scaled.push_back({i, {4.0 * a}, {}});
    }
    ServerState s1, s2;
    EXPECT_EQ(aggregate(s2, scaled).a_bar[0], 4.0 * aggregate(s1, ups).a_bar[0]) << "case " << c;
  }
}

TEST(Property, AggregateOfIdenticalUploadsIsThatUpload) {
  for (std::uint64_t c = 0; c < kCases; ++c) {
    auto rng = case_stream(c);
    const std::size_t n = draw(rng, 1, 8);
    DenseMatrix b = gaussian_matrix(draw(rng, 1, 5), draw(rng, 1, 5), 1.0, rng);
    for (double& v : b.data()) v = std::ldexp(std::round(std::ldexp(v, 20)), -20);
    std::vector<AdapterUpload> ups;
    for (std::size_t i = 0; i < n; ++i) ups.push_back({i, {}, {b}});
    ServerState s;
    EXPECT_LE(max_abs_diff(aggregate(s, ups).b_bar[0], b), 1e-15) << "case " << c;
  }
}

TEST(Property, PartitionsCoverDisjointly) {
  for (std::uint64_t c = 0; c < kCases; ++c) {
    auto rng = case_stream(c);
    const std::size_t samples = draw(rng, 10, 300);
    const std::size_t clients = draw(rng, 1, std::min<std::size_t>(samples, 12));
    const auto cls = make_classification(samples, 2, draw(rng, 2, 12), rng);
    EXPECT_TRUE(partition_iid(cls, clients, rng).valid_for(samples)) << "case " << c;
    const double beta = std::exp(rng.uniform() * 8.0 - 5.0);
    EXPECT_TRUE(partition_dirichlet(cls, clients, beta, rng).valid_for(samples))
        << "case " << c << " beta " << beta;
  }
}

ExperimentConfig random_config(RngStream& rng) {
  ExperimentConfig cfg;
  cfg.n_clients = draw(rng, 1, 4);
  cfg.rank = draw(rng, 1, 6);
  cfg.d = draw(rng, 2, 6);
  cfg.k = draw(rng, 2, 6);
  cfg.layers = draw(rng, 1, 3);
  cfg.rounds = draw(rng, 1, 3);
  cfg.local_steps = draw(rng, 1, 3);
  cfg.batch_size = draw(rng, 1, 8);
  cfg.n_samples = 40;
  cfg.val_samples = 8;
  cfg.lr = 0.01;
  cfg.seed = rng.next_u64();
  return cfg;
}

TEST(Property, ShareAOnlyLeavesEveryClientWithTheSameA) {
  for (std::uint64_t c = 0; c < 12; ++c) {
    auto rng = case_stream(c);
    Federation fed(random_config(rng));
    for (std::size_t t = 0; t < fed.config().rounds; ++t) {
      fed.run_round();
      for (const auto& client : fed.clients()) {
        for (std::size_t l = 0; l < client.net.layers.size(); ++l) {
          EXPECT_EQ(client.net.layers[l].adapter.a, fed.clients()[0].net.layers[l].adapter.a)
              << "case " << c;
        }
      }
    }
  }
}

TEST(Property, FreezeAKeepsAAndSynchronizesB) {
  for (std::uint64_t c = 0; c < 12; ++c) {
    auto rng = case_stream(c);
    auto cfg = random_config(rng);
    cfg.strategy = AggregationStrategy::kFreezeA;
    Federation fed(cfg);
    std::vector<DenseMatrix> a0;
    for (const auto& layer : fed.clients()[0].net.layers) a0.push_back(layer.adapter.a);
    for (std::size_t t = 0; t < cfg.rounds; ++t) fed.run_round();
    for (const auto& client : fed.clients()) {
      for (std::size_t l = 0; l < a0.size(); ++l) {
        EXPECT_EQ(client.net.layers[l].adapter.a, a0[l]) << "case " << c;
        EXPECT_EQ(client.net.layers[l].adapter.b, fed.clients()[0].net.layers[l].adapter.b)
            << "case " << c;
      }
    }
  }
}

TEST(Property, RunsAreReproducibleAndParallelSafe) {
  for (std::uint64_t c = 0; c < 8; ++c) {
    auto rng = case_stream(c);
    auto cfg = random_config(rng);
    const auto a = run_experiment(cfg);
    cfg.parallel = true;
    cfg.threads = 3;
    const auto b = run_experiment(cfg);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t t = 0; t < a.records.size(); ++t) {
      EXPECT_EQ(a.records[t].mean_loss, b.records[t].mean_loss) << "case " << c;
      EXPECT_EQ(a.records[t].act_mean, b.records[t].act_mean) << "case " << c;
    }
  }
}

TEST(Property, RoundZeroAdapterMomentsVanish) {
  for (std::uint64_t c = 0; c < 12; ++c) {
    auto rng = case_stream(c);
    const auto rec = run_experiment([&] {
      auto cfg = random_config(rng);
      cfg.rounds = 0;
      return cfg;
    }()).records.front();
    for (double m : rec.act_mean) EXPECT_EQ(m, 0.0) << "case " << c;
    for (double v : rec.act_var) EXPECT_EQ(v, 0.0) << "case " << c;
  }
}

}  // namespace
}  // namespace fedlora
