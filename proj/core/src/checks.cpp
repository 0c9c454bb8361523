// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/checks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedlora/config.hpp"
#include "fedlora/fed.hpp"
#include "fedlora/metrics.hpp"
#include "fedlora/model.hpp"

namespace fedlora {

namespace {

constexpr double kStep = 1e-3;

struct FdInstance {
  std::uint64_t seed = 0;
  std::size_t in = 1, hidden = 1, out = 1, rank = 1, batch = 1, layers = 1;
  Activation activation = Activation::kIdentity;
  LossKind loss_kind = LossKind::kSquaredError;

  std::string describe() const {
    std::ostringstream s;
    s << "seed=" << seed << " loss=" << to_string(loss_kind) << " layers=" << layers
      << " k=" << in << " hidden=" << hidden << " d_out=" << out << " r=" << rank
      << " batch=" << batch << " hidden_activation=" << to_string(activation);
    return s.str();
  }
};

struct FdProblem {
  AdaptedNetwork net;
  DenseMatrix x;
  Targets y;
};

std::size_t draw_dim(RngStream& rng) { return 1 + static_cast<std::size_t>(rng.uniform_index(8)); }

FdInstance draw_instance(std::uint64_t master, std::size_t index, LossKind kind) {
  RngStream rng(master, {StreamKind::kTest, index, 0});
  FdInstance in;
  in.seed = index;
  in.loss_kind = kind;
  in.in = draw_dim(rng);
  in.hidden = draw_dim(rng);
  in.out = draw_dim(rng);
  if (kind == LossKind::kCrossEntropy) in.out = std::max<std::size_t>(in.out, 2);
  in.rank = draw_dim(rng);
  in.batch = 1 + static_cast<std::size_t>(rng.uniform_index(4));
  in.layers = 1 + static_cast<std::size_t>(rng.uniform_index(2));
  in.activation = rng.uniform_index(2) == 0 ? Activation::kIdentity : Activation::kTanh;
  return in;
}

FdProblem build_problem(std::uint64_t master, const FdInstance& in) {
  RngStream rng(master, {StreamKind::kTest, in.seed, 1 + static_cast<std::uint64_t>(in.loss_kind)});
  FdProblem p;
  p.net.loss_kind = in.loss_kind;
  std::size_t fan_in = in.in;
  for (std::size_t l = 0; l < in.layers; ++l) {
    const bool last = l + 1 == in.layers;
    const std::size_t fan_out = last ? in.out : in.hidden;
    AdaptedLayer layer;
    layer.w0 = std::make_shared<const DenseMatrix>(
        gaussian_matrix(fan_out, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
    layer.adapter.rank = in.rank;
    layer.adapter.a = gaussian_matrix(in.rank, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    layer.adapter.b = gaussian_matrix(fan_out, in.rank, 0.5, rng);
    layer.adapter.gamma = 0.5 + 1.5 * rng.uniform();
    layer.activation = last ? Activation::kIdentity : in.activation;
    p.net.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  p.x = gaussian_matrix(in.in, in.batch, 1.0, rng);
  if (in.loss_kind == LossKind::kSquaredError) {
    p.y.values = gaussian_matrix(in.out, in.batch, 1.0, rng);
  } else {
    for (std::size_t j = 0; j < in.batch; ++j) {
      p.y.labels.push_back(static_cast<std::size_t>(rng.uniform_index(in.out)));
    }
  }
  return p;
}

double loss_at(const AdaptedNetwork& net, const DenseMatrix& x, const Targets& y) {
  return loss(forward(net, x).output, y, net.loss_kind).loss;
}

// Fourth-order central differences of the loss with respect to every entry of `param`.
DenseMatrix numeric_gradient(DenseMatrix& param, const std::function<double()>& f) {
  DenseMatrix g(param.rows(), param.cols());
  auto values = param.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    auto at = [&](double offset) {
      values[i] = saved + offset;
      return f();
    };
    const double p1 = at(kStep), m1 = at(-kStep), p2 = at(2.0 * kStep), m2 = at(-2.0 * kStep);
    values[i] = saved;
    g.data()[i] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * kStep);
  }
  return g;
}

struct Worst {
  double error = 0.0;
  std::string where;
};

void consider(Worst& w, double err, const std::string& where) {
  if (w.where.empty() || !(err <= w.error)) {
    w.error = err;
    w.where = where;
  }
}

std::string matrix_text(const DenseMatrix& m) {
  std::ostringstream s;
  s << "[";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    s << (i ? "; " : "");
    for (std::size_t j = 0; j < m.cols(); ++j) s << (j ? " " : "") << format_round_trip(m(i, j));
  }
  s << "]";
  return s.str();
}

}  // namespace

bool CheckReport::passed() const noexcept {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
}

double relative_error(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ContractViolation("relative_error: shapes differ");
  const double scale = std::max(frobenius_norm(a), frobenius_norm(b));
  if (scale == 0.0) return 0.0;
  return frobenius_norm(a - b) / scale;
}

SuiteResult finite_difference_suite(const CheckOptions& opts) {
  SuiteResult result;
  result.name = "finite_difference";
  Worst worst;

  auto fail = [&](const FdInstance& in, const std::string& what, double err,
                  const DenseMatrix& analytic, const DenseMatrix& numeric) {
    if (!result.passed) return;
    result.passed = false;
    std::ostringstream s;
    s << what << " relative error " << format_significant(err, 4) << " > "
      << format_significant(opts.fd_tolerance, 3) << "\n  instance: " << in.describe()
      << "\n  analytic: " << matrix_text(analytic) << "\n  numeric:  " << matrix_text(numeric);
    result.first_failure = s.str();
  };

  for (std::size_t i = 0; i < opts.fd_instances; ++i) {
    for (LossKind kind : {LossKind::kSquaredError, LossKind::kCrossEntropy}) {
      const FdInstance in = draw_instance(opts.seed, i, kind);
      FdProblem p = build_problem(opts.seed, in);
      ++result.cases;

      ForwardResult fr = forward(p.net, p.x);
      LossResult lr = loss(fr.output, p.y, kind);
      auto grads = backward(p.net, fr.trace, lr.grad);
      if (opts.gradient_hook) opts.gradient_hook(grads);

      auto f = [&] { return loss_at(p.net, p.x, p.y); };
      for (std::size_t l = 0; l < p.net.layers.size(); ++l) {
        auto& ad = p.net.layers[l].adapter;
        const DenseMatrix na = numeric_gradient(ad.a, f);
        const DenseMatrix nb = numeric_gradient(ad.b, f);
        const double ea = relative_error(grads[l].grad_a, na);
        const double eb = relative_error(grads[l].grad_b, nb);
        const std::string tag = "layer " + std::to_string(l);
        consider(worst, ea, "grad_A " + tag);
        consider(worst, eb, "grad_B " + tag);
        if (!(ea < opts.fd_tolerance)) fail(in, "grad_A " + tag, ea, grads[l].grad_a, na);
        if (!(eb < opts.fd_tolerance)) fail(in, "grad_B " + tag, eb, grads[l].grad_b, nb);
      }

      // Input gradient through a single linear layer: W0^T v plus the adapter path.
      AdaptedNetwork single;
      single.loss_kind = kind;
      single.layers.push_back(p.net.layers.front());
      single.layers.front().activation = Activation::kIdentity;
      const std::size_t out = single.layers.front().out_dim();
      Targets ys;
      if (kind == LossKind::kSquaredError) {
        ys.values = DenseMatrix(out, in.batch);
        for (std::size_t j = 0; j < in.batch; ++j) {
          for (std::size_t r = 0; r < out; ++r) ys.values(r, j) = std::sin(double(r + 3 * j + 1));
        }
      } else {
        for (std::size_t j = 0; j < in.batch; ++j) ys.labels.push_back(j % out);
      }
      if (kind == LossKind::kCrossEntropy && out < 2) continue;
      ForwardResult sf = forward(single, p.x);
      LossResult sl = loss(sf.output, ys, kind);
      auto sg = backward(single, sf.trace, sl.grad);
      if (opts.gradient_hook) opts.gradient_hook(sg);
      DenseMatrix analytic_x = matmul_tn(*single.layers.front().w0, sl.grad);
      analytic_x += sg.front().grad_x;
      DenseMatrix x = p.x;
      const DenseMatrix nx = numeric_gradient(x, [&] { return loss_at(single, x, ys); });
      const double ex = relative_error(analytic_x, nx);
      consider(worst, ex, "grad_x");
      if (!(ex < opts.fd_tolerance)) fail(in, "grad_x", ex, analytic_x, nx);
    }
  }
  std::ostringstream s;
  s << "worst relative error " << format_significant(worst.error, 3) << " (" << worst.where
    << "), bound " << format_significant(opts.fd_tolerance, 3);
  result.summary = s.str();
  return result;
}

SuiteResult trajectory_suite(const CheckOptions& opts) {
  SuiteResult result;
  result.name = "trajectory";
  double worst = 0.0;
  const std::size_t dims[] = {1, 2, 4};

  for (std::size_t d : dims) {
    for (std::size_t k : dims) {
      for (std::size_t r : dims) {
        for (std::size_t n = 1; n <= 3; ++n) {
          ++result.cases;
          ExperimentConfig cfg;
          cfg.d = d;
          cfg.k = k;
          cfg.rank = r;
          cfg.n_clients = n;
          cfg.layers = 1;
          cfg.activation = Activation::kIdentity;
          cfg.rule = ScalingRule::Kind::kFederated;
          cfg.strategy = AggregationStrategy::kShareAOnly;
          cfg.optimizer = OptimizerKind::kSgd;
          cfg.lr = 0.05;
          cfg.local_steps = 1;
          cfg.batch_size = 2;
          cfg.rounds = 2;
          cfg.n_samples = 4 * n;
          cfg.val_samples = 2;
          cfg.seed = opts.seed + result.cases;

          Federation fed(cfg);
          TrajectoryInputs in;
          in.eta = cfg.lr;
          in.gamma = fed.gamma();
          in.w0 = *fed.frozen_weights().front();
          in.x.resize(n);
          in.y.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            const auto& c = fed.clients()[i];
            in.initial_a.push_back(c.net.layers.front().adapter.a);
            for (std::size_t t = 1; t <= 2; ++t) {
              RngStream rng = batch_stream(cfg.seed, i, t);
              const auto idx = sample_batch(c.shard, cfg.batch_size, rng);
              in.x[i].push_back(fed.train_data().gather_inputs(idx));
              in.y[i].push_back(fed.train_data().gather_targets(idx).values);
            }
          }
          const TrajectoryState expect = trajectory_oracle(in);

          double err = 0.0;
          fed.run_round();
          for (std::size_t i = 0; i < n; ++i) {
            const auto& ad = fed.clients()[i].net.layers.front().adapter;
            err = std::max({err, max_abs_diff(ad.b, expect.b1[i]), max_abs_diff(ad.a, expect.a1[i])});
          }
          fed.run_round();
          for (std::size_t i = 0; i < n; ++i) {
            const auto& ad = fed.clients()[i].net.layers.front().adapter;
            err = std::max({err, max_abs_diff(ad.b, expect.b2[i]), max_abs_diff(ad.a, expect.a2[i])});
          }
          worst = std::max(worst, err);
          if (!(err <= opts.trajectory_tolerance) && result.passed) {
            result.passed = false;
            std::ostringstream s;
            s << "max |simulator - recursion| = " << format_significant(err, 4) << " > "
              << format_significant(opts.trajectory_tolerance, 3) << "\n  instance: d=" << d
              << " k=" << k << " r=" << r << " N=" << n << " seed=" << cfg.seed
              << " eta=" << format_round_trip(cfg.lr) << " gamma=" << format_round_trip(in.gamma);
            result.first_failure = s.str();
          }
        }
      }
    }
  }
  result.summary = "max abs deviation " + format_significant(worst, 3) + ", bound " +
                   format_significant(opts.trajectory_tolerance, 3);
  return result;
}

SuiteResult moment_identity_suite(const CheckOptions& opts) {
  SuiteResult result;
  result.name = "moment_identity";
  result.cases = opts.moment_samples;
  constexpr std::size_t kRank = 8, kClients = 2, kWidth = 4;
  constexpr double kSigma = 1.0;
  const MomentIdentityResult m =
      moment_identity_check(kRank, kClients, kWidth, kSigma, opts.moment_samples, opts.seed);

  const double tol = opts.moment_relative_tolerance * m.target;
  const bool ok = std::abs(m.abar_diag_mean - m.target) <= tol &&
                  std::abs(m.cross_diag_mean - m.target) <= tol &&
                  m.abar_offdiag_max < opts.moment_offdiag_bound &&
                  m.cross_offdiag_max < opts.moment_offdiag_bound;
  std::ostringstream s;
  s << "diag mean " << format_significant(m.abar_diag_mean, 5) << " (Abar^T Abar), "
    << format_significant(m.cross_diag_mean, 5) << " (A0^T Abar) vs target r*sigma^2/N = "
    << format_significant(m.target, 5) << "; off-diag max "
    << format_significant(std::max(m.abar_offdiag_max, m.cross_offdiag_max), 3);
  result.summary = s.str();
  result.passed = ok;
  if (!ok) {
    result.first_failure = s.str() + "\n  instance: r=8 N=2 k=4 sigma_a=1 samples=" +
                           std::to_string(opts.moment_samples) + " seed=" + std::to_string(opts.seed);
  }
  return result;
}

CheckReport run_checks(const CheckOptions& opts) {
  CheckReport report;
  report.suites.push_back(finite_difference_suite(opts));
  report.suites.push_back(trajectory_suite(opts));
  report.suites.push_back(moment_identity_suite(opts));
  return report;
}

std::string format_check_table(const CheckReport& report) {
  std::ostringstream s;
  s << "suite               cases   result  summary\n";
  for (const auto& suite : report.suites) {
    std::string name = suite.name;
    name.resize(std::max<std::size_t>(name.size(), 20), ' ');
    std::string cases = std::to_string(suite.cases);
    cases.resize(std::max<std::size_t>(cases.size(), 8), ' ');
    s << name << cases << (suite.passed ? "PASS    " : "FAIL    ") << suite.summary << '\n';
  }
  return s.str();
}

}  // namespace fedlora
