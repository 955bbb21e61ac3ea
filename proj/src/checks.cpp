// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/checks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rnnopt/oracles.hpp"
#include "rnnopt/parallel.hpp"
#include "rnnopt/random.hpp"

namespace rnnopt::checks {

using ad::Var;

namespace {

CheckResult make(std::string name, double value, double threshold, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.value = value;
  r.threshold = threshold;
  r.passed = std::isfinite(value) && value <= threshold;
  r.detail = std::move(detail);
  return r;
}

LstmPolicy random_policy(std::size_t dim, std::size_t hidden, std::uint64_t seed, double scale) {
  LstmPolicy p(SearchSpace::unit(dim), hidden);
  RandomStream rng(seed);
  for (double& w : p.parameters()) w = rng.uniform(-scale, scale);
  return p;
}

}  // namespace

CheckResult lstm_step_gradient(std::uint64_t seed) {
  constexpr std::size_t kH = 8;
  constexpr std::size_t kD = 2;
  const LstmPolicy base = random_policy(kD, kH, seed, 0.5);
  RandomStream rng(seed ^ 0x5eedULL);
  PolicyState<double> s0{std::vector<double>(kH), std::vector<double>(kH)};
  for (double& v : s0.h) v = rng.uniform(-0.5, 0.5);
  for (double& v : s0.c) v = rng.uniform(-0.5, 0.5);
  std::vector<double> input = {rng.uniform(), rng.uniform(), rng.normal(), 1.0};
  std::vector<double> coef(kD + 2 * kH);
  for (double& c : coef) c = rng.uniform(-1.0, 1.0);

  // Scalar probe: a random linear combination of the query and the new state.
  auto probe = [&](std::span<const double> theta) {
    PolicyState<double> s = s0;
    const auto x = policy_step<double>(base, theta, s, input);
    double v = 0.0;
    for (std::size_t k = 0; k < kD; ++k) v += coef[k] * x[k];
    for (std::size_t j = 0; j < kH; ++j) v += coef[kD + j] * s.h[j] + coef[kD + kH + j] * s.c[j];
    return v;
  };

  ad::Tape tape;
  const auto theta = tape.variables(base.parameters());
  PolicyState<Var> s{{}, {}};
  for (double v : s0.h) s.h.push_back(tape.variable(v));
  for (double v : s0.c) s.c.push_back(tape.variable(v));
  std::vector<Var> in;
  for (double v : input) in.push_back(tape.variable(v));
  const auto x = policy_step<Var>(base, theta, s, in);
  Var out = tape.variable(0.0);
  for (std::size_t k = 0; k < kD; ++k) out = out + coef[k] * x[k];
  for (std::size_t j = 0; j < kH; ++j) {
    out = out + coef[kD + j] * s.h[j] + coef[kD + kH + j] * s.c[j];
  }
  const ad::Gradient g = tape.backward(out);
  std::vector<double> taped(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) taped[i] = g[theta[i]];
  const auto fd = oracle::central_difference(probe, base.parameters());
  return make("lstm_step_gradient", oracle::max_relative_error(taped, fd), 1e-4,
              std::to_string(theta.size()) + " parameters");
}

CheckResult posterior_gradient(std::uint64_t seed) {
  constexpr std::size_t kD = 2;
  constexpr std::size_t kN = 6;
  RandomStream rng(seed);
  gp::Kernel k;
  std::vector<double> data(kN * kD);
  std::vector<double> values(kN);
  for (double& v : data) v = rng.uniform();
  for (double& v : values) v = rng.normal();
  const gp::GpRegression model(k, kD, data, values);
  const double best = *std::min_element(values.begin(), values.end());
  std::vector<double> x = {rng.uniform(), rng.uniform()};

  double worst = 0.0;
  for (int which = 0; which < 3; ++which) {
    auto f = [&](std::span<const double> p) {
      const auto post = model.at(p);
      if (which == 0) return post.mean;
      if (which == 1) return post.variance;
      return gp::expected_improvement(post, best);
    };
    ad::Tape tape;
    const auto xv = tape.variables(x);
    const auto post = model.at(std::span<const Var>(xv));
    const Var out = which == 0 ? post.mean
                    : which == 1 ? post.variance
                                 : gp::expected_improvement(post, best);
    const ad::Gradient g = tape.backward(out);
    const std::vector<double> taped = {g[xv[0]], g[xv[1]]};
    worst = std::max(worst, oracle::max_relative_error(taped, oracle::central_difference(f, x)));
  }
  return make("posterior_gradient", worst, 1e-4, "mean, variance and EI");
}

CheckResult rollout_gradient_check(LossKind loss, std::uint64_t seed) {
  LstmPolicy policy = random_policy(1, 4, seed, 0.5);
  RolloutConfig rc;
  rc.horizon = 3;
  rc.loss = loss;
  rc.detach_history = false;
  const std::uint64_t fseed = derive_seed(seed, StreamId::TrainFunction);
  const RolloutGradient taped = rollout_gradient(policy, rc, fseed, 0);
  RolloutConfig value_rc = rc;
  value_rc.detach_history = true;  // values do not depend on the mode
  auto f = [&](std::span<const double> theta) {
    LstmPolicy p = policy;
    std::copy(theta.begin(), theta.end(), p.parameters().begin());
    return rollout_loss_value(p, value_rc, fseed, 0);
  };
  const auto fd = oracle::central_difference(f, policy.parameters());
  return make("rollout_gradient_" + to_string(loss), oracle::max_relative_error(taped.grad, fd),
              1e-4, "T=3, H=4, full history");
}

CheckResult incremental_vs_joint(std::uint64_t seed) {
  const gp::Kernel k;
  const std::vector<double> points = {0.1, 0.2, 0.35, 0.8, 0.5, 0.5, 0.9, 0.1, 0.62, 0.71};
  RandomStream rng(seed);
  std::vector<double> z(5);
  for (double& v : z) v = rng.normal();
  gp::GpSampleFunction f(k, 2, seed);
  std::vector<double> inc(5);
  for (std::size_t i = 0; i < 5; ++i) {
    inc[i] = f.sample(std::span<const double>(points).subspan(2 * i, 2), z[i]).value;
  }
  const auto joint = oracle::joint_sample(k, 2, points, z, k.noise_variance);
  double worst = 0.0;
  for (std::size_t i = 0; i < 5; ++i) worst = std::max(worst, std::abs(inc[i] - joint[i]));
  return make("incremental_vs_joint", worst, 1e-8, "5 points, max |difference|");
}

CheckResult sampler_covariance(std::size_t draws, std::uint64_t seed) {
  const gp::Kernel k;
  const std::vector<double> points = {0.1, 0.25, 0.5, 0.9};
  constexpr std::size_t kN = 4;
  std::vector<double> sum(kN * kN, 0.0);
  for (std::size_t t = 0; t < draws; ++t) {
    gp::GpSampleFunction f(k, 1, derive_seed(seed, StreamId::TrainFunction, t));
    std::array<double, kN> y{};
    for (std::size_t i = 0; i < kN; ++i) y[i] = f.sample_next(std::span(points).subspan(i, 1));
    for (std::size_t i = 0; i < kN; ++i) {
      for (std::size_t j = 0; j < kN; ++j) sum[i * kN + j] += y[i] * y[j];
    }
  }
  const auto g = oracle::gram(k, 1, points, k.noise_variance);
  const double n = static_cast<double>(draws);
  double worst = 0.0;
  for (std::size_t i = 0; i < kN; ++i) {
    for (std::size_t j = 0; j < kN; ++j) {
      const double emp = sum[i * kN + j] / n;
      const double se = std::sqrt((g[i * kN + i] * g[j * kN + j] + g[i * kN + j] * g[i * kN + j]) / n);
      worst = std::max(worst, std::abs(emp - g[i * kN + j]) / se);
    }
  }
  return make("sampler_covariance", worst, 5.0,
              std::to_string(draws) + " draws, max deviation in standard errors");
}

CheckResult ei_monte_carlo(std::size_t triples, std::size_t draws, std::uint64_t seed) {
  RandomStream rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < triples; ++i) {
    const double mu = rng.uniform(-2.0, 2.0);
    const double s = rng.uniform(0.1, 2.0);
    // best within two standard deviations of mu, so improvements are not vanishingly rare
    const double best = mu + s * rng.uniform(-2.0, 2.0);
    const double ei = gp::expected_improvement(gp::Posterior<double>{mu, s * s}, best);
    const auto mc = oracle::mc_expected_improvement(mu, s, best, draws,
                                                    derive_seed(seed, StreamId::Validation, i));
    worst = std::max(worst, std::abs(ei - mc.mean) / mc.stderr_);
  }
  return make("ei_monte_carlo", worst, 3.0,
              std::to_string(triples) + " triples, max deviation in standard errors");
}

CheckResult benchmark_minimum(BenchmarkId id) {
  const AnalyticBenchmark& b = benchmark(id);
  const PerturbedInstance inst = PerturbedInstance::identity(id);
  const std::size_t d = b.dim();
  const std::size_t per_dim = d <= 2 ? 201 : d == 3 ? 41 : 9;
  const std::vector<double> lo(d, 0.0);
  const std::vector<double> hi(d, 1.0);
  const auto m = oracle::grid_minimize([&](std::span<const double> u) { return inst(u); }, lo, hi,
                                       per_dim, 16);
  const double tol = id == BenchmarkId::Branin           ? 1e-5
                     : id == BenchmarkId::GoldsteinPrice ? 1e-9
                                                         : 1e-4;
  std::ostringstream detail;
  detail.precision(10);
  detail << "oracle minimum " << m.value << ", reference " << b.known_minimum;
  return make("benchmark_minimum_" + b.name, std::abs(m.value - b.known_minimum), tol, detail.str());
}

CheckResult repeller_ballistic() {
  RepellerConfig c;
  c.velocity = {1.5, 2.0};
  const std::vector<double> params = {3.0, -40.0, 0.0, -7.0, -80.0, 0.0};
  std::vector<std::array<double, 2>> path;
  simulate_repellers(params, c, &path);
  double worst = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double x = c.start[0] + c.velocity[0] * n * c.dt;
    const double y = c.start[1] + c.velocity[1] * n * c.dt +
                     c.gravity * c.dt * c.dt * n * (n - 1.0) / 2.0;
    worst = std::max({worst, std::abs(path[i][0] - x), std::abs(path[i][1] - y)});
  }
  return make("repeller_ballistic", worst, 1e-9, "max position error against the parabola");
}

CheckResult repeller_mirror(std::uint64_t seed) {
  const RepellerConfig c;
  const RepellerConfig m = mirror_config(c);
  const SearchSpace space = repeller_space(c);
  RandomStream rng(seed);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> u(space.dim());
    for (double& v : u) v = rng.uniform();
    const auto p = space.from_unit(u);
    const double a = simulate_repellers(p, c);
    const double b = simulate_repellers(mirror_repeller_params(p), m);
    worst = std::max(worst, oracle::relative_error(a, b, 1e-12));
  }
  return make("repeller_mirror", worst, 1e-12, "20 random configurations");
}

CheckResult parallel_protocol(std::uint64_t seed) {
  const LstmPolicy policy = LstmPolicy::initialized(SearchSpace::unit(2), 8, seed);
  const gp::Kernel k;
  const FrozenGpSample f(k, 2, seed);
  const Objective obj = [&](std::span<const double> x) { return f(x); };
  const Trajectory seq = propose_eval(policy, SearchSpace::unit(2), 12, obj);
  const Trajectory par = run_parallel(policy, SearchSpace::unit(2), obj, 1, 12, {0.0}, seed);
  double mismatches = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq.evaluations[t].x != par.evaluations[t].x || seq.evaluations[t].y != par.evaluations[t].y) {
      mismatches += 1.0;
    }
  }
  for (std::size_t n : {1u, 3u, 5u}) {
    const Trajectory p = run_parallel(policy, SearchSpace::unit(2), obj, n, 12, {0.5}, seed);
    const auto zeros = static_cast<std::size_t>(std::count(p.o_flags.begin(), p.o_flags.end(), 0));
    if (zeros != n || p.size() != 12) mismatches += 1.0;
  }
  return make("parallel_protocol", mismatches, 0.0,
              "N=1 equivalence and o-flag counts for N in {1, 3, 5}");
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(lstm_step_gradient(seed));
  out.push_back(posterior_gradient(seed));
  for (LossKind l : {LossKind::Final, LossKind::Sum, LossKind::EI, LossKind::OI}) {
    out.push_back(rollout_gradient_check(l, seed));
  }
  out.push_back(incremental_vs_joint(seed));
  out.push_back(sampler_covariance(20000, seed));
  out.push_back(ei_monte_carlo(20, 1000000, seed));
  for (BenchmarkId id : {BenchmarkId::Branin, BenchmarkId::GoldsteinPrice, BenchmarkId::Hartmann3,
                         BenchmarkId::Hartmann6}) {
    out.push_back(benchmark_minimum(id));
  }
  out.push_back(repeller_ballistic());
  out.push_back(repeller_mirror(seed));
  out.push_back(parallel_protocol(seed));
  return out;
}

}  // namespace rnnopt::checks
