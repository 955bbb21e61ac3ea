// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rnnopt/baselines.hpp"
#include "rnnopt/benchmarks.hpp"
#include "rnnopt/harness.hpp"
#include "rnnopt/random.hpp"

using namespace rnnopt;

namespace {

double quadratic(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += (v - 0.3) * (v - 0.3);
  return s;
}

}  // namespace

TEST_CASE("halton points") {
  CHECK(halton(0, 2) == std::vector<double>{0.5, 1.0 / 3.0});
  CHECK(halton(1, 2) == std::vector<double>{0.25, 2.0 / 3.0});
  const auto p = halton(2, 3);
  CHECK(p[0] == 0.75);
  CHECK(p[1] == doctest::Approx(1.0 / 9.0));
  CHECK(p[2] == doctest::Approx(3.0 / 5.0));
  CHECK_THROWS_AS(halton(0, 17), std::invalid_argument);
}

TEST_CASE("random search is reproducible and stays in the box") {
  SearchSpace box;
  box.lower = {-2.0, 5.0};
  box.upper = {3.0, 6.0};
  box.integer_mask = {false, false};
  const auto a = random_search(box, quadratic, 1, 9);
  const auto b = random_search(box, quadratic, 1, 9);
  REQUIRE(a.size() == 1);
  CHECK(a.evaluations[0].x == b.evaluations[0].x);
  const auto t = random_search(box, quadratic, 200, 3);
  for (const auto& e : t.evaluations) CHECK(box.contains(e.x));
  const auto m = t.min_observed();
  for (std::size_t i = 1; i < m.size(); ++i) CHECK(m[i] <= m[i - 1]);
  CHECK_THROWS_AS(random_search(box, quadratic, 0, 3), std::invalid_argument);
}

TEST_CASE("random search is uniform on the unit box") {
  const std::size_t n = 100000;
  RandomSearchOptimizer opt(SearchSpace::unit(3), 5);
  std::vector<double> sum(3, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = opt.propose();
    for (std::size_t j = 0; j < 3; ++j) sum[j] += x[j];
  }
  const double stderr_ = std::sqrt(1.0 / 12.0 / static_cast<double>(n));
  for (double s : sum) CHECK(std::abs(s / static_cast<double>(n) - 0.5) <= 3.0 * stderr_);
}

TEST_CASE("random search on integer dimensions covers the grid uniformly") {
  SearchSpace box;
  box.lower = {0.0};
  box.upper = {4.0};
  box.integer_mask = {true};
  RandomSearchOptimizer opt(box, 1);
  std::vector<int> counts(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double v = opt.propose()[0];
    REQUIRE(v == std::round(v));
    counts[static_cast<std::size_t>(v)]++;
  }
  // Binomial(n, 1/5) counts within 4 standard deviations.
  const double sd = std::sqrt(n * 0.2 * 0.8);
  for (int c : counts) CHECK(std::abs(c - n * 0.2) <= 4.0 * sd);
}

TEST_CASE("acquisition maximum dominates the candidate set") {
  const gp::Kernel k;
  RandomStream data(4);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> q;
    std::vector<double> y;
    for (int i = 0; i < 8; ++i) {
      q.push_back(data.uniform());
      q.push_back(data.uniform());
      y.push_back(data.normal());
    }
    const double best = *std::min_element(y.begin(), y.end());
    const gp::GpRegression model(k, 2, q, y);
    RandomStream rng(static_cast<std::uint64_t>(trial));
    const AcquisitionResult r = maximize_ei(model, best, rng);
    CHECK(r.ei >= r.best_candidate_ei);
    CHECK(r.ei == gp::expected_improvement(model.at(r.x), best));
    for (double v : r.x) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("EI vanishes at the observed best point") {
  const gp::Kernel k{0.3, 1.0, 0.0};
  const std::vector<double> q = {0.1, 0.4, 0.8};
  const std::vector<double> y = {0.5, -0.7, 0.2};
  const gp::GpRegression model(k, 1, q, y);
  const std::vector<double> at_best = {0.4};
  CHECK(gp::expected_improvement(model.at(at_best), -0.7) == 0.0);
}

TEST_CASE("GP-EI argument checks and box containment") {
  SearchSpace box;
  box.lower = {-5.0, 0.0};
  box.upper = {10.0, 15.0};
  box.integer_mask = {false, true};
  GpEiOptions o;
  CHECK_THROWS_AS(gp_ei_optimize(box, quadratic, 1, o, 1), std::invalid_argument);
  o.n_init = 0;
  CHECK_THROWS_AS(gp_ei_optimize(box, quadratic, 5, o, 1), std::invalid_argument);
  o.n_init = 3;
  o.standardize = true;
  const auto bench = PerturbedInstance::identity(BenchmarkId::Branin);
  const Objective f = [&](std::span<const double> x) {
    return bench(box.to_unit(x));
  };
  const auto t = gp_ei_optimize(box, f, 15, o, 2);
  REQUIRE(t.size() == 15);
  for (const auto& e : t.evaluations) {
    CHECK(box.contains(e.x));
    CHECK(e.x[1] == std::round(e.x[1]));
  }
  // The first n_init points are the shifted Halton design, all distinct.
  CHECK(t.evaluations[0].x != t.evaluations[1].x);
  CHECK(t.evaluations[1].x != t.evaluations[2].x);
}

TEST_CASE("GP-EI is reproducible") {
  GpEiOptions o;
  const auto a = gp_ei_optimize(SearchSpace::unit(2), quadratic, 10, o, 8);
  const auto b = gp_ei_optimize(SearchSpace::unit(2), quadratic, 10, o, 8);
  for (std::size_t i = 0; i < 10; ++i) CHECK(a.evaluations[i].x == b.evaluations[i].x);
}

TEST_CASE("GP-EI beats random search on matched-kernel GP samples") {
  const gp::Kernel k;
  GpEiOptions o;
  o.kernel = k;
  double gp_sum = 0.0;
  double rs_sum = 0.0;
  const std::size_t n = 100;
  for (std::size_t i = 0; i < n; ++i) {
    const FrozenGpSample f(k, 1, derive_seed(11, StreamId::Objective, i));
    const Objective obj = [&](std::span<const double> x) { return f(x); };
    const std::uint64_t seed = derive_seed(11, StreamId::Optimizer, i);
    gp_sum += gp_ei_optimize(SearchSpace::unit(1), obj, 30, o, seed).min_observed().back();
    rs_sum += random_search(SearchSpace::unit(1), obj, 30, seed).min_observed().back();
  }
  MESSAGE("mean m_30: GP-EI ", gp_sum / n, ", random ", rs_sum / n);
  CHECK(gp_sum < rs_sum);
}

TEST_CASE("GP-EI proposal cost grows superlinearly with the step") {
  OptimizerSpec spec;
  spec.name = "gp_ei";
  spec.kind = OptimizerKind::GpEi;
  ObjectiveFamily fam = ObjectiveFamily::parse("gp", 1);
  const ObjectiveInstance inst = make_instance(fam, 3);
  const auto rows = time_proposals(spec, inst, 100, 3, 3);
  REQUIRE(rows.size() == 100);
  // Least-squares slope of log(time) against log(t) over t = 10..100.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (const TimingRow& r : rows) {
    if (r.step < 10) continue;
    const double lx = std::log(static_cast<double>(r.step));
    const double ly = std::log(static_cast<double>(std::max<std::int64_t>(r.median_ns, 1)));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  MESSAGE("GP-EI log-log slope ", slope);
  CHECK(slope > 1.0);
}
