// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <vector>

#include "rnnopt/benchmarks.hpp"
#include "rnnopt/checks.hpp"
#include "rnnopt/oracles.hpp"
#include "rnnopt/random.hpp"

using namespace rnnopt;

namespace {

TabularObjective parse_text(const std::string& text) {
  std::istringstream in(text);
  return TabularObjective::parse(in, "grid.csv");
}

std::string parse_error(const std::string& text) {
  try {
    parse_text(text);
  } catch (const std::runtime_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("closed forms at known minimisers") {
  const std::vector<double> b = {std::numbers::pi, 2.275};
  CHECK(branin(b) == doctest::Approx(0.397887).epsilon(1e-5));
  const std::vector<double> g = {0.0, -1.0};
  CHECK(std::abs(goldstein_price(g) - 3.0) <= 1e-9);
  const std::vector<double> h3 = {0.114614, 0.555649, 0.852547};
  CHECK(hartmann3(h3) == doctest::Approx(-3.86278).epsilon(1e-5));
  const std::vector<double> h6 = {0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573};
  CHECK(hartmann6(h6) == doctest::Approx(-3.32237).epsilon(1e-5));
}

TEST_CASE("benchmark table") {
  CHECK(benchmark(BenchmarkId::Branin).dim() == 2);
  CHECK(benchmark(BenchmarkId::GoldsteinPrice).dim() == 2);
  CHECK(benchmark(BenchmarkId::Hartmann3).dim() == 3);
  CHECK(benchmark(BenchmarkId::Hartmann6).dim() == 6);
  for (BenchmarkId id : {BenchmarkId::Branin, BenchmarkId::GoldsteinPrice, BenchmarkId::Hartmann3,
                         BenchmarkId::Hartmann6}) {
    CHECK(parse_benchmark(benchmark(id).name) == id);
  }
  CHECK_THROWS_AS(parse_benchmark("rosenbrock"), std::invalid_argument);
}

TEST_CASE("identity-instance minima match the grid oracle") {
  for (BenchmarkId id : {BenchmarkId::Branin, BenchmarkId::GoldsteinPrice, BenchmarkId::Hartmann3,
                         BenchmarkId::Hartmann6}) {
    const auto r = checks::benchmark_minimum(id);
    CHECK_MESSAGE(r.passed, r.name, " ", r.detail);
  }
}

TEST_CASE("identity instance maps the unit box onto the native box") {
  const auto inst = PerturbedInstance::identity(BenchmarkId::Branin);
  const std::vector<double> lo = {0.0, 0.0};
  const std::vector<double> hi = {1.0, 1.0};
  CHECK(inst.to_native(lo) == benchmark(BenchmarkId::Branin).lower);
  CHECK(inst.to_native(hi) == benchmark(BenchmarkId::Branin).upper);
  const std::vector<double> u = {0.3, 0.8};
  CHECK(eval_benchmark(inst, u) == branin(inst.to_native(u)));
}

TEST_CASE("flip and permutation") {
  PerturbedInstance p = PerturbedInstance::identity(BenchmarkId::Hartmann3);
  p.flip = {true, false, false};
  p.permutation = {2, 0, 1};
  p.validate();
  const std::vector<double> u = {0.1, 0.2, 0.7};
  // v = (u2, u0, u1) then v0 -> 1 - v0.
  const std::vector<double> expect = {1.0 - 0.7, 0.1, 0.2};
  const auto z = p.to_native(u);
  for (std::size_t i = 0; i < 3; ++i) CHECK(z[i] == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("random perturbations stay in their ranges") {
  for (BenchmarkId id : {BenchmarkId::Branin, BenchmarkId::Hartmann6}) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto p = PerturbedInstance::random(id, seed);
      CHECK_NOTHROW(p.validate());
      for (double t : p.translation) {
        CHECK(t > -0.1);
        CHECK(t < 0.1);
      }
      for (double s : p.scale) {
        CHECK(s > 0.9);
        CHECK(s < 1.1);
      }
      std::vector<std::size_t> perm = p.permutation;
      std::sort(perm.begin(), perm.end());
      std::vector<std::size_t> iota(p.dim());
      std::iota(iota.begin(), iota.end(), 0);
      CHECK(perm == iota);
    }
  }
  PerturbedInstance bad = PerturbedInstance::identity(BenchmarkId::Branin);
  bad.translation[0] = 0.2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = PerturbedInstance::identity(BenchmarkId::Branin);
  bad.scale[1] = 1.2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = PerturbedInstance::identity(BenchmarkId::Branin);
  bad.permutation = {0, 0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  const auto ok = PerturbedInstance::identity(BenchmarkId::Branin);
  CHECK_THROWS_AS(ok(std::vector<double>{0.5}), std::invalid_argument);
}

TEST_CASE("perturbed benchmarks are finite and deterministic") {
  RandomStream rng(3);
  for (BenchmarkId id : {BenchmarkId::Branin, BenchmarkId::GoldsteinPrice, BenchmarkId::Hartmann3,
                         BenchmarkId::Hartmann6}) {
    const auto p = PerturbedInstance::random(id, 17);
    std::vector<double> u(p.dim());
    std::size_t bad = 0;
    for (int i = 0; i < 250000; ++i) {
      for (double& v : u) v = rng.uniform();
      const double a = p(u);
      if (!std::isfinite(a) || a != p(u)) ++bad;
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("zero-strength repellers give the ballistic parabola") {
  const auto r = checks::repeller_ballistic();
  CHECK_MESSAGE(r.passed, r.value);
  // Direct check of the first few Euler positions with no repeller force.
  RepellerConfig c;
  c.velocity = {1.0, 2.0};
  const std::vector<double> params = {3.0, -10.0, 0.0, -3.0, -50.0, 0.0};
  std::vector<std::array<double, 2>> path;
  simulate_repellers(params, c, &path);
  REQUIRE(path.size() == c.steps);
  for (std::size_t n = 1; n <= c.steps; ++n) {
    const double t = static_cast<double>(n) * c.dt;
    // p_n = p_0 + n dt v_0 + dt^2 g n(n-1)/2 under explicit Euler.
    const double x = c.start[0] + t * c.velocity[0];
    const double y = c.start[1] + t * c.velocity[1] +
                     c.dt * c.dt * c.gravity * static_cast<double>(n * (n - 1)) / 2.0;
    CHECK(std::abs(path[n - 1][0] - x) <= 1e-9);
    CHECK(std::abs(path[n - 1][1] - y) <= 1e-9);
  }
}

TEST_CASE("mirrored setup gives the same loss") {
  const auto r = checks::repeller_mirror(0);
  CHECK_MESSAGE(r.passed, r.value);
}

TEST_CASE("repeller losses respect the reward bound and the random-search reference") {
  const RepellerConfig c;
  const SearchSpace box = repeller_space(c);
  double total_weight = 0.0;
  for (const auto& b : c.reward) total_weight += b.weight;
  const double floor_loss =
      -total_weight * (1.0 - std::pow(c.discount, static_cast<double>(c.steps))) / (1.0 - c.discount);
  RandomStream rng(5);
  double reference = 0.0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> u(box.dim());
    for (double& v : u) v = rng.uniform();
    const double loss = simulate_repellers(box.from_unit(u), c);
    CHECK(loss <= 0.0);
    CHECK(loss >= floor_loss);
    reference = std::min(reference, loss);
  }
  MESSAGE("random-search reference minimum ", reference, ", analytic floor ", floor_loss);
  CHECK(reference < 0.0);
  CHECK(reference >= floor_loss);
  CHECK_THROWS_AS(simulate_repellers(std::vector<double>(5, 0.0), c), std::invalid_argument);
}

TEST_CASE("repeller loss is locally Lipschitz") {
  const RepellerConfig c;
  const SearchSpace box = repeller_space(c);
  RandomStream rng(6);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> u(box.dim());
    for (double& v : u) v = 0.05 + 0.9 * rng.uniform();
    const std::vector<double> p = box.from_unit(u);
    const double base = simulate_repellers(p, c);
    for (std::size_t j = 0; j < p.size(); ++j) {
      std::vector<double> q = p;
      q[j] += 1e-6;
      worst = std::max(worst, std::abs(simulate_repellers(q, c) - base) / 1e-6);
    }
  }
  MESSAGE("largest finite-difference slope ", worst);
  CHECK(std::isfinite(worst));
  CHECK(worst < 1e3);
}

TEST_CASE("tabular lookups round to the nearest grid value") {
  const auto t = parse_text("x,objective\n0.0,5.0\n1.0,7.0\n");
  CHECK(t.dim() == 1);
  CHECK(t(std::vector<double>{0.4}) == 5.0);
  CHECK(t(std::vector<double>{0.0}) == 5.0);
  CHECK(t(std::vector<double>{1.0}) == 7.0);
  CHECK(t(std::vector<double>{0.5}) == 5.0);
  CHECK(t(std::vector<double>{0.51}) == 7.0);
  CHECK(t(std::vector<double>{-3.0}) == 5.0);
  CHECK(t(std::vector<double>{9.0}) == 7.0);
  CHECK(eval_tabular(t, std::vector<double>{0.2}) == 5.0);
}

TEST_CASE("two-dimensional tabular grid in any row order") {
  const auto t = parse_text(
      "lr,depth,loss\n"
      "0.1,4,0.30\n0.01,2,0.50\n0.1,2,0.40\n0.01,4,0.20\n0.001,2,0.90\n0.001,4,0.80\n");
  CHECK(t.names() == std::vector<std::string>{"lr", "depth"});
  CHECK(t.grid(0) == std::vector<double>{0.001, 0.01, 0.1});
  CHECK(t(std::vector<double>{0.012, 3.9}) == 0.20);
  CHECK(t(std::vector<double>{0.09, 2.2}) == 0.40);
  const SearchSpace s = t.space();
  CHECK(s.lower == std::vector<double>{0.001, 2.0});
  CHECK(s.upper == std::vector<double>{0.1, 4.0});
}

TEST_CASE("malformed tabular files report the line") {
  CHECK(parse_error("x,y\n0,1\n1\n").find("grid.csv:3") != std::string::npos);
  CHECK(parse_error("x,y\n0,abc\n").find("grid.csv:2") != std::string::npos);
  CHECK(parse_error("a,b,y\n0,0,1\n0,1,2\n1,0,3\n").find("incomplete") != std::string::npos);
  CHECK(parse_error("x,y\n0,1\n\n0,2\n").find("grid.csv:4") != std::string::npos);
  CHECK(parse_error("x,y\n0,1\n0,2\n").find("duplicate") != std::string::npos);
  CHECK(parse_error("").find("empty") != std::string::npos);
  CHECK(parse_error("x,y\n").find("no data") != std::string::npos);
  CHECK(parse_error("y\n1\n").size() > 0);
  CHECK_THROWS_AS(load_tabular("/nonexistent/grid.csv"), std::runtime_error);
}

TEST_CASE("tabular files load from disk") {
  const auto path = std::filesystem::temp_directory_path() / "rnnopt_test_grid.csv";
  {
    std::ofstream out(path);
    out << "x,objective\n0.0,5.0\n1.0,7.0\n";
  }
  const auto t = load_tabular(path);
  CHECK(t(std::vector<double>{0.7}) == 7.0);
  std::filesystem::remove(path);
}

TEST_CASE("frozen GP samples are deterministic and query-order independent") {
  const gp::Kernel k;
  const FrozenGpSample a(k, 2, 9);
  const FrozenGpSample b(k, 2, 9);
  const FrozenGpSample other(k, 2, 10);
  RandomStream rng(1);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({rng.uniform(), rng.uniform()});
  std::vector<double> forward;
  for (const auto& p : pts) forward.push_back(a(p));
  bool differs = false;
  for (std::size_t i = pts.size(); i-- > 0;) {
    CHECK(b(pts[i]) == forward[i]);
    if (other(pts[i]) != forward[i]) differs = true;
  }
  CHECK(differs);
  // The mean smooths the noisy anchor draws, so the anchor minimum is only
  // matched up to a few noise standard deviations.
  const auto anchors = frozen_gp_anchors(2);
  double lo = 1e300;
  for (std::size_t i = 0; i < anchors.size() / 2; ++i) {
    lo = std::min(lo, a(std::span<const double>(anchors).subspan(2 * i, 2)));
  }
  CHECK(std::abs(lo - a.anchor_minimum()) <= 1e-2);
  CHECK(frozen_gp_anchors(1).size() == 256);
  CHECK(frozen_gp_anchors(6).size() == 512 * 6);
}
