// SPDX-License-Identifier: Apache-2.0
//
// Test objectives: analytic benchmarks under random input perturbations, the
// repeller control problem, tabular (precomputed grid) objectives and frozen
// GP samples for held-out evaluation.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rnnopt/gp.hpp"
#include "rnnopt/space.hpp"

namespace rnnopt {

// --- analytic benchmarks -------------------------------------------------------

enum class BenchmarkId { Branin, GoldsteinPrice, Hartmann3, Hartmann6 };

struct AnalyticBenchmark {
  BenchmarkId id;
  std::string name;
  std::vector<double> lower;  // native domain
  std::vector<double> upper;
  double known_minimum;  // published global minimum value
  double (*evaluate)(std::span<const double> native);

  std::size_t dim() const noexcept { return lower.size(); }
};

const AnalyticBenchmark& benchmark(BenchmarkId id);
BenchmarkId parse_benchmark(const std::string& name);

double branin(std::span<const double> x);
double goldstein_price(std::span<const double> x);
double hartmann3(std::span<const double> x);
double hartmann6(std::span<const double> x);

/// A randomly perturbed view of a benchmark on the unit cube. A unit point u
/// is permuted (v_i = u_{perm_i}), flipped (v_i -> 1 - v_i where flip_i),
/// then mapped to the native box as
///   z_i = lo_i + (hi_i - lo_i) * (scale_i * (v_i - 0.5) + 0.5 + translation_i).
struct PerturbedInstance {
  BenchmarkId base = BenchmarkId::Branin;
  std::vector<double> translation;  // in (-0.1, 0.1), fraction of the domain width
  std::vector<double> scale;        // in (0.9, 1.1)
  std::vector<bool> flip;
  std::vector<std::size_t> permutation;

  static PerturbedInstance identity(BenchmarkId id);
  static PerturbedInstance random(BenchmarkId id, std::uint64_t seed);

  std::size_t dim() const noexcept { return translation.size(); }
  void validate() const;
  std::vector<double> to_native(std::span<const double> u) const;
  double operator()(std::span<const double> u) const;
};

double eval_benchmark(const PerturbedInstance& instance, std::span<const double> u);

// --- repeller control ----------------------------------------------------------

struct RewardBump {
  double cx;
  double cy;
  double sigma;
  double weight;
};

/// A particle starts at `start` with velocity `velocity` and falls under
/// gravity. Each repeller at r with strength s adds the acceleration
/// s (p - r) / max(|p - r|^2, floor^2). Explicit Euler with step dt:
///   p_{n+1} = p_n + dt v_n,   v_{n+1} = v_n + dt a(p_n).
/// The loss is -sum_{n=1..steps} discount^(n-1) R(p_n), with R a sum of
/// Gaussian bumps.
struct RepellerConfig {
  std::size_t repellers = 2;
  double gravity = -9.8;
  double dt = 0.05;
  std::size_t steps = 100;
  double discount = 0.99;
  double floor = 3.0;
  std::array<double, 2> start = {0.0, 0.0};
  std::array<double, 2> velocity = {0.0, 0.0};
  // Off the free-fall line, so the particle has to be steered to score.
  std::vector<RewardBump> reward = {{18.0, -35.0, 10.0, 1.0},
                                    {-18.0, -70.0, 12.0, 1.5},
                                    {15.0, -105.0, 12.0, 0.8}};
  // Parameter box per repeller: x, y, strength.
  std::array<double, 2> x_range = {-15.0, 15.0};
  std::array<double, 2> y_range = {-120.0, 0.0};
  std::array<double, 2> strength_range = {0.0, 50.0};

  std::size_t dim() const noexcept { return 3 * repellers; }
};

/// Native search box for the repeller parameters (x, y, strength per repeller).
SearchSpace repeller_space(const RepellerConfig& config);

/// Loss for repeller parameters (native units), optionally recording the
/// particle positions p_1..p_steps.
double simulate_repellers(std::span<const double> params, const RepellerConfig& config,
                          std::vector<std::array<double, 2>>* path = nullptr);

/// Reflection x -> -x of the whole setup (start, velocity, reward field);
/// mirror_repeller_params reflects the repeller locations to match.
RepellerConfig mirror_config(const RepellerConfig& config);
std::vector<double> mirror_repeller_params(std::span<const double> params);

// --- tabular objectives --------------------------------------------------------

/// Piecewise-constant objective on a complete factorial grid. Lookups round
/// each coordinate to the nearest grid value, ties going to the smaller one.
class TabularObjective {
 public:
  /// Parses comma-separated text: a header naming the parameters and the
  /// objective, then one row per grid point. `source` names the input in
  /// error messages.
  static TabularObjective parse(std::istream& in, const std::string& source = "<input>");

  std::size_t dim() const noexcept { return grid_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<double>& grid(std::size_t j) const { return grid_.at(j); }
  SearchSpace space() const;

  /// Index of the grid value nearest to v in dimension j.
  std::size_t nearest(std::size_t j, double v) const;
  double operator()(std::span<const double> x) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> grid_;
  std::vector<double> values_;  // row-major, last dimension fastest
};

TabularObjective load_tabular(const std::filesystem::path& path);
double eval_tabular(const TabularObjective& objective, std::span<const double> x);

// --- held-out GP samples -------------------------------------------------------

/// A GP prior draw fixed at anchor points and interpolated by the posterior
/// mean, so the function does not depend on the order it is queried in.
/// Anchors: a 256-point grid in 1d, 24 x 24 in 2d, 512 Halton points beyond.
class FrozenGpSample {
 public:
  FrozenGpSample(gp::Kernel kernel, std::size_t dim, std::uint64_t seed);

  double operator()(std::span<const double> u) const { return model_->mean(u); }
  std::size_t dim() const noexcept { return model_->dim(); }
  /// Smallest anchor value, a close upper bound on the function minimum.
  double anchor_minimum() const noexcept { return anchor_min_; }

 private:
  std::shared_ptr<const gp::GpRegression> model_;
  double anchor_min_ = 0.0;
};

std::vector<double> frozen_gp_anchors(std::size_t dim);

}  // namespace rnnopt
