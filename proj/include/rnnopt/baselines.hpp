// SPDX-License-Identifier: Apache-2.0
//
// Reference optimizers: uniform random search and sequential GP-EI with
// fixed kernel hyperparameters.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rnnopt/gp.hpp"
#include "rnnopt/random.hpp"
#include "rnnopt/space.hpp"

namespace rnnopt {

/// Point `index` (0-based) of the Halton sequence in d dimensions (d <= 16),
/// using bases 2, 3, 5, ...
std::vector<double> halton(std::size_t index, std::size_t dim);

class RandomSearchOptimizer final : public Optimizer {
 public:
  RandomSearchOptimizer(SearchSpace space, std::uint64_t seed);
  std::vector<double> propose() override;
  void observe(std::span<const double>, double) override {}

 private:
  SearchSpace space_;
  RandomStream rng_;
};

Trajectory random_search(const SearchSpace& space, const Objective& objective, std::size_t budget,
                         std::uint64_t seed);

struct AcquisitionOptions {
  std::size_t candidates = 2048;
  std::size_t starts = 4;
  std::size_t sweeps = 20;
  std::size_t golden_iterations = 12;
};

struct AcquisitionResult {
  std::vector<double> x;  // unit coordinates
  double ei = 0.0;
  double best_candidate_ei = 0.0;  // max over the raw candidate set
};

/// Maximizes EI(x; best) over the unit box: `candidates` uniform draws, then
/// coordinate-wise golden-section sweeps from the best `starts` of them. Each
/// sweep searches a window around the current point whose radius halves every
/// sweep; moves are accepted only if they improve.
AcquisitionResult maximize_ei(const gp::GpRegression& model, double best, RandomStream& rng,
                              const AcquisitionOptions& options = {});

struct GpEiOptions {
  gp::Kernel kernel;
  std::size_t n_init = 2;
  /// Fit the GP to standardized observations (mean 0, unit variance). Leave
  /// off when the kernel is the objective's true prior.
  bool standardize = false;
  AcquisitionOptions acquisition;
};

/// Sequential GP-EI. Initial points are a Halton sequence with a random
/// Cranley-Patterson shift; the GP lives on the unit cube of `space`.
class GpEiOptimizer final : public Optimizer {
 public:
  GpEiOptimizer(SearchSpace space, GpEiOptions options, std::uint64_t seed);
  std::vector<double> propose() override;
  void observe(std::span<const double> x, double y) override;

  std::size_t observations() const noexcept { return values_.size(); }

 private:
  SearchSpace space_;
  GpEiOptions options_;
  RandomStream rng_;
  std::vector<double> shift_;
  std::vector<double> queries_;  // unit coordinates, row-major
  std::vector<double> values_;
};

Trajectory gp_ei_optimize(const SearchSpace& space, const Objective& objective, std::size_t budget,
                          const GpEiOptions& options, std::uint64_t seed);

}  // namespace rnnopt
