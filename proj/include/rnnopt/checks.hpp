// SPDX-License-Identifier: Apache-2.0
//
// Oracle and invariant checks, runnable from the CLI (`rnnopt check`) and
// reused by the acceptance suite.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rnnopt/benchmarks.hpp"
#include "rnnopt/training.hpp"

namespace rnnopt::checks {

struct CheckResult {
  std::string name;
  double value = 0.0;      // measured discrepancy
  double threshold = 0.0;  // pass iff value <= threshold
  bool passed = false;
  std::string detail;
};

/// Taped vs central-difference gradient of one LSTM step (H=8, d=2) with
/// respect to all parameters. Max relative error, threshold 1e-4.
CheckResult lstm_step_gradient(std::uint64_t seed);
/// d mean/dx, d variance/dx and d EI/dx for GP regression on 6 random 2d
/// points. Threshold 1e-4.
CheckResult posterior_gradient(std::uint64_t seed);
/// Full-history rollout loss (T=3, H=4, d=1) against central differences
/// over all parameters. Threshold 1e-4.
CheckResult rollout_gradient_check(LossKind loss, std::uint64_t seed);

/// Incremental sampling of 5 fixed points vs a joint dense factorisation with
/// the same normals. Max absolute difference, threshold 1e-8.
CheckResult incremental_vs_joint(std::uint64_t seed);
/// Empirical covariance of `draws` incremental samples at 4 fixed points
/// against the Gram matrix, in Monte-Carlo standard errors. Threshold 5.
CheckResult sampler_covariance(std::size_t draws, std::uint64_t seed);
/// Analytic EI vs Monte Carlo on `triples` random (mu, s, best), in MC
/// standard errors. Threshold 3.
CheckResult ei_monte_carlo(std::size_t triples, std::size_t draws, std::uint64_t seed);

/// Grid + compass-search minimum of the identity instance against the
/// published value (tolerance per benchmark: Branin 1e-5, Goldstein-Price
/// 1e-9, Hartmann3 1e-4, Hartmann6 1e-4).
CheckResult benchmark_minimum(BenchmarkId id);

/// Zero-strength repellers follow the closed-form discrete parabola (1e-9).
CheckResult repeller_ballistic();
/// Mirrored field and repellers give the same loss (1e-12 relative).
CheckResult repeller_mirror(std::uint64_t seed);

/// Parallel protocol on an untrained policy: N=1, eta=0 reproduces the
/// sequential trajectory bitwise, and o = 0 exactly N times.
CheckResult parallel_protocol(std::uint64_t seed);

/// Every check above with default seeds.
std::vector<CheckResult> run_all(std::uint64_t seed);

}  // namespace rnnopt::checks
