// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations used to validate the implementation.
// Nothing here shares code with the paths being checked: sampling uses a
// dense joint factorisation, regression uses Gaussian elimination, EI uses
// Monte Carlo and minima come from grid search.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rnnopt/gp.hpp"

namespace rnnopt::oracle {

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences with step h in every coordinate.
std::vector<double> central_difference(const ScalarFn& f, std::span<const double> x,
                                       double h = 1e-5);

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-3);
/// Largest componentwise relative_error.
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-3);

/// Gram matrix K(X, X) + diag(noise), n x n row-major; points are n x dim.
std::vector<double> gram(const gp::Kernel& k, std::size_t dim, std::span<const double> points,
                         double diagonal);

/// Joint draw L z with L the dense Cholesky factor of K + diag(diagonal).
std::vector<double> joint_sample(const gp::Kernel& k, std::size_t dim,
                                 std::span<const double> points, std::span<const double> z,
                                 double diagonal);

/// GP posterior by solving (K + noise I) a = b with partial-pivot Gaussian
/// elimination.
gp::Posterior<double> dense_posterior(const gp::Kernel& k, std::size_t dim,
                                      std::span<const double> data, std::span<const double> values,
                                      std::span<const double> x);

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// E[max(best - Y, 0)], Y ~ N(mu, s^2), by plain Monte Carlo.
McEstimate mc_expected_improvement(double mu, double s, double best, std::size_t draws,
                                   std::uint64_t seed);

/// Minimum of f over a box: evaluate a grid with `per_dim` points per
/// dimension, then polish the best `starts` grid points by compass search
/// down to step `tol` (relative to the box width).
struct Minimum {
  std::vector<double> x;
  double value = 0.0;
};
Minimum grid_minimize(const ScalarFn& f, std::span<const double> lower,
                      std::span<const double> upper, std::size_t per_dim, std::size_t starts = 8,
                      double tol = 1e-12);

}  // namespace rnnopt::oracle
