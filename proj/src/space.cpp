// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/space.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace rnnopt {

SearchSpace SearchSpace::unit(std::size_t dim) {
  return SearchSpace{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0),
                     std::vector<bool>(dim, false)};
}

void SearchSpace::validate() const {
  if (dim() == 0) {
    throw std::invalid_argument("search space: dimension must be at least 1");
  }
  if (upper.size() != dim() || integer_mask.size() != dim()) {
    throw std::invalid_argument("search space: bounds and integer mask differ in length");
  }
  for (std::size_t j = 0; j < dim(); ++j) {
    if (!(lower[j] < upper[j]) || !std::isfinite(lower[j]) || !std::isfinite(upper[j])) {
      throw std::invalid_argument("search space: need lower < upper in dimension " +
                                  std::to_string(j));
    }
    if (integer_mask[j] && (lower[j] != std::floor(lower[j]) || upper[j] != std::floor(upper[j]))) {
      throw std::invalid_argument("search space: integer dimension " + std::to_string(j) +
                                  " has non-integral bounds");
    }
  }
}

std::vector<double> SearchSpace::from_unit(std::span<const double> u) const {
  std::vector<double> x(dim());
  for (std::size_t j = 0; j < dim(); ++j) {
    x[j] = lower[j] + (upper[j] - lower[j]) * u[j];
  }
  return x;
}

std::vector<double> SearchSpace::to_unit(std::span<const double> x) const {
  std::vector<double> u(dim());
  for (std::size_t j = 0; j < dim(); ++j) {
    u[j] = (x[j] - lower[j]) / (upper[j] - lower[j]);
  }
  return u;
}

std::vector<double> SearchSpace::round(std::span<const double> x) const {
  std::vector<double> r(x.begin(), x.end());
  for (std::size_t j = 0; j < dim(); ++j) {
    if (integer_mask[j]) {
      r[j] = std::clamp(std::round(r[j]), lower[j], upper[j]);
    }
  }
  return r;
}

bool SearchSpace::contains(std::span<const double> x) const {
  if (x.size() != dim()) return false;
  for (std::size_t j = 0; j < dim(); ++j) {
    if (!(x[j] >= lower[j] && x[j] <= upper[j])) return false;
  }
  return true;
}

std::vector<double> Trajectory::min_observed() const {
  std::vector<double> m;
  m.reserve(evaluations.size());
  for (const Evaluation& e : evaluations) {
    m.push_back(m.empty() ? e.y : std::min(m.back(), e.y));
  }
  return m;
}

Trajectory run_sequential(Optimizer& optimizer, std::size_t budget, const Objective& objective) {
  using Clock = std::chrono::steady_clock;
  Trajectory traj;
  traj.evaluations.reserve(budget);
  for (std::size_t t = 0; t < budget; ++t) {
    const auto t0 = Clock::now();
    std::vector<double> x = optimizer.propose();
    const auto t1 = Clock::now();
    double y = 0.0;
    try {
      y = objective(x);
    } catch (const std::exception& e) {
      throw ObjectiveError(t + 1, -1, "objective failed at step " + std::to_string(t + 1) + ": " +
                                      e.what());
    }
    const auto t2 = Clock::now();
    optimizer.observe(x, y);
    const auto t3 = Clock::now();
    Evaluation ev;
    ev.x = std::move(x);
    ev.y = y;
    ev.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>((t1 - t0) + (t3 - t2)).count();
    traj.evaluations.push_back(std::move(ev));
  }
  return traj;
}

}  // namespace rnnopt
