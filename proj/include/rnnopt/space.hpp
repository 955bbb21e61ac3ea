// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rnnopt {

/// Axis-aligned box with optional integer dimensions.
struct SearchSpace {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> integer_mask;

  static SearchSpace unit(std::size_t dim);

  std::size_t dim() const noexcept { return lower.size(); }
  /// Throws std::invalid_argument unless dim >= 1, lower < upper everywhere
  /// and integer dimensions have integral bounds.
  void validate() const;

  std::vector<double> from_unit(std::span<const double> u) const;
  std::vector<double> to_unit(std::span<const double> x) const;
  /// Rounds integer dimensions to the nearest grid value inside the bounds;
  /// continuous dimensions pass through.
  std::vector<double> round(std::span<const double> x) const;
  bool contains(std::span<const double> x) const;
};

using Objective = std::function<double(std::span<const double>)>;

/// Failure inside an objective callback, tagged with where it happened.
class ObjectiveError : public std::runtime_error {
 public:
  /// `step` is 1-based (issue order for parallel runs); `worker` is -1 for
  /// sequential runs.
  ObjectiveError(std::size_t step, int worker, const std::string& what)
      : std::runtime_error(what), step_(step), worker_(worker) {}
  std::size_t step() const noexcept { return step_; }
  int worker() const noexcept { return worker_; }

 private:
  std::size_t step_;
  int worker_;
};

struct Evaluation {
  std::vector<double> x;     // point passed to the objective
  double y = 0.0;
  std::int64_t wall_ns = 0;  // proposal cost, objective time excluded
  // Parallel runs only.
  int worker_id = -1;
  int issue_idx = -1;
  int complete_idx = -1;
  double sim_time = 0.0;
};

/// One optimisation episode, in observation order.
struct Trajectory {
  std::vector<Evaluation> evaluations;
  /// o-flag fed to the policy at each proposal (policy runs only).
  std::vector<int> o_flags;
  bool parallel = false;

  std::size_t size() const noexcept { return evaluations.size(); }
  /// m_t = min_{i <= t} y_i.
  std::vector<double> min_observed() const;
};

/// Ask/tell interface shared by the learned policy and the baselines.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual std::vector<double> propose() = 0;
  virtual void observe(std::span<const double> x, double y) = 0;
};

/// Runs `budget` propose/evaluate/observe rounds. wall_ns covers propose()
/// and observe() but not the objective.
Trajectory run_sequential(Optimizer& optimizer, std::size_t budget, const Objective& objective);

}  // namespace rnnopt
