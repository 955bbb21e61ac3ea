// SPDX-License-Identifier: Apache-2.0
//
// Simulated asynchronous evaluation with N workers.
//
// The first N proposals are made with o = 0 and dummy inputs. Each later
// proposal is triggered by one completion, whose (x, y) is fed back with
// o = 1. Completions are processed in order of simulated finish time, ties
// going to the earlier issue.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <queue>
#include <span>
#include <vector>

#include "rnnopt/autodiff.hpp"
#include "rnnopt/gp.hpp"
#include "rnnopt/policy.hpp"
#include "rnnopt/random.hpp"
#include "rnnopt/space.hpp"

namespace rnnopt {

/// Runtimes ~ Uniform(1 - eta, 1 + eta).
struct RuntimeJitter {
  double eta = 0.0;

  void validate() const;
  double draw(RandomStream& rng) const;
};

class WorkerPool {
 public:
  struct Completion {
    int worker;
    int issue_idx;
    double time;
  };

  explicit WorkerPool(std::size_t workers);

  /// Starts `issue_idx` at time `now` on the lowest-numbered free worker and
  /// returns that worker. Throws std::logic_error when every worker is busy.
  int issue(int issue_idx, double now, double runtime);
  /// Removes and returns the earliest completion.
  Completion complete_next();

  std::size_t workers() const noexcept { return busy_.size(); }
  std::size_t outstanding() const noexcept { return events_.size(); }

 private:
  struct Later {
    bool operator()(const Completion& a, const Completion& b) const noexcept {
      return a.time != b.time ? a.time > b.time : a.issue_idx > b.issue_idx;
    }
  };
  std::vector<bool> busy_;
  std::priority_queue<Completion, std::vector<Completion>, Later> events_;
};

/// One completed query of an unrolled episode.
template <class S>
struct UnrollRecord {
  std::vector<S> x_unit;      // raw policy output
  gp::Draw<S> draw;           // observed value (and GP posterior when available)
  int worker_id = 0;
  int issue_idx = 0;
  int complete_idx = 0;
  double sim_time = 0.0;
  std::int64_t propose_ns = 0;
};

template <class S>
struct Unrolled {
  std::vector<UnrollRecord<S>> records;  // completion order
  std::vector<int> o_flags;              // issue order
};

template <class S>
using UnrollEvaluator = std::function<gp::Draw<S>(std::span<const S> x_unit, int worker, int issue)>;

/// Runs the policy for `horizon` queries with `workers` simulated workers.
/// `params` are the policy parameters as S (tape leaves when S is ad::Var,
/// in which case `tape` must be the owning tape). With workers == 1 and
/// eta == 0 this is exactly the sequential loop.
template <class S>
Unrolled<S> unroll(const LstmPolicy& policy, std::span<const S> params, ad::Tape* tape,
                   std::size_t horizon, std::size_t workers, RuntimeJitter jitter,
                   std::uint64_t runtime_seed, const UnrollEvaluator<S>& evaluate,
                   bool time_proposals = false);

/// Deployment with N simulated workers. Integer dimensions are rounded before
/// evaluation; evaluations are returned in completion order.
Trajectory run_parallel(const LstmPolicy& policy, const SearchSpace& space,
                        const Objective& objective, std::size_t workers, std::size_t budget,
                        RuntimeJitter jitter, std::uint64_t seed);

}  // namespace rnnopt
