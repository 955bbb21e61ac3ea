// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "rnnopt/checks.hpp"
#include "rnnopt/parallel.hpp"
#include "rnnopt/random.hpp"
#include "rnnopt/training.hpp"

using namespace rnnopt;

namespace {

double wavy(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += std::sin(7.0 * v) + v * v;
  return s;
}

// Plain event list: issue i finishes at issue_time[i] + runtime[i]; each
// completion, taken as the smallest (finish, index) pair, triggers the next
// issue at its finish time.
struct OracleEvent {
  int issue;
  double time;
};

std::vector<OracleEvent> oracle_completions(std::size_t workers, std::size_t budget, double eta,
                                            std::uint64_t runtime_seed) {
  RandomStream rng(runtime_seed);
  std::vector<double> finish;
  std::vector<bool> done;
  auto issue_at = [&](double now) {
    finish.push_back(now + (1.0 - eta + 2.0 * eta * rng.uniform()));
    done.push_back(false);
  };
  for (std::size_t i = 0; i < workers; ++i) issue_at(0.0);
  std::vector<OracleEvent> order;
  while (order.size() < budget) {
    int best = -1;
    for (std::size_t i = 0; i < finish.size(); ++i) {
      if (done[i]) continue;
      if (best < 0 || finish[i] < finish[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    done[static_cast<std::size_t>(best)] = true;
    order.push_back({best, finish[static_cast<std::size_t>(best)]});
    if (finish.size() < budget) issue_at(finish[static_cast<std::size_t>(best)]);
  }
  return order;
}

}  // namespace

TEST_CASE("runtime jitter") {
  CHECK_THROWS_AS(RuntimeJitter{1.0}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(RuntimeJitter{-0.1}.validate(), std::invalid_argument);
  CHECK_NOTHROW(RuntimeJitter{0.0}.validate());
  CHECK_NOTHROW(RuntimeJitter{0.99}.validate());
  RandomStream rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double r = RuntimeJitter{0.9}.draw(rng);
    CHECK(r >= 0.1);
    CHECK(r <= 1.9);
    CHECK(r > 0.0);
  }
  CHECK(RuntimeJitter{0.0}.draw(rng) == 1.0);
}

TEST_CASE("worker pool ordering") {
  WorkerPool pool(2);
  CHECK(pool.issue(0, 0.0, 2.0) == 0);
  CHECK(pool.issue(1, 0.0, 1.0) == 1);
  CHECK_THROWS_AS(pool.issue(2, 0.0, 1.0), std::logic_error);
  auto c = pool.complete_next();
  CHECK(c.issue_idx == 1);
  CHECK(c.worker == 1);
  CHECK(c.time == 1.0);
  // Tie at time 2: the earlier issue completes first.
  CHECK(pool.issue(2, 1.0, 1.0) == 1);
  c = pool.complete_next();
  CHECK(c.issue_idx == 0);
  c = pool.complete_next();
  CHECK(c.issue_idx == 2);
  CHECK(pool.outstanding() == 0);
  CHECK_THROWS_AS(pool.complete_next(), std::logic_error);
  CHECK_THROWS_AS(WorkerPool(0), std::invalid_argument);
  CHECK_THROWS_AS(pool.issue(3, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("one worker without jitter reproduces the sequential run") {
  for (std::uint64_t seed : {1, 2, 3}) {
    SearchSpace box = SearchSpace::unit(2);
    const LstmPolicy p = LstmPolicy::initialized(box, 8, seed);
    const Trajectory seq = propose_eval(p, box, 25, wavy);
    const Trajectory par = run_parallel(p, box, wavy, 1, 25, RuntimeJitter{0.0}, seed);
    REQUIRE(par.size() == 25);
    for (std::size_t i = 0; i < 25; ++i) {
      CHECK(seq.evaluations[i].x == par.evaluations[i].x);
      CHECK(seq.evaluations[i].y == par.evaluations[i].y);
    }
    CHECK(seq.o_flags == par.o_flags);
  }
  CHECK(checks::parallel_protocol(0).passed);
}

TEST_CASE("three workers and three queries issue everything up front") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 1);
  const Trajectory t = run_parallel(p, SearchSpace::unit(1), wavy, 3, 3, RuntimeJitter{0.5}, 1);
  CHECK(t.o_flags == std::vector<int>{0, 0, 0});
  for (const auto& e : t.evaluations) CHECK(e.sim_time > 0.0);
}

TEST_CASE("five workers and five queries never see an observation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(2), 6, seed);
    const Trajectory t = run_parallel(p, SearchSpace::unit(2), wavy, 5, 5, RuntimeJitter{0.5}, seed);
    CHECK(t.o_flags == std::vector<int>(5, 0));
  }
}

TEST_CASE("jittered completions follow the event-queue oracle") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 2);
  const std::uint64_t seed = 42;
  const Trajectory a = run_parallel(p, SearchSpace::unit(1), wavy, 2, 30, RuntimeJitter{0.9}, seed);
  const Trajectory b = run_parallel(p, SearchSpace::unit(1), wavy, 2, 30, RuntimeJitter{0.9}, seed);
  const auto ref = oracle_completions(2, 30, 0.9, derive_seed(seed, StreamId::Runtime));
  REQUIRE(a.size() == 30);
  std::vector<int> issues;
  bool reordered = false;
  for (std::size_t i = 0; i < 30; ++i) {
    const Evaluation& e = a.evaluations[i];
    CHECK(e.issue_idx == ref[i].issue);
    CHECK(e.sim_time == ref[i].time);
    CHECK(e.complete_idx == static_cast<int>(i));
    CHECK(e.x == b.evaluations[i].x);
    CHECK(e.sim_time == b.evaluations[i].sim_time);
    issues.push_back(e.issue_idx);
    if (e.issue_idx != static_cast<int>(i)) reordered = true;
  }
  std::sort(issues.begin(), issues.end());
  std::vector<int> expected(30);
  std::iota(expected.begin(), expected.end(), 0);
  CHECK(issues == expected);
  CHECK(reordered);
}

TEST_CASE("protocol invariants over many configurations") {
  for (std::size_t workers : {1, 2, 3, 5, 8}) {
    for (double eta : {0.0, 0.3, 0.9}) {
      const std::size_t budget = 20;
      const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(2), 4, workers);
      const Trajectory t =
          run_parallel(p, SearchSpace::unit(2), wavy, workers, budget, RuntimeJitter{eta}, 7);
      REQUIRE(t.size() == budget);
      CHECK(std::count(t.o_flags.begin(), t.o_flags.end(), 0) ==
            static_cast<std::ptrdiff_t>(workers));
      CHECK(t.o_flags.size() == budget);
      // Completion times are non-decreasing and each worker runs one query at a time.
      std::vector<double> busy_until(workers, 0.0);
      std::vector<double> issue_time(budget, 0.0);
      // A query issued at completion k starts at that completion's time.
      for (std::size_t k = 0; k + workers < budget; ++k) {
        issue_time[k + workers] = t.evaluations[k].sim_time;
      }
      for (std::size_t i = 0; i < budget; ++i) {
        const Evaluation& e = t.evaluations[i];
        if (i > 0) CHECK(e.sim_time >= t.evaluations[i - 1].sim_time);
        const auto w = static_cast<std::size_t>(e.worker_id);
        REQUIRE(w < workers);
        CHECK(issue_time[static_cast<std::size_t>(e.issue_idx)] >= busy_until[w]);
        busy_until[w] = e.sim_time;
        if (eta == 0.0) CHECK(e.issue_idx == static_cast<int>(i));
      }
    }
  }
}

TEST_CASE("worker count must fit the budget") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 1);
  CHECK_THROWS_AS(run_parallel(p, SearchSpace::unit(1), wavy, 0, 5, RuntimeJitter{}, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_parallel(p, SearchSpace::unit(1), wavy, 6, 5, RuntimeJitter{}, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_parallel(p, SearchSpace::unit(1), wavy, 2, 5, RuntimeJitter{1.0}, 1),
                  std::invalid_argument);
}

TEST_CASE("objective failures report worker and step") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 1);
  int calls = 0;
  const Objective failing = [&](std::span<const double>) -> double {
    if (++calls == 3) throw std::runtime_error("disk full");
    return 0.0;
  };
  try {
    run_parallel(p, SearchSpace::unit(1), failing, 3, 10, RuntimeJitter{0.0}, 1);
    FAIL("expected an ObjectiveError");
  } catch (const ObjectiveError& e) {
    // Without jitter the third completion is issue 3 on worker 2.
    CHECK(e.worker() == 2);
    CHECK(e.step() == 3);
    CHECK(std::string(e.what()).find("disk full") != std::string::npos);
  }
}

TEST_CASE("integer dimensions are rounded in parallel runs") {
  SearchSpace box;
  box.lower = {0.0, 1.0};
  box.upper = {1.0, 9.0};
  box.integer_mask = {false, true};
  const LstmPolicy p = LstmPolicy::initialized(box, 4, 3);
  const Trajectory t = run_parallel(p, box, wavy, 3, 12, RuntimeJitter{0.5}, 3);
  for (const auto& e : t.evaluations) CHECK(e.x[1] == std::round(e.x[1]));
}

TEST_CASE("one-worker training without jitter matches sequential training") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 1);
  TrainConfig c;
  c.batch_size = 3;
  c.curriculum = {{6, 3}};
  const TrainResult seq = train(c, p);
  const TrainResult par = train_parallel(c, 1, 0.0, p);
  REQUIRE(seq.history.size() == par.history.size());
  for (std::size_t i = 0; i < seq.history.size(); ++i) {
    CHECK(seq.history[i].mean_loss == par.history[i].mean_loss);
  }
}

TEST_CASE("parallel rollouts are differentiable") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 1);
  RolloutConfig rc;
  rc.horizon = 8;
  rc.workers = 3;
  rc.jitter = RuntimeJitter{0.5};
  const auto g = rollout_gradient(p, rc, 5, 6);
  CHECK(g.loss == rollout_loss_value(p, rc, 5, 6));
  double norm = 0.0;
  for (double v : g.grad) norm += v * v;
  CHECK(norm > 0.0);
  CHECK(std::isfinite(norm));
}
