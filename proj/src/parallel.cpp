// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/parallel.hpp"

#include <chrono>
#include <stdexcept>
#include <string>

namespace rnnopt {

using ad::Var;

void RuntimeJitter::validate() const {
  if (!(eta >= 0.0 && eta < 1.0)) {
    throw std::invalid_argument("runtime jitter must lie in [0, 1), got " + std::to_string(eta));
  }
}

double RuntimeJitter::draw(RandomStream& rng) const {
  // Always consume one draw so the stream position does not depend on eta.
  const double u = rng.uniform();
  return 1.0 - eta + 2.0 * eta * u;
}

WorkerPool::WorkerPool(std::size_t workers) : busy_(workers, false) {
  if (workers == 0) {
    throw std::invalid_argument("WorkerPool: need at least one worker");
  }
}

int WorkerPool::issue(int issue_idx, double now, double runtime) {
  if (!(runtime > 0.0)) {
    throw std::invalid_argument("WorkerPool: runtime must be positive");
  }
  for (std::size_t w = 0; w < busy_.size(); ++w) {
    if (!busy_[w]) {
      busy_[w] = true;
      events_.push(Completion{static_cast<int>(w), issue_idx, now + runtime});
      return static_cast<int>(w);
    }
  }
  throw std::logic_error("WorkerPool: all workers busy");
}

WorkerPool::Completion WorkerPool::complete_next() {
  if (events_.empty()) {
    throw std::logic_error("WorkerPool: nothing outstanding");
  }
  const Completion c = events_.top();
  events_.pop();
  busy_[static_cast<std::size_t>(c.worker)] = false;
  return c;
}

namespace {

double constant(ad::Tape*, double v, double*) { return v; }
Var constant(ad::Tape* tape, double v, Var*) { return tape->variable(v); }

template <class S>
S make_constant(ad::Tape* tape, double v) {
  return constant(tape, v, static_cast<S*>(nullptr));
}

}  // namespace

template <class S>
Unrolled<S> unroll(const LstmPolicy& policy, std::span<const S> params, ad::Tape* tape,
                   std::size_t horizon, std::size_t workers, RuntimeJitter jitter,
                   std::uint64_t runtime_seed, const UnrollEvaluator<S>& evaluate,
                   bool time_proposals) {
  using Clock = std::chrono::steady_clock;
  if (horizon == 0) {
    throw std::invalid_argument("unroll: horizon must be at least 1");
  }
  if (workers == 0 || workers > horizon) {
    throw std::invalid_argument("unroll: need 1 <= workers <= horizon");
  }
  jitter.validate();
  const std::size_t d = policy.dim();

  PolicyState<S> state;
  if constexpr (std::is_same_v<S, Var>) {
    state = initial_state(policy, *tape);
  } else {
    state = initial_state(policy);
  }
  ObservationScaler<S> scaler(policy.scaling());
  RandomStream runtimes(runtime_seed);
  WorkerPool pool(workers);

  std::vector<std::vector<S>> issued;
  std::vector<int> issued_worker;
  std::vector<std::int64_t> issued_ns;
  issued.reserve(horizon);
  Unrolled<S> out;
  out.records.reserve(horizon);
  out.o_flags.reserve(horizon);

  const S zero = make_constant<S>(tape, 0.0);
  const S one = make_constant<S>(tape, 1.0);

  auto propose = [&](std::span<const S> input, double now, int o_flag) {
    const auto t0 = time_proposals ? Clock::now() : Clock::time_point{};
    std::vector<S> x = policy_step<S>(policy, params, state, input);
    const std::int64_t ns =
        time_proposals
            ? std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count()
            : 0;
    const int idx = static_cast<int>(issued.size());
    issued_worker.push_back(pool.issue(idx, now, jitter.draw(runtimes)));
    issued.push_back(std::move(x));
    issued_ns.push_back(ns);
    out.o_flags.push_back(o_flag);
  };

  const std::vector<S> dummy(d + 2, zero);
  for (std::size_t i = 0; i < workers; ++i) {
    propose(dummy, 0.0, 0);
  }
  std::vector<S> input(d + 2, zero);
  while (pool.outstanding() > 0) {
    const WorkerPool::Completion c = pool.complete_next();
    const auto& x = issued[static_cast<std::size_t>(c.issue_idx)];
    UnrollRecord<S> rec;
    rec.x_unit = x;
    rec.draw = evaluate(x, c.worker, c.issue_idx);
    rec.worker_id = c.worker;
    rec.issue_idx = c.issue_idx;
    rec.complete_idx = static_cast<int>(out.records.size());
    rec.sim_time = c.time;
    rec.propose_ns = issued_ns[static_cast<std::size_t>(c.issue_idx)];
    if (issued.size() < horizon) {
      std::copy(x.begin(), x.end(), input.begin());
      input[d] = scaler(rec.draw.value);
      input[d + 1] = one;
      out.records.push_back(std::move(rec));
      propose(input, c.time, 1);
    } else {
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

template Unrolled<double> unroll<double>(const LstmPolicy&, std::span<const double>, ad::Tape*,
                                         std::size_t, std::size_t, RuntimeJitter, std::uint64_t,
                                         const UnrollEvaluator<double>&, bool);
template Unrolled<Var> unroll<Var>(const LstmPolicy&, std::span<const Var>, ad::Tape*, std::size_t,
                                   std::size_t, RuntimeJitter, std::uint64_t,
                                   const UnrollEvaluator<Var>&, bool);

Trajectory run_parallel(const LstmPolicy& policy, const SearchSpace& space,
                        const Objective& objective, std::size_t workers, std::size_t budget,
                        RuntimeJitter jitter, std::uint64_t seed) {
  space.validate();
  if (space.dim() != policy.dim()) {
    throw std::invalid_argument("run_parallel: search space dimension does not match policy");
  }
  std::vector<std::vector<double>> evaluated(budget);
  const UnrollEvaluator<double> evaluate = [&](std::span<const double> x_unit, int worker,
                                               int issue) {
    std::vector<double> x = space.round(space.from_unit(x_unit));
    double y = 0.0;
    try {
      y = objective(x);
    } catch (const std::exception& e) {
      throw ObjectiveError(static_cast<std::size_t>(issue) + 1, worker,
                           "objective failed on worker " + std::to_string(worker) +
                               " at query " + std::to_string(issue + 1) + ": " + e.what());
    }
    evaluated[static_cast<std::size_t>(issue)] = std::move(x);
    return gp::Draw<double>{y, {0.0, 0.0}};
  };
  const Unrolled<double> u =
      unroll<double>(policy, policy.parameters(), nullptr, budget, workers, jitter,
                     derive_seed(seed, StreamId::Runtime), evaluate, true);

  Trajectory traj;
  traj.parallel = true;
  traj.o_flags = u.o_flags;
  traj.evaluations.reserve(u.records.size());
  for (const auto& r : u.records) {
    Evaluation ev;
    ev.x = evaluated[static_cast<std::size_t>(r.issue_idx)];
    ev.y = r.draw.value;
    ev.wall_ns = r.propose_ns;
    ev.worker_id = r.worker_id;
    ev.issue_idx = r.issue_idx;
    ev.complete_idx = r.complete_idx;
    ev.sim_time = r.sim_time;
    traj.evaluations.push_back(std::move(ev));
  }
  return traj;
}

}  // namespace rnnopt
