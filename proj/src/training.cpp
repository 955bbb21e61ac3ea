// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "rnnopt/random.hpp"
#include "rnnopt/thread_pool.hpp"

namespace rnnopt {

using ad::Var;

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Final: return "final";
    case LossKind::Sum: return "sum";
    case LossKind::EI: return "ei";
    case LossKind::OI: return "oi";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "final") return LossKind::Final;
  if (s == "sum") return LossKind::Sum;
  if (s == "ei") return LossKind::EI;
  if (s == "oi") return LossKind::OI;
  throw std::invalid_argument("unknown loss '" + s + "' (expected final, sum, ei or oi)");
}

namespace {

double no_grad(double v) { return v; }
Var no_grad(Var v) { return ad::detach(v); }

}  // namespace

template <class S>
S trajectory_loss(LossKind kind, std::span<const S> values) {
  using std::min;
  if (values.empty()) {
    throw std::invalid_argument("trajectory_loss: empty trajectory");
  }
  switch (kind) {
    case LossKind::Final:
      return values.back();
    case LossKind::Sum: {
      S total = values[0];
      for (std::size_t t = 1; t < values.size(); ++t) total = total + values[t];
      return total;
    }
    case LossKind::OI: {
      S best = values[0];
      S total = 0.0 * values[0];
      for (std::size_t t = 1; t < values.size(); ++t) {
        total = total + min(values[t] - best, 0.0);
        best = min(best, values[t]);
      }
      return total;
    }
    case LossKind::EI:
      break;
  }
  throw std::invalid_argument("trajectory_loss: EI needs posteriors, use ei_loss");
}

template <class S>
S ei_loss(std::span<const gp::Posterior<S>> posteriors, std::span<const S> values,
          bool detach_best) {
  using std::min;
  if (values.empty() || posteriors.size() != values.size()) {
    throw std::invalid_argument("ei_loss: need one posterior per observation");
  }
  S total = -gp::expected_improvement(posteriors[0], 0.0);
  S best = values[0];
  for (std::size_t t = 1; t < values.size(); ++t) {
    const S b = detach_best ? no_grad(best) : best;
    total = total - gp::expected_improvement(posteriors[t], b);
    best = min(best, values[t]);
  }
  return total;
}

template double trajectory_loss<double>(LossKind, std::span<const double>);
template Var trajectory_loss<Var>(LossKind, std::span<const Var>);
template double ei_loss<double>(std::span<const gp::Posterior<double>>, std::span<const double>,
                                bool);
template Var ei_loss<Var>(std::span<const gp::Posterior<Var>>, std::span<const Var>, bool);

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const AdamConfig& c) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

// --- rollouts ----------------------------------------------------------------

namespace {

template <class S>
S episode_loss(const LstmPolicy& policy, std::span<const S> params, ad::Tape* tape,
               const RolloutConfig& config, std::uint64_t function_seed,
               std::uint64_t runtime_seed) {
  gp::GpSampleFunction f(config.kernel, policy.dim(), function_seed, config.detach_history);
  const UnrollEvaluator<S> evaluate = [&](std::span<const S> x, int, int) { return f.sample(x); };
  const Unrolled<S> u = unroll<S>(policy, params, tape, config.horizon, config.workers,
                                  config.jitter, runtime_seed, evaluate);
  std::vector<S> values;
  values.reserve(u.records.size());
  for (const auto& r : u.records) values.push_back(r.draw.value);
  if (config.loss == LossKind::EI) {
    std::vector<gp::Posterior<S>> post;
    post.reserve(u.records.size());
    for (const auto& r : u.records) post.push_back(r.draw.posterior);
    return ei_loss<S>(post, values, config.detach_history);
  }
  return trajectory_loss<S>(config.loss, values);
}

}  // namespace

Var rollout_loss(ad::Tape& tape, std::span<const Var> params, const LstmPolicy& policy,
                 const RolloutConfig& config, std::uint64_t function_seed,
                 std::uint64_t runtime_seed) {
  return episode_loss<Var>(policy, params, &tape, config, function_seed, runtime_seed);
}

double rollout_loss_value(const LstmPolicy& policy, const RolloutConfig& config,
                          std::uint64_t function_seed, std::uint64_t runtime_seed) {
  return episode_loss<double>(policy, policy.parameters(), nullptr, config, function_seed,
                              runtime_seed);
}

RolloutGradient rollout_gradient(const LstmPolicy& policy, const RolloutConfig& config,
                                 std::uint64_t function_seed, std::uint64_t runtime_seed) {
  ad::Tape tape;
  const std::size_t p = policy.parameter_count();
  tape.reserve(p + config.horizon * (8 * policy.hidden() + 64),
               config.horizon * 4 * policy.hidden() * (policy.input_size() + policy.hidden() + 1));
  const std::vector<Var> params = tape.variables(policy.parameters());
  const Var loss = rollout_loss(tape, params, policy, config, function_seed, runtime_seed);
  const ad::Gradient g = tape.backward(loss);
  RolloutGradient out;
  out.loss = loss.value();
  out.grad.assign(g.adjoints().begin(), g.adjoints().begin() + static_cast<std::ptrdiff_t>(p));
  return out;
}

double validation_loss(const LstmPolicy& policy, const RolloutConfig& config, std::uint64_t seed,
                       std::size_t count) {
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    total += rollout_loss_value(policy, config, derive_seed(seed, StreamId::Validation, i),
                                derive_seed(seed, StreamId::TrainRuntime, i));
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

// --- outer loop --------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be at least 1");
  if (curriculum.empty()) throw std::invalid_argument("train: empty curriculum");
  for (std::size_t i = 0; i < curriculum.size(); ++i) {
    if (curriculum[i].horizon == 0) {
      throw std::invalid_argument("train: curriculum horizons must be positive");
    }
    if (i > 0 && curriculum[i].horizon < curriculum[i - 1].horizon) {
      throw std::invalid_argument("train: curriculum horizons must be non-decreasing");
    }
  }
  if (!(clip_norm > 0.0)) throw std::invalid_argument("train: clip_norm must be positive");
  if (!(adam.learning_rate > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0)) {
    throw std::invalid_argument("train: invalid Adam hyperparameters");
  }
  kernel.validate();
  if (parallel) {
    if (parallel->workers == 0) throw std::invalid_argument("train: workers must be at least 1");
    RuntimeJitter{parallel->eta}.validate();
    for (const auto& s : curriculum) {
      if (s.steps > 0 && s.horizon < parallel->workers) {
        throw std::invalid_argument("train: every horizon must be at least the worker count");
      }
    }
  }
  if (checkpoint_every > 0 && checkpoint_dir.empty()) {
    throw std::invalid_argument("train: checkpoint_every needs checkpoint_dir");
  }
}

std::size_t TrainConfig::total_steps() const noexcept {
  std::size_t n = 0;
  for (const auto& s : curriculum) n += s.steps;
  return n;
}

namespace {

std::filesystem::path last_good_path(const TrainConfig& config) {
  std::ostringstream name;
  name << "last_good_" << std::hex << config.seed << ".json";
  const std::filesystem::path dir =
      config.checkpoint_dir.empty() ? std::filesystem::temp_directory_path() : config.checkpoint_dir;
  return dir / name.str();
}

}  // namespace

TrainResult train(const TrainConfig& config, LstmPolicy initial, const TrainCallback& on_step) {
  using Clock = std::chrono::steady_clock;
  config.validate();
  LstmPolicy policy = std::move(initial);
  policy.training_kernel = config.kernel;
  policy.training_loss = to_string(config.loss);
  if (!config.checkpoint_dir.empty()) {
    std::filesystem::create_directories(config.checkpoint_dir);
  }

  const std::size_t p = policy.parameter_count();
  const std::size_t batch = config.batch_size;
  AdamState adam(p);
  std::vector<RolloutGradient> results(batch);
  std::vector<double> grad(p);
  std::vector<TrainRecord> history;
  history.reserve(config.total_steps());

  RolloutConfig rc;
  rc.kernel = config.kernel;
  rc.loss = config.loss;
  rc.detach_history = config.detach_history;
  if (config.parallel) {
    rc.workers = config.parallel->workers;
    rc.jitter = RuntimeJitter{config.parallel->eta};
  }

  std::size_t step = 0;
  for (const CurriculumStage& stage : config.curriculum) {
    rc.horizon = stage.horizon;
    for (std::size_t k = 0; k < stage.steps; ++k) {
      ++step;
      const auto t0 = Clock::now();
      const std::uint64_t base = static_cast<std::uint64_t>(step - 1) * batch;
      std::string failure;
      try {
        parallel_for(batch, config.threads, [&](std::size_t b) {
          results[b] = rollout_gradient(policy, rc,
                                        derive_seed(config.seed, StreamId::TrainFunction, base + b),
                                        derive_seed(config.seed, StreamId::TrainRuntime, base + b));
        });
      } catch (const ad::AutodiffError& e) {
        failure = e.what();
      } catch (const PolicyError& e) {
        failure = e.what();
      }
      double loss = 0.0;
      std::fill(grad.begin(), grad.end(), 0.0);
      if (failure.empty()) {
        for (std::size_t b = 0; b < batch; ++b) {
          loss += results[b].loss;
          for (std::size_t i = 0; i < p; ++i) grad[i] += results[b].grad[i];
        }
        loss /= static_cast<double>(batch);
        for (double& g : grad) g /= static_cast<double>(batch);
        if (!std::isfinite(loss)) failure = "non-finite loss";
      }
      double norm = 0.0;
      if (failure.empty()) {
        norm = clip_global_norm(grad, config.clip_norm);
        if (!std::isfinite(norm)) failure = "non-finite gradient";
      }
      if (!failure.empty()) {
        const auto path = last_good_path(config);
        save_checkpoint(policy, path);
        throw TrainingDiverged(step, path,
                               "training diverged at outer step " + std::to_string(step) + " (" +
                                   failure + "); last good checkpoint: " + path.string());
      }
      adam_step(adam, policy.parameters(), grad, config.adam);

      TrainRecord rec;
      rec.outer_step = step;
      rec.horizon = stage.horizon;
      rec.mean_loss = loss;
      rec.grad_norm = norm;
      rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      history.push_back(rec);
      if (on_step) on_step(rec);
      if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
        save_checkpoint(policy, config.checkpoint_dir / ("step_" + std::to_string(step) + ".json"));
      }
    }
  }
  return TrainResult{std::move(policy), std::move(history)};
}

TrainResult train_parallel(TrainConfig config, std::size_t workers, double eta, LstmPolicy initial,
                           const TrainCallback& on_step) {
  config.parallel = ParallelTraining{workers, eta};
  return train(config, std::move(initial), on_step);
}

}  // namespace rnnopt
