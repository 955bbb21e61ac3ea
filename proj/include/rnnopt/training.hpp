// SPDX-License-Identifier: Apache-2.0
//
// Meta-training: unroll the policy against fresh GP samples on the tape,
// reduce the trajectory to one of four losses, backpropagate through time and
// apply Adam.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnnopt/autodiff.hpp"
#include "rnnopt/gp.hpp"
#include "rnnopt/parallel.hpp"
#include "rnnopt/policy.hpp"

namespace rnnopt {

enum class LossKind { Final, Sum, EI, OI };

std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

/// Reduces observed values (in observation order) to a loss.
///   Final: y_T
///   Sum:   sum_t y_t
///   OI:    sum_{t>1} min(y_t - min_{i<t} y_i, 0)   (first term is 0)
/// EI needs posteriors and goes through ei_loss instead.
template <class S>
S trajectory_loss(LossKind kind, std::span<const S> values);

/// -sum_t EI(posterior_t, best_{t-1}), best_0 = 0 (the dummy observation) and
/// best_{t-1} = min_{i<t} y_i afterwards. With `detach_best` the running best
/// carries no gradient.
template <class S>
S ei_loss(std::span<const gp::Posterior<S>> posteriors, std::span<const S> values,
          bool detach_best);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update, in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const AdamConfig& config);

/// Scales `grads` so that its Euclidean norm is at most `max_norm`. Returns
/// the norm before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

/// What one training episode looks like.
struct RolloutConfig {
  gp::Kernel kernel;
  std::size_t horizon = 10;
  LossKind loss = LossKind::Sum;
  /// Treat the GP conditioning data as constants. Cheaper, but the resulting
  /// gradient can point uphill once queries cluster, so training defaults to
  /// the full gradient.
  bool detach_history = false;
  std::size_t workers = 1;
  RuntimeJitter jitter;
};

/// Builds the loss of one episode on `tape`. `params` must be the policy
/// parameters as leaves of `tape`.
ad::Var rollout_loss(ad::Tape& tape, std::span<const ad::Var> params, const LstmPolicy& policy,
                     const RolloutConfig& config, std::uint64_t function_seed,
                     std::uint64_t runtime_seed);

/// The same episode evaluated without a tape.
double rollout_loss_value(const LstmPolicy& policy, const RolloutConfig& config,
                          std::uint64_t function_seed, std::uint64_t runtime_seed);

struct RolloutGradient {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d params, parameter order
};

RolloutGradient rollout_gradient(const LstmPolicy& policy, const RolloutConfig& config,
                                 std::uint64_t function_seed, std::uint64_t runtime_seed);

struct CurriculumStage {
  std::size_t horizon;
  std::size_t steps;
};

struct ParallelTraining {
  std::size_t workers = 5;
  double eta = 0.5;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::vector<CurriculumStage> curriculum = {{10, 100}, {20, 100}, {30, 100}};
  AdamConfig adam;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  bool detach_history = false;
  LossKind loss = LossKind::Sum;
  gp::Kernel kernel;
  std::optional<ParallelTraining> parallel;
  std::size_t threads = 1;
  /// Write a checkpoint every K outer steps (0 = never) into checkpoint_dir.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  std::size_t total_steps() const noexcept;
};

struct TrainRecord {
  std::size_t outer_step = 0;  // 1-based
  std::size_t horizon = 0;
  double mean_loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double wall_ms = 0.0;
};

struct TrainResult {
  LstmPolicy policy;
  std::vector<TrainRecord> history;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, std::filesystem::path last_good, const std::string& what)
      : std::runtime_error(what), step_(step), last_good_(std::move(last_good)) {}
  std::size_t step() const noexcept { return step_; }
  const std::filesystem::path& last_good() const noexcept { return last_good_; }

 private:
  std::size_t step_;
  std::filesystem::path last_good_;
};

using TrainCallback = std::function<void(const TrainRecord&)>;

/// Outer step k (1-based) uses rollouts derive_seed(seed, TrainFunction, (k-1)B + b).
/// Gradients are reduced in rollout order, so the result does not depend on
/// `threads`.
TrainResult train(const TrainConfig& config, LstmPolicy initial, const TrainCallback& on_step = {});

/// train() with the parallel protocol forced on (N workers, jitter eta).
TrainResult train_parallel(TrainConfig config, std::size_t workers, double eta, LstmPolicy initial,
                           const TrainCallback& on_step = {});

/// Mean of rollout_loss_value over `count` validation functions
/// derive_seed(seed, Validation, i).
double validation_loss(const LstmPolicy& policy, const RolloutConfig& config, std::uint64_t seed,
                       std::size_t count);

}  // namespace rnnopt
