// SPDX-License-Identifier: Apache-2.0
//
// LSTM query policy.
//
// One step consumes the previous query (in unit coordinates), the previous
// observation and the o-flag, updates (h, c), and emits the next query as
// sigmoid(W_out h + b_out) in the unit box. The same templated code runs on
// plain doubles (inference) and on tape variables (training), so both modes
// produce identical values.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnnopt/autodiff.hpp"
#include "rnnopt/gp.hpp"
#include "rnnopt/space.hpp"

namespace rnnopt {

/// How observations are presented to the network.
enum class ObservationScaling {
  Raw,
  /// (y - m) / sqrt(v), where m and v are the running mean and variance of
  /// the observations so far plus one pseudo-observation at 0 with unit
  /// variance. Keeps inputs O(1) on objectives of any scale.
  Standardized,
};

std::string to_string(ObservationScaling s);
ObservationScaling parse_observation_scaling(const std::string& s);

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorInfo {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;
  std::size_t size() const noexcept { return rows * cols; }
};

class LstmPolicy {
 public:
  LstmPolicy(SearchSpace space, std::size_t hidden,
             ObservationScaling scaling = ObservationScaling::Standardized);

  /// uniform(-0.05, 0.05) weights, forget-gate bias +1.
  static LstmPolicy initialized(SearchSpace space, std::size_t hidden, std::uint64_t seed,
                                ObservationScaling scaling = ObservationScaling::Standardized);

  std::size_t dim() const noexcept { return space_.dim(); }
  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t input_size() const noexcept { return dim() + 2; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  static std::size_t parameter_count(std::size_t dim, std::size_t hidden) noexcept {
    return 4 * hidden * (dim + 2 + hidden + 1) + dim * (hidden + 1);
  }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  const SearchSpace& space() const noexcept { return space_; }
  ObservationScaling scaling() const noexcept { return scaling_; }

  /// gates.weight [4H, d+2+H] (rows: input, forget, candidate, output),
  /// gates.bias [4H], out.weight [d, H], out.bias [d].
  std::array<TensorInfo, 4> tensors() const;

  // Provenance recorded in checkpoints.
  gp::Kernel training_kernel;
  std::string training_loss = "sum";

 private:
  SearchSpace space_;
  std::size_t hidden_;
  ObservationScaling scaling_;
  std::vector<double> params_;
};

template <class S>
struct PolicyState {
  std::vector<S> h;
  std::vector<S> c;
};

/// h = 0, c = 0. For tape variables the zeros are constants on `tape`.
PolicyState<double> initial_state(const LstmPolicy& policy);
PolicyState<ad::Var> initial_state(const LstmPolicy& policy, ad::Tape& tape);

/// One LSTM step. `params` is the flat parameter vector (or its taped copy),
/// `input` is [x_prev (d, unit coordinates), y_prev, o_prev]. Returns the next
/// query in unit coordinates; `state` is updated in place.
template <class S>
std::vector<S> policy_step(const LstmPolicy& policy, std::span<const S> params,
                           PolicyState<S>& state, std::span<const S> input);

/// Running standardisation of observations (see ObservationScaling).
template <class S>
class ObservationScaler {
 public:
  explicit ObservationScaler(ObservationScaling mode) : mode_(mode) {}

  S operator()(const S& y) {
    using std::sqrt;
    if (mode_ == ObservationScaling::Raw) {
      return y;
    }
    if (count_ == 0) {
      sum_ = y;
      sum_sq_ = y * y + 1.0;
    } else {
      sum_ = sum_ + y;
      sum_sq_ = sum_sq_ + y * y;
    }
    ++count_;
    const double n = static_cast<double>(count_ + 1);
    const S mean = sum_ / n;
    const S var = sum_sq_ / n - mean * mean;
    return (y - mean) / sqrt(var);
  }

 private:
  ObservationScaling mode_;
  std::size_t count_ = 0;
  S sum_{};
  S sum_sq_{};
};

/// Inference-time wrapper exposing the policy through the Optimizer
/// interface. Proposals are mapped into `space` and integer dimensions are
/// rounded; the unrounded query is what the network sees next.
class PolicyOptimizer final : public Optimizer {
 public:
  PolicyOptimizer(const LstmPolicy& policy, SearchSpace space);

  std::vector<double> propose() override;
  void observe(std::span<const double> x, double y) override;

  const std::vector<int>& o_flags() const noexcept { return o_flags_; }
  /// Unrounded unit-coordinate proposal from the last propose().
  std::span<const double> last_unit() const noexcept { return last_unit_; }

 private:
  const LstmPolicy& policy_;
  SearchSpace space_;
  PolicyState<double> state_;
  ObservationScaler<double> scaler_;
  std::vector<double> input_;
  std::vector<double> last_unit_;
  std::vector<int> o_flags_;
};

/// Sequential deployment: T proposals, each evaluated before the next.
/// `seed` is accepted for interface parity with the baselines; inference is
/// deterministic.
Trajectory propose_eval(const LstmPolicy& policy, const SearchSpace& space, std::size_t budget,
                        const Objective& objective, std::uint64_t seed = 0);

void save_checkpoint(const LstmPolicy& policy, const std::filesystem::path& path);
LstmPolicy load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const LstmPolicy& policy);
LstmPolicy checkpoint_from_string(const std::string& text);

}  // namespace rnnopt
