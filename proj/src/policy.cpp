// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/policy.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rnnopt/random.hpp"

namespace rnnopt {

using ad::Var;

std::string to_string(ObservationScaling s) {
  return s == ObservationScaling::Raw ? "raw" : "standardized";
}

ObservationScaling parse_observation_scaling(const std::string& s) {
  if (s == "raw") return ObservationScaling::Raw;
  if (s == "standardized") return ObservationScaling::Standardized;
  throw std::invalid_argument("unknown observation scaling '" + s + "'");
}

LstmPolicy::LstmPolicy(SearchSpace space, std::size_t hidden, ObservationScaling scaling)
    : space_(std::move(space)), hidden_(hidden), scaling_(scaling) {
  space_.validate();
  if (hidden_ == 0) {
    throw std::invalid_argument("LstmPolicy: hidden size must be positive");
  }
  params_.assign(parameter_count(dim(), hidden_), 0.0);
}

LstmPolicy LstmPolicy::initialized(SearchSpace space, std::size_t hidden, std::uint64_t seed,
                                   ObservationScaling scaling) {
  LstmPolicy p(std::move(space), hidden, scaling);
  RandomStream rng(seed);
  for (double& w : p.params_) {
    w = rng.uniform(-0.05, 0.05);
  }
  const TensorInfo bias = p.tensors()[1];
  for (std::size_t j = 0; j < hidden; ++j) {
    p.params_[bias.offset + hidden + j] = 1.0;
  }
  return p;
}

std::array<TensorInfo, 4> LstmPolicy::tensors() const {
  const std::size_t h = hidden_;
  const std::size_t cols = input_size() + h;
  const std::size_t w_size = 4 * h * cols;
  return {TensorInfo{"gates.weight", 4 * h, cols, 0},
          TensorInfo{"gates.bias", 4 * h, 1, w_size},
          TensorInfo{"out.weight", dim(), h, w_size + 4 * h},
          TensorInfo{"out.bias", dim(), 1, w_size + 4 * h + dim() * h}};
}

PolicyState<double> initial_state(const LstmPolicy& policy) {
  return {std::vector<double>(policy.hidden(), 0.0), std::vector<double>(policy.hidden(), 0.0)};
}

PolicyState<Var> initial_state(const LstmPolicy& policy, ad::Tape& tape) {
  const Var zero = tape.variable(0.0);
  return {std::vector<Var>(policy.hidden(), zero), std::vector<Var>(policy.hidden(), zero)};
}

namespace {

double affine(const double& bias, std::span<const double> w, std::span<const double> z) {
  double y = bias;
  for (std::size_t i = 0; i < w.size(); ++i) {
    y += w[i] * z[i];
  }
  return y;
}

Var affine(const Var& bias, std::span<const Var> w, std::span<const Var> z) {
  return bias.tape()->dot(bias, w, z);
}

void ensure_finite(double v, const char* stage) {
  if (!std::isfinite(v)) {
    throw PolicyError(std::string("LSTM ") + stage + ": non-finite value");
  }
}

constexpr std::array<const char*, 4> kGateNames = {"input gate", "forget gate", "candidate",
                                                    "output gate"};

}  // namespace

template <class S>
std::vector<S> policy_step(const LstmPolicy& policy, std::span<const S> params,
                           PolicyState<S>& state, std::span<const S> input) {
  using ad::sigmoid;
  using std::tanh;
  const std::size_t h = policy.hidden();
  const std::size_t d = policy.dim();
  const std::size_t cols = policy.input_size() + h;
  if (params.size() != policy.parameter_count() || input.size() != policy.input_size() ||
      state.h.size() != h || state.c.size() != h) {
    throw std::invalid_argument("policy_step: size mismatch");
  }
  const auto t = policy.tensors();
  const auto gate_w = params.subspan(t[0].offset, t[0].size());
  const auto gate_b = params.subspan(t[1].offset, t[1].size());
  const auto out_w = params.subspan(t[2].offset, t[2].size());
  const auto out_b = params.subspan(t[3].offset, t[3].size());

  std::vector<S> z;
  z.reserve(cols);
  z.insert(z.end(), input.begin(), input.end());
  z.insert(z.end(), state.h.begin(), state.h.end());

  std::vector<S> pre(4 * h);
  std::vector<S> x_unit(d);
  const char* stage = kGateNames[0];
  try {
    for (std::size_t g = 0; g < 4 * h; ++g) {
      stage = kGateNames[g / h];
      pre[g] = affine(gate_b[g], gate_w.subspan(g * cols, cols), z);
      ensure_finite(ad::value_of(pre[g]), stage);
    }
    for (std::size_t j = 0; j < h; ++j) {
      stage = kGateNames[0];
      const S in = sigmoid(pre[j]);
      stage = kGateNames[1];
      const S forget = sigmoid(pre[h + j]);
      stage = kGateNames[2];
      const S cand = tanh(pre[2 * h + j]);
      stage = kGateNames[3];
      const S out = sigmoid(pre[3 * h + j]);
      stage = "cell state";
      state.c[j] = forget * state.c[j] + in * cand;
      ensure_finite(ad::value_of(state.c[j]), stage);
      stage = "hidden state";
      state.h[j] = out * tanh(state.c[j]);
    }
    stage = "output projection";
    for (std::size_t k = 0; k < d; ++k) {
      x_unit[k] = sigmoid(affine(out_b[k], out_w.subspan(k * h, h), std::span<const S>(state.h)));
      ensure_finite(ad::value_of(x_unit[k]), stage);
    }
  } catch (const ad::AutodiffError& e) {
    throw PolicyError(std::string("LSTM ") + stage + ": " + e.what());
  }
  return x_unit;
}

template std::vector<double> policy_step<double>(const LstmPolicy&, std::span<const double>,
                                                 PolicyState<double>&, std::span<const double>);
template std::vector<Var> policy_step<Var>(const LstmPolicy&, std::span<const Var>,
                                           PolicyState<Var>&, std::span<const Var>);

// --- inference ---------------------------------------------------------------

PolicyOptimizer::PolicyOptimizer(const LstmPolicy& policy, SearchSpace space)
    : policy_(policy),
      space_(std::move(space)),
      state_(initial_state(policy)),
      scaler_(policy.scaling()),
      input_(policy.input_size(), 0.0) {
  space_.validate();
  if (space_.dim() != policy.dim()) {
    throw std::invalid_argument("PolicyOptimizer: search space dimension " +
                                std::to_string(space_.dim()) + " does not match policy dimension " +
                                std::to_string(policy.dim()));
  }
}

std::vector<double> PolicyOptimizer::propose() {
  o_flags_.push_back(input_.back() == 1.0 ? 1 : 0);
  last_unit_ = policy_step<double>(policy_, policy_.parameters(), state_, input_);
  return space_.round(space_.from_unit(last_unit_));
}

void PolicyOptimizer::observe(std::span<const double>, double y) {
  const std::size_t d = policy_.dim();
  std::copy(last_unit_.begin(), last_unit_.end(), input_.begin());
  input_[d] = scaler_(y);
  input_[d + 1] = 1.0;
}

Trajectory propose_eval(const LstmPolicy& policy, const SearchSpace& space, std::size_t budget,
                        const Objective& objective, std::uint64_t) {
  if (budget == 0) {
    throw std::invalid_argument("propose_eval: budget must be at least 1");
  }
  PolicyOptimizer opt(policy, space);
  Trajectory traj = run_sequential(opt, budget, objective);
  traj.o_flags = opt.o_flags();
  return traj;
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr const char* kFormat = "rnnopt-lstm-policy";
constexpr int kFormatVersion = 1;

}  // namespace

std::string checkpoint_to_string(const LstmPolicy& policy) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = kFormat;
  j["version"] = kFormatVersion;
  j["dim"] = policy.dim();
  j["hidden"] = policy.hidden();
  j["lower"] = policy.space().lower;
  j["upper"] = policy.space().upper;
  j["integer_mask"] = policy.space().integer_mask;
  j["observation_scaling"] = to_string(policy.scaling());
  j["training"] = {{"loss", policy.training_loss},
                   {"kernel",
                    {{"length_scale", policy.training_kernel.length_scale},
                     {"signal_variance", policy.training_kernel.signal_variance},
                     {"noise_variance", policy.training_kernel.noise_variance}}}};
  ordered_json tensors = ordered_json::array();
  const auto params = policy.parameters();
  for (const TensorInfo& t : policy.tensors()) {
    const auto values = params.subspan(t.offset, t.size());
    tensors.push_back({{"name", t.name},
                       {"shape", {t.rows, t.cols}},
                       {"values", std::vector<double>(values.begin(), values.end())}});
  }
  j["tensors"] = std::move(tensors);
  return j.dump(1) + "\n";
}

LstmPolicy checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed document: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) {
      throw std::runtime_error("checkpoint: unexpected format tag");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw std::runtime_error("checkpoint: unsupported version " +
                               std::to_string(j.at("version").get<int>()));
    }
    SearchSpace space{j.at("lower").get<std::vector<double>>(),
                      j.at("upper").get<std::vector<double>>(),
                      j.at("integer_mask").get<std::vector<bool>>()};
    if (space.dim() != j.at("dim").get<std::size_t>()) {
      throw std::runtime_error("checkpoint: bounds disagree with dim");
    }
    LstmPolicy policy(std::move(space), j.at("hidden").get<std::size_t>(),
                      parse_observation_scaling(j.at("observation_scaling").get<std::string>()));
    const auto& training = j.at("training");
    policy.training_loss = training.at("loss").get<std::string>();
    const auto& k = training.at("kernel");
    policy.training_kernel = gp::Kernel{k.at("length_scale").get<double>(),
                                        k.at("signal_variance").get<double>(),
                                        k.at("noise_variance").get<double>()};
    auto params = policy.parameters();
    const auto& tensors = j.at("tensors");
    for (const TensorInfo& t : policy.tensors()) {
      const auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& e) {
        return e.at("name").template get<std::string>() == t.name;
      });
      if (it == tensors.end()) {
        throw std::runtime_error("checkpoint: missing tensor " + t.name);
      }
      const auto shape = it->at("shape").get<std::vector<std::size_t>>();
      if (shape != std::vector<std::size_t>{t.rows, t.cols}) {
        throw std::runtime_error("checkpoint: tensor " + t.name + " has the wrong shape");
      }
      const auto values = it->at("values").get<std::vector<double>>();
      if (values.size() != t.size()) {
        throw std::runtime_error("checkpoint: tensor " + t.name + " has the wrong length");
      }
      std::copy(values.begin(), values.end(), params.begin() + static_cast<std::ptrdiff_t>(t.offset));
    }
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const LstmPolicy& policy, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("checkpoint: cannot write " + path.string());
  }
  out << checkpoint_to_string(policy);
}

LstmPolicy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("checkpoint: cannot read " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace rnnopt
