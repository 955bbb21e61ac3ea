// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "rnnopt/checks.hpp"
#include "rnnopt/policy.hpp"
#include "rnnopt/random.hpp"

using namespace rnnopt;

namespace {

LstmPolicy zero_policy(std::size_t dim, std::size_t hidden) {
  return LstmPolicy(SearchSpace::unit(dim), hidden, ObservationScaling::Raw);
}

// A smooth deterministic objective on any box.
double bowl(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::sin(3.0 * x[i] + static_cast<double>(i));
  return s;
}

}  // namespace

TEST_CASE("initial state is zero and independent of the parameters") {
  const LstmPolicy a = LstmPolicy::initialized(SearchSpace::unit(1), 4, 1);
  const LstmPolicy b = LstmPolicy::initialized(SearchSpace::unit(1), 4, 2);
  const auto s1 = initial_state(a);
  const auto s2 = initial_state(a);
  const auto s3 = initial_state(b);
  CHECK(s1.h == std::vector<double>(4, 0.0));
  CHECK(s1.c == std::vector<double>(4, 0.0));
  CHECK(s1.h == s2.h);
  CHECK(s1.c == s2.c);
  CHECK(s1.h == s3.h);
  CHECK(s1.c == s3.c);
}

TEST_CASE("parameter count") {
  for (std::size_t d : {1, 2, 6}) {
    for (std::size_t h : {1, 4, 32}) {
      const LstmPolicy p(SearchSpace::unit(d), h);
      CHECK(p.parameter_count() == 4 * h * (d + 2 + h + 1) + d * (h + 1));
      CHECK(p.parameter_count() == LstmPolicy::parameter_count(d, h));
      std::size_t total = 0;
      for (const auto& t : p.tensors()) total += t.size();
      CHECK(total == p.parameter_count());
    }
  }
  CHECK_THROWS_AS(LstmPolicy(SearchSpace::unit(1), 0), std::invalid_argument);
}

TEST_CASE("initialisation range and forget bias") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(2), 8, 3);
  const auto t = p.tensors();
  const auto params = p.parameters();
  for (const auto& info : {t[0], t[2], t[3]}) {
    for (std::size_t i = 0; i < info.size(); ++i) {
      CHECK(std::abs(params[info.offset + i]) <= 0.05);
    }
  }
  for (std::size_t g = 0; g < 4 * 8; ++g) {
    const double b = params[t[1].offset + g];
    if (g >= 8 && g < 16) {
      CHECK(b == doctest::Approx(1.0).epsilon(0.06));
    } else {
      CHECK(std::abs(b) <= 0.05);
    }
  }
}

TEST_CASE("all-zero parameters propose the midpoint and halve the cell") {
  const LstmPolicy p = zero_policy(3, 5);
  auto state = initial_state(p);
  state.c = {0.4, -1.0, 2.0, 0.0, 8.0};
  const std::vector<double> c0 = state.c;
  const std::vector<double> input = {0.1, 0.7, 0.3, 1.5, 1.0};
  const auto x = policy_step<double>(p, p.parameters(), state, input);
  CHECK(x == std::vector<double>(3, 0.5));
  for (std::size_t j = 0; j < 5; ++j) CHECK(state.c[j] == 0.5 * c0[j]);

  // Mapped into a box, the midpoint is the box centre.
  SearchSpace box;
  box.lower = {-2.0, 10.0, 0.0};
  box.upper = {4.0, 20.0, 1.0};
  box.integer_mask = {false, false, false};
  const LstmPolicy q(box, 5, ObservationScaling::Raw);
  const auto t = propose_eval(q, box, 1, bowl);
  CHECK(t.evaluations[0].x == std::vector<double>{1.0, 15.0, 0.5});
}

TEST_CASE("one LSTM step gradient matches finite differences") {
  const auto r = checks::lstm_step_gradient(0);
  CHECK_MESSAGE(r.passed, r.value);
}

TEST_CASE("taped and plain steps agree") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(2), 8, 9);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ad::Tape tape;
  const std::vector<ad::Var> params = tape.variables(p.parameters());
  auto sd = initial_state(p);
  auto sv = initial_state(p, tape);
  for (int step = 0; step < 10; ++step) {
    const std::vector<double> in = {u(rng), u(rng), u(rng), step == 0 ? 0.0 : 1.0};
    const std::vector<ad::Var> inv = tape.variables(in);
    const auto xd = policy_step<double>(p, p.parameters(), sd, in);
    const auto xv = policy_step<ad::Var>(p, params, sv, inv);
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(xd[k] - xv[k].value()) <= 1e-12);
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(std::abs(sd.h[j] - sv.h[j].value()) <= 1e-12);
      CHECK(std::abs(sd.h[j]) <= 1.0);
    }
  }
}

TEST_CASE("dummy first step is differentiable") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 2);
  ad::Tape tape;
  const std::vector<ad::Var> params = tape.variables(p.parameters());
  auto s = initial_state(p, tape);
  const std::vector<ad::Var> in = tape.variables(std::vector<double>{0.0, 0.0, 0.0});
  const auto x = policy_step<ad::Var>(p, params, s, in);
  const ad::Gradient g = tape.backward(x[0]);
  double norm = 0.0;
  for (const ad::Var& v : params) {
    CHECK(std::isfinite(g[v]));
    norm += g[v] * g[v];
  }
  CHECK(norm > 0.0);
}

TEST_CASE("per-step work does not grow with the step index") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(2), 6, 4);
  ad::Tape tape;
  const std::vector<ad::Var> params = tape.variables(p.parameters());
  auto s = initial_state(p, tape);
  std::size_t first = 0;
  for (int step = 0; step < 20; ++step) {
    const std::vector<ad::Var> in = tape.variables(std::vector<double>{0.3, 0.6, -0.2, 1.0});
    const std::size_t before = tape.size();
    policy_step<ad::Var>(p, params, s, in);
    const std::size_t used = tape.size() - before;
    if (step == 0) first = used;
    CHECK(used == first);
  }
}

TEST_CASE("non-finite pre-activations name the gate") {
  LstmPolicy p = zero_policy(1, 2);
  const auto t = p.tensors();
  // Input-gate row 0 weight on y_prev.
  p.parameters()[t[0].offset + 1] = 1e200;
  auto s = initial_state(p);
  const std::vector<double> in = {0.5, 1e200, 1.0};
  try {
    policy_step<double>(p, p.parameters(), s, in);
    FAIL("expected a PolicyError");
  } catch (const PolicyError& e) {
    CHECK(std::string(e.what()).find("input gate") != std::string::npos);
  }

  LstmPolicy q = zero_policy(1, 2);
  const auto tq = q.tensors();
  // Output-gate row for unit 1 (rows 6, 7 are the output gate when H = 2).
  q.parameters()[tq[0].offset + 7 * 5 + 1] = 1e200;
  auto s2 = initial_state(q);
  try {
    policy_step<double>(q, q.parameters(), s2, in);
    FAIL("expected a PolicyError");
  } catch (const PolicyError& e) {
    CHECK(std::string(e.what()).find("output gate") != std::string::npos);
  }

  ad::Tape tape;
  const std::vector<ad::Var> params = tape.variables(p.parameters());
  auto sv = initial_state(p, tape);
  const std::vector<ad::Var> inv = tape.variables(in);
  CHECK_THROWS_AS(policy_step<ad::Var>(p, params, sv, inv), PolicyError);
}

TEST_CASE("size mismatches are rejected") {
  const LstmPolicy p = zero_policy(2, 3);
  auto s = initial_state(p);
  const std::vector<double> short_in = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(policy_step<double>(p, p.parameters(), s, short_in), std::invalid_argument);
  CHECK_THROWS_AS(PolicyOptimizer(p, SearchSpace::unit(3)), std::invalid_argument);
}

TEST_CASE("propose_eval basics") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(2), 8, 5);
  const SearchSpace box = SearchSpace::unit(2);
  const auto one = propose_eval(p, box, 1, bowl);
  REQUIRE(one.size() == 1);
  PolicyOptimizer opt(p, box);
  CHECK(one.evaluations[0].x == opt.propose());

  const auto a = propose_eval(p, box, 30, bowl, 7);
  const auto b = propose_eval(p, box, 30, bowl, 7);
  REQUIRE(a.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(a.evaluations[i].x == b.evaluations[i].x);
    CHECK(a.evaluations[i].y == b.evaluations[i].y);
    for (double v : a.evaluations[i].x) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
  CHECK_THROWS_AS(propose_eval(p, box, 0, bowl), std::invalid_argument);
}

TEST_CASE("o-flag is 0 only for the first proposal") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 5);
  const auto t = propose_eval(p, SearchSpace::unit(1), 6, bowl);
  CHECK(t.o_flags == std::vector<int>{0, 1, 1, 1, 1, 1});
}

TEST_CASE("integer dimensions are rounded but the raw query feeds the network") {
  SearchSpace box;
  box.lower = {0.0, -3.0};
  box.upper = {1.0, 7.0};
  box.integer_mask = {false, true};
  const LstmPolicy p = LstmPolicy::initialized(box, 8, 6);
  PolicyOptimizer opt(p, box);
  for (int i = 0; i < 25; ++i) {
    const auto x = opt.propose();
    CHECK(x[1] == std::round(x[1]));
    CHECK(x[1] >= -3.0);
    CHECK(x[1] <= 7.0);
    const auto raw = box.from_unit(opt.last_unit());
    CHECK(x[1] == std::round(raw[1]));
    CHECK(x[0] == raw[0]);
    opt.observe(x, bowl(x));
  }
}

TEST_CASE("objective failures carry the step index") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 4, 5);
  int calls = 0;
  const Objective failing = [&](std::span<const double>) -> double {
    if (++calls == 4) throw std::runtime_error("boom");
    return 0.0;
  };
  try {
    propose_eval(p, SearchSpace::unit(1), 10, failing);
    FAIL("expected an ObjectiveError");
  } catch (const ObjectiveError& e) {
    CHECK(e.step() == 4);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip reproduces inference bitwise") {
  SearchSpace box;
  box.lower = {-1.0, 0.0};
  box.upper = {2.0, 5.0};
  box.integer_mask = {false, true};
  LstmPolicy p = LstmPolicy::initialized(box, 6, 77);
  p.training_kernel = gp::Kernel{0.25, 1.5, 1e-5};
  p.training_loss = "oi";
  const std::string text = checkpoint_to_string(p);
  const LstmPolicy q = checkpoint_from_string(text);
  CHECK(checkpoint_to_string(q) == text);
  CHECK(q.hidden() == 6);
  CHECK(q.space().lower == box.lower);
  CHECK(q.space().integer_mask == box.integer_mask);
  CHECK(q.training_kernel.length_scale == 0.25);
  CHECK(q.training_loss == "oi");
  const auto params_p = p.parameters();
  const auto params_q = q.parameters();
  CHECK(std::equal(params_p.begin(), params_p.end(), params_q.begin(), params_q.end()));
  const auto a = propose_eval(p, box, 20, bowl);
  const auto b = propose_eval(q, box, 20, bowl);
  for (std::size_t i = 0; i < 20; ++i) CHECK(a.evaluations[i].x == b.evaluations[i].x);
}

TEST_CASE("malformed checkpoints are rejected") {
  const LstmPolicy p = LstmPolicy::initialized(SearchSpace::unit(1), 3, 1);
  std::string text = checkpoint_to_string(p);
  CHECK_THROWS_AS(checkpoint_from_string("not json"), std::runtime_error);
  CHECK_THROWS_AS(checkpoint_from_string("{}"), std::runtime_error);

  std::string wrong_version = text;
  wrong_version.replace(wrong_version.find("\"version\": 1"), 12, "\"version\": 9");
  CHECK_THROWS_AS(checkpoint_from_string(wrong_version), std::runtime_error);

  std::string wrong_hidden = text;
  wrong_hidden.replace(wrong_hidden.find("\"hidden\": 3"), 11, "\"hidden\": 4");
  CHECK_THROWS_AS(checkpoint_from_string(wrong_hidden), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/policy.json"), std::runtime_error);
}

TEST_CASE("observation scaling") {
  CHECK(parse_observation_scaling("raw") == ObservationScaling::Raw);
  CHECK(parse_observation_scaling(to_string(ObservationScaling::Standardized)) ==
        ObservationScaling::Standardized);
  CHECK_THROWS_AS(parse_observation_scaling("zscore"), std::invalid_argument);

  ObservationScaler<double> raw(ObservationScaling::Raw);
  CHECK(raw(3.5) == 3.5);

  // With the zero pseudo-observation of unit variance, the first value y is
  // standardised against mean y/2 and variance (y^2 + 1)/2 - y^2/4.
  ObservationScaler<double> st(ObservationScaling::Standardized);
  const double y = 2.0;
  const double mean = y / 2.0;
  const double var = (y * y + 1.0) / 2.0 - mean * mean;
  CHECK(st(y) == doctest::Approx((y - mean) / std::sqrt(var)).epsilon(1e-14));

  // Scale invariance once the pseudo-observation is negligible.
  ObservationScaler<double> small(ObservationScaling::Standardized);
  ObservationScaler<double> big(ObservationScaling::Standardized);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  double last_small = 0.0;
  double last_big = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double v = n(rng);
    last_small = small(1e3 * v);
    last_big = big(1e6 * v);
  }
  CHECK(last_small == doctest::Approx(last_big).epsilon(1e-6));
}
