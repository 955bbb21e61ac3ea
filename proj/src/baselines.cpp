// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rnnopt {

std::vector<double> halton(std::size_t index, std::size_t dim) {
  static constexpr std::array<unsigned, 16> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19,
                                                       23, 29, 31, 37, 41, 43, 47, 53};
  if (dim > kPrimes.size()) {
    throw std::invalid_argument("halton: at most 16 dimensions");
  }
  std::vector<double> x(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const double base = kPrimes[j];
    double f = 1.0;
    double r = 0.0;
    std::size_t i = index + 1;
    while (i > 0) {
      f /= base;
      r += f * static_cast<double>(i % kPrimes[j]);
      i /= kPrimes[j];
    }
    x[j] = r;
  }
  return x;
}

// --- random search -----------------------------------------------------------

RandomSearchOptimizer::RandomSearchOptimizer(SearchSpace space, std::uint64_t seed)
    : space_(std::move(space)), rng_(seed) {
  space_.validate();
}

std::vector<double> RandomSearchOptimizer::propose() {
  std::vector<double> x(space_.dim());
  for (std::size_t j = 0; j < space_.dim(); ++j) {
    if (space_.integer_mask[j]) {
      x[j] = static_cast<double>(rng_.integer(static_cast<std::int64_t>(space_.lower[j]),
                                              static_cast<std::int64_t>(space_.upper[j])));
    } else {
      x[j] = rng_.uniform(space_.lower[j], space_.upper[j]);
    }
  }
  return x;
}

Trajectory random_search(const SearchSpace& space, const Objective& objective, std::size_t budget,
                         std::uint64_t seed) {
  if (budget == 0) throw std::invalid_argument("random_search: budget must be at least 1");
  RandomSearchOptimizer opt(space, seed);
  return run_sequential(opt, budget, objective);
}

// --- acquisition ---------------------------------------------------------------

namespace {

double ei_at(const gp::GpRegression& model, double best, std::span<const double> x) {
  return gp::expected_improvement(model.at(x), best);
}

// Golden-section maximisation of EI along coordinate j within [lo, hi].
double golden_coordinate(const gp::GpRegression& model, double best, std::vector<double>& x,
                         std::size_t j, double lo, double hi, std::size_t iterations) {
  constexpr double kInvPhi = 0.6180339887498949;
  auto eval = [&](double v) {
    x[j] = v;
    return ei_at(model, best, x);
  };
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  for (std::size_t it = 0; it < iterations; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = eval(d);
    }
  }
  return fc >= fd ? c : d;
}

}  // namespace

AcquisitionResult maximize_ei(const gp::GpRegression& model, double best, RandomStream& rng,
                              const AcquisitionOptions& options) {
  const std::size_t d = model.dim();
  if (options.candidates == 0) throw std::invalid_argument("maximize_ei: need candidates");
  std::vector<double> cand(options.candidates * d);
  std::vector<double> score(options.candidates);
  for (std::size_t i = 0; i < options.candidates; ++i) {
    for (std::size_t j = 0; j < d; ++j) cand[i * d + j] = rng.uniform();
    score[i] = ei_at(model, best, std::span<const double>(cand.data() + i * d, d));
  }
  std::vector<std::size_t> order(options.candidates);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t starts = std::min(options.starts, options.candidates);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(starts), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return score[a] != score[b] ? score[a] > score[b] : a < b;
                    });

  AcquisitionResult result;
  result.best_candidate_ei = score[order[0]];
  result.ei = score[order[0]];
  result.x.assign(cand.begin() + static_cast<std::ptrdiff_t>(order[0] * d),
                  cand.begin() + static_cast<std::ptrdiff_t>((order[0] + 1) * d));

  for (std::size_t s = 0; s < starts; ++s) {
    std::vector<double> x(cand.begin() + static_cast<std::ptrdiff_t>(order[s] * d),
                          cand.begin() + static_cast<std::ptrdiff_t>((order[s] + 1) * d));
    double fx = score[order[s]];
    double radius = 0.5;
    for (std::size_t sweep = 0; sweep < options.sweeps; ++sweep, radius *= 0.5) {
      for (std::size_t j = 0; j < d; ++j) {
        const double keep = x[j];
        const double lo = std::max(0.0, keep - radius);
        const double hi = std::min(1.0, keep + radius);
        const double v = golden_coordinate(model, best, x, j, lo, hi, options.golden_iterations);
        x[j] = v;
        const double fv = ei_at(model, best, x);
        if (fv > fx) {
          fx = fv;
        } else {
          x[j] = keep;
        }
      }
    }
    if (fx > result.ei) {
      result.ei = fx;
      result.x = x;
    }
  }
  return result;
}

// --- GP-EI ---------------------------------------------------------------------

GpEiOptimizer::GpEiOptimizer(SearchSpace space, GpEiOptions options, std::uint64_t seed)
    : space_(std::move(space)), options_(std::move(options)), rng_(seed) {
  space_.validate();
  options_.kernel.validate();
  if (options_.n_init == 0) throw std::invalid_argument("GP-EI: n_init must be at least 1");
  shift_.resize(space_.dim());
  for (double& s : shift_) s = rng_.uniform();
}

std::vector<double> GpEiOptimizer::propose() {
  const std::size_t d = space_.dim();
  const std::size_t n = values_.size();
  std::vector<double> u;
  if (n < options_.n_init) {
    u = halton(n, d);
    for (std::size_t j = 0; j < d; ++j) {
      u[j] += shift_[j];
      if (u[j] >= 1.0) u[j] -= 1.0;
    }
  } else {
    std::vector<double> y = values_;
    if (options_.standardize && n >= 2) {
      const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
      double var = 0.0;
      for (double v : y) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      for (double& v : y) v = (v - mean) / (sd > 0.0 ? sd : 1.0);
    }
    const double best = *std::min_element(y.begin(), y.end());
    const gp::GpRegression model(options_.kernel, d, queries_, std::move(y));
    u = maximize_ei(model, best, rng_, options_.acquisition).x;
  }
  return space_.round(space_.from_unit(u));
}

void GpEiOptimizer::observe(std::span<const double> x, double y) {
  const std::vector<double> u = space_.to_unit(x);
  queries_.insert(queries_.end(), u.begin(), u.end());
  values_.push_back(y);
}

Trajectory gp_ei_optimize(const SearchSpace& space, const Objective& objective, std::size_t budget,
                          const GpEiOptions& options, std::uint64_t seed) {
  if (options.n_init == 0 || budget < options.n_init) {
    throw std::invalid_argument("gp_ei_optimize: need budget >= n_init >= 1");
  }
  GpEiOptimizer opt(space, options, seed);
  return run_sequential(opt, budget, objective);
}

}  // namespace rnnopt
