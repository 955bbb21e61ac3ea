// SPDX-License-Identifier: Apache-2.0
//
// Squared-exponential Gaussian-process prior.
//
// GpSampleFunction draws a function from the prior lazily: the value at the
// t-th query is sampled from its conditional given the t-1 earlier values,
// which amounts to appending one row to the Cholesky factor of the Gram
// matrix (O(t^2) per query, O(T^3) per function).
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnnopt/autodiff.hpp"
#include "rnnopt/random.hpp"

namespace rnnopt::gp {

struct Kernel {
  double length_scale = 0.3;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;

  /// Throws std::invalid_argument unless length_scale > 0, signal_variance > 0
  /// and noise_variance >= 0.
  void validate() const;
};

/// sigma_f^2 * exp(-|x - x'|^2 / (2 l^2)). The noise term is not included; it
/// enters only on the diagonal of Gram matrices.
double kernel_eval(const Kernel& k, std::span<const double> x, std::span<const double> xp);

/// Diagonal jitter tried in turn before a factorisation is declared broken.
inline constexpr std::array<double, 5> kJitterLadder = {1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

/// Below this predictive standard deviation EI falls back to max(best - mu, 0).
inline constexpr double kEiStdFloor = 1e-10;

class CholeskyBreakdown : public std::runtime_error {
 public:
  CholeskyBreakdown(std::size_t first, std::size_t second, const std::string& what)
      : std::runtime_error(what), first_(first), second_(second) {}
  /// Indices of the closest pair of points; `second` may equal the number of
  /// stored points when the offending point is the one being appended.
  std::size_t first() const noexcept { return first_; }
  std::size_t second() const noexcept { return second_; }

 private:
  std::size_t first_;
  std::size_t second_;
};

template <class S>
struct Posterior {
  S mean;
  S variance;  // latent (noise-free) posterior variance
};

template <class S>
struct Draw {
  S value;
  Posterior<S> posterior;  // of the latent function before this draw
};

inline double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}
inline double normal_cdf(double x) noexcept {
  return 0.5 * (1.0 + std::erf(x * (0.5 * std::numbers::sqrt2)));
}

/// Expected improvement E[max(best - Y, 0)] for Y ~ N(mean, variance), for
/// minimisation. Works on plain doubles and on tape variables.
template <class S, class B>
S expected_improvement(const Posterior<S>& p, const B& best) {
  using std::erf;
  using std::exp;
  using std::max;
  using std::sqrt;
  using ad::value_of;
  const double s_value = std::sqrt(std::max(value_of(p.variance), 0.0));
  if (s_value < kEiStdFloor) {
    return max(best - p.mean, 0.0);
  }
  const S s = sqrt(p.variance);
  const S gamma = (best - p.mean) / s;
  const S cdf = 0.5 * (1.0 + erf(gamma * (0.5 * std::numbers::sqrt2)));
  const S pdf = exp(-0.5 * (gamma * gamma)) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  // gamma * cdf + pdf cancels for very negative gamma and can round below 0.
  return max(s * (gamma * cdf + pdf), 0.0);
}

/// GP regression on fixed data with observation noise kernel.noise_variance.
/// The factorisation is computed once; queries cost O(n^2).
class GpRegression {
 public:
  GpRegression(Kernel kernel, std::size_t dim, std::vector<double> queries,
               std::vector<double> values);

  Posterior<double> at(std::span<const double> x) const;
  /// Differentiable with respect to x; the data are constants.
  Posterior<ad::Var> at(std::span<const ad::Var> x) const;
  /// Posterior mean only, O(n).
  double mean(std::span<const double> x) const;

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  double jitter() const noexcept { return jitter_; }
  const Kernel& kernel() const noexcept { return kernel_; }

 private:
  // Exact noiseless hit on a datum; returns its index or size().
  std::size_t exact_hit(std::span<const double> x) const;
  void kernel_vector(std::span<const double> x, std::vector<double>& k) const;

  Kernel kernel_;
  std::size_t dim_;
  std::vector<double> queries_;  // n x dim, row-major
  std::vector<double> values_;
  std::vector<double> chol_;     // n x n lower, row-major
  std::vector<double> alpha_;    // (K + noise I)^-1 y
  double jitter_ = 0.0;
};

/// Convenience wrapper: build a GpRegression for one query.
Posterior<double> posterior_at(const Kernel& kernel, std::size_t dim,
                               std::span<const double> queries,
                               std::span<const double> values, std::span<const double> x);

/// A lazily materialised draw from the GP prior.
///
/// Values are y_t = mu_{t-1}(x_t) + s_{t-1}(x_t) z_t, with z_t read from the
/// function's own normal stream. Re-querying a stored point returns the stored
/// value without drawing.
///
/// With `detach_history` (the default) earlier queries and values are treated
/// as constants on the tape, so only the current query carries gradient.
/// Otherwise the whole conditioning chain is recorded and differentiated; in
/// that mode plain queries are rejected once taped ones have been made.
class GpSampleFunction {
 public:
  GpSampleFunction(Kernel kernel, std::size_t dim, std::uint64_t seed,
                   bool detach_history = true);

  Draw<double> sample(std::span<const double> x);
  Draw<double> sample(std::span<const double> x, double z);
  Draw<ad::Var> sample(std::span<const ad::Var> x);
  Draw<ad::Var> sample(std::span<const ad::Var> x, double z);

  double sample_next(std::span<const double> x) { return sample(x).value; }

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const Kernel& kernel() const noexcept { return kernel_; }
  bool detach_history() const noexcept { return detach_history_; }
  std::span<const double> query(std::size_t i) const {
    return {queries_.data() + i * dim_, dim_};
  }
  std::span<const double> values() const noexcept { return values_; }
  /// Row i of the Cholesky factor (i + 1 entries).
  std::span<const double> chol_row(std::size_t i) const { return chol_.at(i); }
  /// Diagonal jitter used when row i was appended.
  double jitter(std::size_t i) const { return jitters_.at(i); }

  /// max |L L^T - (K + diag(noise + jitter_i))| over all entries.
  double factor_residual() const;

 private:
  struct Conditional {
    std::vector<double> k;     // kernel vector against stored queries
    std::vector<double> l;     // L^-1 k
    double mean = 0.0;         // l . z
    double latent_var = 0.0;   // sf2 - l . l
    double jitter = 0.0;
    double sample_var = 0.0;   // latent_var + noise + jitter
  };

  std::size_t find_stored(std::span<const double> x) const;
  Conditional condition(std::span<const double> x) const;
  void forward_solve(std::vector<double>& l) const;
  std::vector<double> back_solve(std::span<const double> rhs) const;
  void append(std::span<const double> x, const Conditional& c, double z, double value);
  Draw<ad::Var> sample_full(std::span<const ad::Var> x, double z);

  Kernel kernel_;
  std::size_t dim_;
  bool detach_history_;
  RandomStream stream_;

  std::vector<double> queries_;
  std::vector<double> values_;
  std::vector<std::vector<double>> chol_;
  std::vector<double> jitters_;
  std::vector<double> z_;

  // Taped copies of the history when detach_history is off.
  std::vector<ad::Var> query_vars_;
  std::vector<ad::Var> value_vars_;
  std::vector<std::vector<ad::Var>> chol_vars_;
};

}  // namespace rnnopt::gp
