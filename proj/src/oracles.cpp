// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace rnnopt::oracle {

std::vector<double> central_difference(const ScalarFn& f, std::span<const double> x, double h) {
  std::vector<double> p(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(p);
    p[i] = keep - h;
    const double down = f(p);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

namespace {

double se(const gp::Kernel& k, std::span<const double> a, std::span<const double> b) {
  double r2 = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) r2 += (a[j] - b[j]) * (a[j] - b[j]);
  return k.signal_variance * std::exp(-r2 / (2.0 * k.length_scale * k.length_scale));
}

std::vector<double> dense_cholesky(std::vector<double> a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t m = 0; m < j; ++m) d -= a[j * n + m] * a[j * n + m];
    if (!(d > 0.0)) throw std::runtime_error("oracle: matrix not positive definite");
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t m = 0; m < j; ++m) s -= a[i * n + m] * a[j * n + m];
      a[i * n + j] = s / ljj;
    }
    for (std::size_t i = 0; i < j; ++i) a[i * n + j] = 0.0;
  }
  return a;
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
std::vector<double> solve(std::vector<double> a, std::vector<double> b, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    }
    if (a[piv * n + c] == 0.0) throw std::runtime_error("oracle: singular system");
    if (piv != c) {
      for (std::size_t m = 0; m < n; ++m) std::swap(a[c * n + m], a[piv * n + m]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t m = c; m < n; ++m) a[r * n + m] -= f * a[c * n + m];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t m = r + 1; m < n; ++m) s -= a[r * n + m] * x[m];
    x[r] = s / a[r * n + r];
  }
  return x;
}

}  // namespace

std::vector<double> gram(const gp::Kernel& k, std::size_t dim, std::span<const double> points,
                         double diagonal) {
  const std::size_t n = points.size() / dim;
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      g[i * n + j] = se(k, points.subspan(i * dim, dim), points.subspan(j * dim, dim));
    }
    g[i * n + i] += diagonal;
  }
  return g;
}

std::vector<double> joint_sample(const gp::Kernel& k, std::size_t dim,
                                 std::span<const double> points, std::span<const double> z,
                                 double diagonal) {
  const std::size_t n = points.size() / dim;
  const std::vector<double> l = dense_cholesky(gram(k, dim, points, diagonal), n);
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m <= i; ++m) y[i] += l[i * n + m] * z[m];
  }
  return y;
}

gp::Posterior<double> dense_posterior(const gp::Kernel& k, std::size_t dim,
                                      std::span<const double> data, std::span<const double> values,
                                      std::span<const double> x) {
  const std::size_t n = values.size();
  if (n == 0) return {0.0, k.signal_variance};
  const std::vector<double> a = gram(k, dim, data, k.noise_variance);
  std::vector<double> kx(n);
  for (std::size_t i = 0; i < n; ++i) kx[i] = se(k, data.subspan(i * dim, dim), x);
  const std::vector<double> alpha = solve(a, std::vector<double>(values.begin(), values.end()), n);
  const std::vector<double> beta = solve(a, kx, n);
  double mean = 0.0;
  double reduce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += kx[i] * alpha[i];
    reduce += kx[i] * beta[i];
  }
  return {mean, k.signal_variance - reduce};
}

McEstimate mc_expected_improvement(double mu, double s, double best, std::size_t draws,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double v = std::max(best - (mu + s * normal(rng)), 0.0);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = std::max(sum_sq / n - mean * mean, 0.0) * n / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

Minimum grid_minimize(const ScalarFn& f, std::span<const double> lower,
                      std::span<const double> upper, std::size_t per_dim, std::size_t starts,
                      double tol) {
  const std::size_t d = lower.size();
  if (per_dim < 2) throw std::invalid_argument("grid_minimize: need at least 2 points per dim");
  std::size_t total = 1;
  for (std::size_t j = 0; j < d; ++j) total *= per_dim;

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(total);
  std::vector<double> x(d);
  auto grid_point = [&](std::size_t flat, std::vector<double>& out) {
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = flat % per_dim;
      flat /= per_dim;
      out[j] = lower[j] + (upper[j] - lower[j]) * static_cast<double>(i) /
                              static_cast<double>(per_dim - 1);
    }
  };
  for (std::size_t flat = 0; flat < total; ++flat) {
    grid_point(flat, x);
    scored.emplace_back(f(x), flat);
  }
  starts = std::min(starts, total);
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(starts),
                    scored.end());

  Minimum best;
  best.value = scored[0].first;
  best.x.resize(d);
  grid_point(scored[0].second, best.x);
  for (std::size_t s = 0; s < starts; ++s) {
    grid_point(scored[s].second, x);
    double fx = scored[s].first;
    std::vector<double> step(d);
    for (std::size_t j = 0; j < d; ++j) {
      step[j] = (upper[j] - lower[j]) / static_cast<double>(per_dim - 1);
    }
    double rel = 1.0 / static_cast<double>(per_dim - 1);
    while (rel > tol) {
      bool moved = false;
      for (std::size_t j = 0; j < d; ++j) {
        for (double sign : {1.0, -1.0}) {
          const double keep = x[j];
          x[j] = std::clamp(keep + sign * step[j], lower[j], upper[j]);
          const double fy = f(x);
          if (fy < fx) {
            fx = fy;
            moved = true;
            break;
          }
          x[j] = keep;
        }
      }
      if (!moved) {
        for (double& st : step) st *= 0.5;
        rel *= 0.5;
      }
    }
    if (fx < best.value) {
      best.value = fx;
      best.x = x;
    }
  }
  return best;
}

}  // namespace rnnopt::oracle
