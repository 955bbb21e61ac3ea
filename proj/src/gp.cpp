// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/gp.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace rnnopt::gp {

using ad::Var;

void Kernel::validate() const {
  if (!(length_scale > 0.0) || !std::isfinite(length_scale)) {
    throw std::invalid_argument("kernel: length_scale must be positive");
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw std::invalid_argument("kernel: signal_variance must be positive");
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw std::invalid_argument("kernel: noise_variance must be non-negative");
  }
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double r2 = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    r2 += d * d;
  }
  return r2;
}

double se(const Kernel& k, std::span<const double> a, std::span<const double> b) {
  return k.signal_variance *
         std::exp(-squared_distance(a, b) / (2.0 * k.length_scale * k.length_scale));
}

// Partials of k(x, X_i) with respect to x, given its value.
void se_gradient(const Kernel& k, std::span<const double> x, std::span<const double> xi,
                 double value, std::span<double> out) {
  const double inv_l2 = 1.0 / (k.length_scale * k.length_scale);
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[j] = -value * (x[j] - xi[j]) * inv_l2;
  }
}

std::vector<double> values_of(std::span<const Var> x) {
  std::vector<double> v(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    v[j] = x[j].value();
  }
  return v;
}

// Closest pair among `n` points of dimension `dim` (row-major).
std::pair<std::size_t, std::size_t> closest_pair(std::span<const double> pts, std::size_t dim) {
  const std::size_t n = dim == 0 ? 0 : pts.size() / dim;
  std::pair<std::size_t, std::size_t> best{0, 0};
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = squared_distance(pts.subspan(i * dim, dim), pts.subspan(j * dim, dim));
      if (d < best_d) {
        best_d = d;
        best = {i, j};
      }
    }
  }
  return best;
}

std::string format_point(std::span<const double> p) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t j = 0; j < p.size(); ++j) {
    os << (j ? ", " : "") << p[j];
  }
  os << ')';
  return os.str();
}

}  // namespace

double kernel_eval(const Kernel& k, std::span<const double> x, std::span<const double> xp) {
  if (x.size() != xp.size()) {
    throw std::invalid_argument("kernel_eval: dimension mismatch");
  }
  return se(k, x, xp);
}

// --- GpRegression ------------------------------------------------------------

GpRegression::GpRegression(Kernel kernel, std::size_t dim, std::vector<double> queries,
                           std::vector<double> values)
    : kernel_(kernel), dim_(dim), queries_(std::move(queries)), values_(std::move(values)) {
  kernel_.validate();
  if (dim_ == 0) {
    throw std::invalid_argument("GpRegression: dimension must be positive");
  }
  if (queries_.size() != values_.size() * dim_) {
    throw std::invalid_argument("GpRegression: queries/values size mismatch");
  }
  const std::size_t n = values_.size();
  std::vector<double> gram(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      gram[i * n + j] = se(kernel_, std::span(queries_).subspan(i * dim_, dim_),
                           std::span(queries_).subspan(j * dim_, dim_));
    }
  }
  bool ok = n == 0;
  for (double jitter : kJitterLadder) {
    if (ok) break;
    chol_.assign(n * n, 0.0);
    ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = gram[i * n + j];
        if (i == j) s += kernel_.noise_variance + jitter;
        for (std::size_t m = 0; m < j; ++m) {
          s -= chol_[i * n + m] * chol_[j * n + m];
        }
        if (i == j) {
          if (!(s > 0.5 * jitter)) {
            ok = false;
            break;
          }
          chol_[i * n + i] = std::sqrt(s);
        } else {
          chol_[i * n + j] = s / chol_[j * n + j];
        }
      }
    }
    jitter_ = jitter;
  }
  if (!ok) {
    const auto [a, b] = closest_pair(queries_, dim_);
    throw CholeskyBreakdown(a, b,
                            "GP Gram matrix not positive definite after jitter; closest points " +
                                std::to_string(a) + " " +
                                format_point(std::span(queries_).subspan(a * dim_, dim_)) +
                                " and " + std::to_string(b) + " " +
                                format_point(std::span(queries_).subspan(b * dim_, dim_)));
  }
  // alpha = L^-T L^-1 y
  alpha_ = values_;
  for (std::size_t i = 0; i < n; ++i) {
    double s = alpha_[i];
    for (std::size_t m = 0; m < i; ++m) s -= chol_[i * n + m] * alpha_[m];
    alpha_[i] = s / chol_[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = alpha_[i];
    for (std::size_t m = i + 1; m < n; ++m) s -= chol_[m * n + i] * alpha_[m];
    alpha_[i] = s / chol_[i * n + i];
  }
}

std::size_t GpRegression::exact_hit(std::span<const double> x) const {
  if (kernel_.noise_variance != 0.0) {
    return size();
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (std::equal(x.begin(), x.end(), queries_.begin() + static_cast<std::ptrdiff_t>(i * dim_))) {
      return i;
    }
  }
  return size();
}

void GpRegression::kernel_vector(std::span<const double> x, std::vector<double>& k) const {
  k.resize(size());
  for (std::size_t i = 0; i < size(); ++i) {
    k[i] = se(kernel_, x, std::span(queries_).subspan(i * dim_, dim_));
  }
}

Posterior<double> GpRegression::at(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw std::invalid_argument("GpRegression::at: dimension mismatch");
  }
  if (const std::size_t hit = exact_hit(x); hit < size()) {
    return {values_[hit], 0.0};
  }
  const std::size_t n = size();
  thread_local std::vector<double> k;
  kernel_vector(x, k);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += k[i] * alpha_[i];
  double vv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = k[i];
    const double* row = chol_.data() + i * n;
    for (std::size_t m = 0; m < i; ++m) s -= row[m] * k[m];
    k[i] = s / row[i];  // k now holds v = L^-1 k in its prefix
    vv += k[i] * k[i];
  }
  return {mean, std::max(kernel_.signal_variance - vv, 0.0)};
}

double GpRegression::mean(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw std::invalid_argument("GpRegression::mean: dimension mismatch");
  }
  if (const std::size_t hit = exact_hit(x); hit < size()) {
    return values_[hit];
  }
  thread_local std::vector<double> k;
  kernel_vector(x, k);
  double mean = 0.0;
  for (std::size_t i = 0; i < size(); ++i) mean += k[i] * alpha_[i];
  return mean;
}

Posterior<Var> GpRegression::at(std::span<const Var> x) const {
  if (x.size() != dim_) {
    throw std::invalid_argument("GpRegression::at: dimension mismatch");
  }
  ad::Tape& tape = *x[0].tape();
  const std::vector<double> xv = values_of(x);
  if (const std::size_t hit = exact_hit(xv); hit < size()) {
    return {tape.variable(values_[hit]), tape.variable(0.0)};
  }
  const std::size_t n = size();
  std::vector<double> k;
  kernel_vector(xv, k);
  std::vector<Var> kv(n);
  std::vector<double> grad(dim_);
  for (std::size_t i = 0; i < n; ++i) {
    se_gradient(kernel_, xv, std::span(queries_).subspan(i * dim_, dim_), k[i], grad);
    kv[i] = tape.custom(k[i], x, grad);
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += k[i] * alpha_[i];
  std::vector<double> v(n);
  double vv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = k[i];
    for (std::size_t m = 0; m < i; ++m) s -= chol_[i * n + m] * v[m];
    v[i] = s / chol_[i * n + i];
    vv += v[i] * v[i];
  }
  // d(var)/dk = -2 L^-T v
  std::vector<double> w = v;
  for (std::size_t i = n; i-- > 0;) {
    double s = w[i];
    for (std::size_t m = i + 1; m < n; ++m) s -= chol_[m * n + i] * w[m];
    w[i] = s / chol_[i * n + i];
  }
  for (double& wi : w) wi *= -2.0;
  const Var mu = tape.custom(mean, kv, alpha_);
  const Var var = tape.custom(kernel_.signal_variance - vv, kv, w);
  return {mu, ad::max(var, 0.0)};
}

Posterior<double> posterior_at(const Kernel& kernel, std::size_t dim,
                               std::span<const double> queries,
                               std::span<const double> values, std::span<const double> x) {
  GpRegression reg(kernel, dim, std::vector<double>(queries.begin(), queries.end()),
                   std::vector<double>(values.begin(), values.end()));
  return reg.at(x);
}

// --- GpSampleFunction -------------------------------------------------------

GpSampleFunction::GpSampleFunction(Kernel kernel, std::size_t dim, std::uint64_t seed,
                                   bool detach_history)
    : kernel_(kernel), dim_(dim), detach_history_(detach_history), stream_(seed) {
  kernel_.validate();
  if (dim_ == 0) {
    throw std::invalid_argument("GpSampleFunction: dimension must be positive");
  }
}

std::size_t GpSampleFunction::find_stored(std::span<const double> x) const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (std::equal(x.begin(), x.end(), queries_.begin() + static_cast<std::ptrdiff_t>(i * dim_))) {
      return i;
    }
  }
  return size();
}

void GpSampleFunction::forward_solve(std::vector<double>& l) const {
  for (std::size_t i = 0; i < l.size(); ++i) {
    const std::vector<double>& row = chol_[i];
    double s = l[i];
    for (std::size_t j = 0; j < i; ++j) s -= row[j] * l[j];
    l[i] = s / row[i];
  }
}

std::vector<double> GpSampleFunction::back_solve(std::span<const double> rhs) const {
  std::vector<double> w(rhs.begin(), rhs.end());
  for (std::size_t i = w.size(); i-- > 0;) {
    double s = w[i];
    for (std::size_t m = i + 1; m < w.size(); ++m) s -= chol_[m][i] * w[m];
    w[i] = s / chol_[i][i];
  }
  return w;
}

GpSampleFunction::Conditional GpSampleFunction::condition(std::span<const double> x) const {
  const std::size_t n = size();
  Conditional c;
  c.k.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.k[i] = se(kernel_, x, query(i));
  }
  c.l = c.k;
  forward_solve(c.l);
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) ll += c.l[i] * c.l[i];
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += z_[i] * c.l[i];
  c.mean = mean;
  c.latent_var = kernel_.signal_variance - ll;
  for (double jitter : kJitterLadder) {
    c.jitter = jitter;
    c.sample_var = c.latent_var + (kernel_.noise_variance + jitter);
    if (c.sample_var > 0.5 * jitter) {
      return c;
    }
  }
  std::size_t nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = squared_distance(x, query(i));
    if (d < best) {
      best = d;
      nearest = i;
    }
  }
  throw CholeskyBreakdown(nearest, n,
                          "GP sample: conditional variance not positive after jitter; query " +
                              format_point(x) + " nearly duplicates stored point " +
                              std::to_string(nearest) + " " + format_point(query(nearest)));
}

void GpSampleFunction::append(std::span<const double> x, const Conditional& c, double z,
                              double value) {
  queries_.insert(queries_.end(), x.begin(), x.end());
  values_.push_back(value);
  std::vector<double> row = c.l;
  row.push_back(std::sqrt(c.sample_var));
  chol_.push_back(std::move(row));
  jitters_.push_back(c.jitter);
  z_.push_back(z);
}

Draw<double> GpSampleFunction::sample(std::span<const double> x) {
  if (x.size() != dim_) {
    throw std::invalid_argument("GpSampleFunction: dimension mismatch");
  }
  if (const std::size_t hit = find_stored(x); hit < size()) {
    return {values_[hit], {values_[hit], 0.0}};
  }
  return sample(x, stream_.normal());
}

Draw<double> GpSampleFunction::sample(std::span<const double> x, double z) {
  if (x.size() != dim_) {
    throw std::invalid_argument("GpSampleFunction: dimension mismatch");
  }
  if (!detach_history_ && !query_vars_.empty()) {
    throw std::logic_error("GpSampleFunction: full-history mode requires taped queries");
  }
  if (const std::size_t hit = find_stored(x); hit < size()) {
    return {values_[hit], {values_[hit], 0.0}};
  }
  const Conditional c = condition(x);
  const double value = c.mean + std::sqrt(c.sample_var) * z;
  append(x, c, z, value);
  return {value, {c.mean, std::max(c.latent_var, 0.0)}};
}

Draw<Var> GpSampleFunction::sample(std::span<const Var> x) {
  if (x.size() != dim_) {
    throw std::invalid_argument("GpSampleFunction: dimension mismatch");
  }
  const std::vector<double> xv = values_of(x);
  if (find_stored(xv) < size()) {
    return sample(x, 0.0);  // memo hit, z unused
  }
  return sample(x, stream_.normal());
}

Draw<Var> GpSampleFunction::sample(std::span<const Var> x, double z) {
  if (x.size() != dim_) {
    throw std::invalid_argument("GpSampleFunction: dimension mismatch");
  }
  if (!detach_history_) {
    return sample_full(x, z);
  }
  ad::Tape& tape = *x[0].tape();
  const std::vector<double> xv = values_of(x);
  if (const std::size_t hit = find_stored(xv); hit < size()) {
    const Var v = tape.variable(values_[hit]);
    return {v, {v, tape.variable(0.0)}};
  }
  const std::size_t n = size();
  const Conditional c = condition(xv);

  std::vector<Var> kv(n);
  std::vector<double> grad(dim_);
  for (std::size_t i = 0; i < n; ++i) {
    se_gradient(kernel_, xv, query(i), c.k[i], grad);
    kv[i] = tape.custom(c.k[i], x, grad);
  }
  // mean = k^T L^-T z, latent = sf2 - k^T L^-T L^-1 k
  const std::vector<double> alpha = back_solve(std::span(z_).first(n));
  std::vector<double> beta = back_solve(c.l);
  for (double& b : beta) b *= -2.0;
  const Var mean = tape.custom(c.mean, kv, alpha);
  const Var latent = tape.custom(c.latent_var, kv, beta);
  const Var sample_var = latent + (kernel_.noise_variance + c.jitter);
  const Var value = mean + ad::sqrt(sample_var) * z;

  append(xv, c, z, value.value());
  return {value, {mean, ad::max(latent, 0.0)}};
}

Draw<Var> GpSampleFunction::sample_full(std::span<const Var> x, double z) {
  if (query_vars_.size() != queries_.size()) {
    throw std::logic_error("GpSampleFunction: full-history mode requires taped queries");
  }
  ad::Tape& tape = *x[0].tape();
  const std::vector<double> xv = values_of(x);
  if (const std::size_t hit = find_stored(xv); hit < size()) {
    return {value_vars_[hit], {value_vars_[hit], tape.variable(0.0)}};
  }
  const std::size_t n = size();
  const Conditional c = condition(xv);
  const double inv_l2 = 1.0 / (kernel_.length_scale * kernel_.length_scale);

  std::vector<Var> operands;
  std::vector<double> partials;
  std::vector<Var> lv(n);
  for (std::size_t i = 0; i < n; ++i) {
    // k_i = k(x, X_i), both sides on the tape
    operands.clear();
    partials.clear();
    for (std::size_t j = 0; j < dim_; ++j) {
      const double g = -c.k[i] * (xv[j] - queries_[i * dim_ + j]) * inv_l2;
      operands.push_back(x[j]);
      partials.push_back(g);
      operands.push_back(query_vars_[i * dim_ + j]);
      partials.push_back(-g);
    }
    const Var ki = tape.custom(c.k[i], operands, partials);

    // l_i = (k_i - sum_j L_ij l_j) / L_ii
    const std::vector<Var>& row = chol_vars_[i];
    const double lii = chol_[i][i];
    operands.clear();
    partials.clear();
    operands.push_back(ki);
    partials.push_back(1.0 / lii);
    for (std::size_t j = 0; j < i; ++j) {
      operands.push_back(row[j]);
      partials.push_back(-c.l[j] / lii);
      operands.push_back(lv[j]);
      partials.push_back(-chol_[i][j] / lii);
    }
    operands.push_back(row[i]);
    partials.push_back(-c.l[i] / lii);
    lv[i] = tape.custom(c.l[i], operands, partials);
  }
  const Var ll = tape.dot(0.0, lv, lv);
  const Var latent = kernel_.signal_variance - ll;
  const Var sample_var = latent + (kernel_.noise_variance + c.jitter);
  const Var diag = ad::sqrt(sample_var);
  const Var mean = tape.linear(0.0, std::span(z_).first(n), lv);
  const Var value = mean + diag * z;

  append(xv, c, z, value.value());
  query_vars_.insert(query_vars_.end(), x.begin(), x.end());
  value_vars_.push_back(value);
  lv.push_back(diag);
  chol_vars_.push_back(std::move(lv));
  return {value, {mean, ad::max(latent, 0.0)}};
}

double GpSampleFunction::factor_residual() const {
  const std::size_t n = size();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t m = 0; m <= j; ++m) s += chol_[i][m] * chol_[j][m];
      double target = se(kernel_, query(i), query(j));
      if (i == j) target += kernel_.noise_variance + jitters_[i];
      worst = std::max(worst, std::abs(s - target));
    }
  }
  return worst;
}

}  // namespace rnnopt::gp
