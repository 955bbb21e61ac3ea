// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/benchmarks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "rnnopt/baselines.hpp"
#include "rnnopt/random.hpp"

namespace rnnopt {

// --- closed forms --------------------------------------------------------------

double branin(std::span<const double> x) {
  constexpr double pi = std::numbers::pi;
  const double b = 5.1 / (4.0 * pi * pi);
  const double c = 5.0 / pi;
  const double t = 1.0 / (8.0 * pi);
  const double u = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
  return u * u + 10.0 * (1.0 - t) * std::cos(x[0]) + 10.0;
}

double goldstein_price(std::span<const double> x) {
  const double a = x[0];
  const double b = x[1];
  const double s = a + b + 1.0;
  const double p = 19.0 - 14.0 * a + 3.0 * a * a - 14.0 * b + 6.0 * a * b + 3.0 * b * b;
  const double q = 2.0 * a - 3.0 * b;
  const double r = 18.0 - 32.0 * a + 12.0 * a * a + 48.0 * b - 36.0 * a * b + 27.0 * b * b;
  return (1.0 + s * s * p) * (30.0 + q * q * r);
}

namespace {

constexpr std::array<double, 4> kHartmannAlpha = {1.0, 1.2, 3.0, 3.2};

constexpr double kHartmann3A[4][3] = {
    {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}, {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}};
constexpr double kHartmann3P[4][3] = {{0.3689, 0.1170, 0.2673},
                                      {0.4699, 0.4387, 0.7470},
                                      {0.1091, 0.8732, 0.5547},
                                      {0.0381, 0.5743, 0.8828}};

constexpr double kHartmann6A[4][6] = {{10.0, 3.0, 17.0, 3.5, 1.7, 8.0},
                                      {0.05, 10.0, 17.0, 0.1, 8.0, 14.0},
                                      {3.0, 3.5, 1.7, 10.0, 17.0, 8.0},
                                      {17.0, 8.0, 0.05, 10.0, 0.1, 14.0}};
constexpr double kHartmann6P[4][6] = {{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                                      {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                                      {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                                      {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};

template <std::size_t D>
double hartmann(std::span<const double> x, const double (&a)[4][D], const double (&p)[4][D]) {
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double diff = x[j] - p[i][j];
      inner += a[i][j] * diff * diff;
    }
    total -= kHartmannAlpha[i] * std::exp(-inner);
  }
  return total;
}

}  // namespace

double hartmann3(std::span<const double> x) { return hartmann(x, kHartmann3A, kHartmann3P); }
double hartmann6(std::span<const double> x) { return hartmann(x, kHartmann6A, kHartmann6P); }

const AnalyticBenchmark& benchmark(BenchmarkId id) {
  static const std::array<AnalyticBenchmark, 4> kAll = {
      AnalyticBenchmark{BenchmarkId::Branin, "branin", {-5.0, 0.0}, {10.0, 15.0}, 0.397887,
                        &branin},
      AnalyticBenchmark{BenchmarkId::GoldsteinPrice, "goldstein_price", {-2.0, -2.0}, {2.0, 2.0},
                        3.0, &goldstein_price},
      AnalyticBenchmark{BenchmarkId::Hartmann3, "hartmann3", {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0},
                        -3.86278, &hartmann3},
      AnalyticBenchmark{BenchmarkId::Hartmann6, "hartmann6", std::vector<double>(6, 0.0),
                        std::vector<double>(6, 1.0), -3.32237, &hartmann6},
  };
  return kAll.at(static_cast<std::size_t>(id));
}

BenchmarkId parse_benchmark(const std::string& name) {
  for (BenchmarkId id : {BenchmarkId::Branin, BenchmarkId::GoldsteinPrice, BenchmarkId::Hartmann3,
                         BenchmarkId::Hartmann6}) {
    if (benchmark(id).name == name) return id;
  }
  throw std::invalid_argument("unknown benchmark '" + name +
                              "' (expected branin, goldstein_price, hartmann3 or hartmann6)");
}

// --- perturbations -------------------------------------------------------------

PerturbedInstance PerturbedInstance::identity(BenchmarkId id) {
  const std::size_t d = benchmark(id).dim();
  PerturbedInstance p;
  p.base = id;
  p.translation.assign(d, 0.0);
  p.scale.assign(d, 1.0);
  p.flip.assign(d, false);
  p.permutation.resize(d);
  for (std::size_t j = 0; j < d; ++j) p.permutation[j] = j;
  return p;
}

PerturbedInstance PerturbedInstance::random(BenchmarkId id, std::uint64_t seed) {
  PerturbedInstance p = identity(id);
  RandomStream rng(seed);
  const std::size_t d = p.dim();
  for (std::size_t j = 0; j < d; ++j) {
    p.translation[j] = rng.uniform(-0.1, 0.1);
    p.scale[j] = rng.uniform(0.9, 1.1);
    p.flip[j] = rng.uniform() < 0.5;
  }
  for (std::size_t j = d; j > 1; --j) {
    const auto k = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(j) - 1));
    std::swap(p.permutation[j - 1], p.permutation[k]);
  }
  return p;
}

void PerturbedInstance::validate() const {
  const std::size_t d = benchmark(base).dim();
  if (translation.size() != d || scale.size() != d || flip.size() != d ||
      permutation.size() != d) {
    throw std::invalid_argument("perturbed instance: field sizes do not match the benchmark");
  }
  std::vector<bool> seen(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    if (!(std::abs(translation[j]) < 0.1) && translation[j] != 0.0) {
      throw std::invalid_argument("perturbed instance: translation outside (-0.1, 0.1)");
    }
    if (!(scale[j] > 0.9 && scale[j] < 1.1) && scale[j] != 1.0) {
      throw std::invalid_argument("perturbed instance: scale outside (0.9, 1.1)");
    }
    if (permutation[j] >= d || seen[permutation[j]]) {
      throw std::invalid_argument("perturbed instance: invalid permutation");
    }
    seen[permutation[j]] = true;
  }
}

std::vector<double> PerturbedInstance::to_native(std::span<const double> u) const {
  const AnalyticBenchmark& b = benchmark(base);
  const std::size_t d = dim();
  if (u.size() != d) {
    throw std::invalid_argument("perturbed instance: expected a " + std::to_string(d) +
                                "-dimensional point");
  }
  std::vector<double> z(d);
  for (std::size_t j = 0; j < d; ++j) {
    double v = u[permutation[j]];
    if (flip[j]) v = 1.0 - v;
    z[j] = b.lower[j] + (b.upper[j] - b.lower[j]) * (scale[j] * (v - 0.5) + 0.5 + translation[j]);
  }
  return z;
}

double PerturbedInstance::operator()(std::span<const double> u) const {
  return benchmark(base).evaluate(to_native(u));
}

double eval_benchmark(const PerturbedInstance& instance, std::span<const double> u) {
  return instance(u);
}

// --- repellers -----------------------------------------------------------------

SearchSpace repeller_space(const RepellerConfig& c) {
  SearchSpace s;
  for (std::size_t r = 0; r < c.repellers; ++r) {
    s.lower.insert(s.lower.end(), {c.x_range[0], c.y_range[0], c.strength_range[0]});
    s.upper.insert(s.upper.end(), {c.x_range[1], c.y_range[1], c.strength_range[1]});
  }
  s.integer_mask.assign(s.lower.size(), false);
  return s;
}

double simulate_repellers(std::span<const double> params, const RepellerConfig& c,
                          std::vector<std::array<double, 2>>* path) {
  if (params.size() != c.dim()) {
    throw std::invalid_argument("repellers: expected " + std::to_string(c.dim()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  const double floor_sq = c.floor * c.floor;
  double px = c.start[0];
  double py = c.start[1];
  double vx = c.velocity[0];
  double vy = c.velocity[1];
  double loss = 0.0;
  double weight = 1.0;
  if (path) {
    path->clear();
    path->reserve(c.steps);
  }
  for (std::size_t n = 0; n < c.steps; ++n) {
    double ax = 0.0;
    double ay = c.gravity;
    for (std::size_t r = 0; r < c.repellers; ++r) {
      const double dx = px - params[3 * r];
      const double dy = py - params[3 * r + 1];
      const double inv = params[3 * r + 2] / std::max(dx * dx + dy * dy, floor_sq);
      ax += inv * dx;
      ay += inv * dy;
    }
    px += c.dt * vx;
    py += c.dt * vy;
    vx += c.dt * ax;
    vy += c.dt * ay;
    if (path) path->push_back({px, py});
    double reward = 0.0;
    for (const RewardBump& g : c.reward) {
      const double dx = px - g.cx;
      const double dy = py - g.cy;
      reward += g.weight * std::exp(-(dx * dx + dy * dy) / (2.0 * g.sigma * g.sigma));
    }
    loss -= weight * reward;
    weight *= c.discount;
  }
  return loss;
}

RepellerConfig mirror_config(const RepellerConfig& config) {
  RepellerConfig m = config;
  m.start[0] = -m.start[0];
  m.velocity[0] = -m.velocity[0];
  for (RewardBump& g : m.reward) g.cx = -g.cx;
  m.x_range = {-config.x_range[1], -config.x_range[0]};
  return m;
}

std::vector<double> mirror_repeller_params(std::span<const double> params) {
  std::vector<double> m(params.begin(), params.end());
  for (std::size_t r = 0; 3 * r < m.size(); ++r) m[3 * r] = -m[3 * r];
  return m;
}

// --- tabular -------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw std::runtime_error(where + ": '" + text + "' is not a finite number");
  }
  return v;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

TabularObjective TabularObjective::parse(std::istream& in, const std::string& source) {
  TabularObjective t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!blank(line)) break;
  }
  if (blank(line)) throw std::runtime_error(source + ": empty file");
  const std::vector<std::string> header = split_csv(line);
  if (header.size() < 2) {
    throw std::runtime_error(source + ":" + std::to_string(line_no) +
                             ": header needs at least one parameter and the objective column");
  }
  const std::size_t d = header.size() - 1;
  t.names_.assign(header.begin(), header.end() - 1);

  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> row_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const std::vector<std::string> cells = split_csv(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw std::runtime_error(where + ": expected " + std::to_string(header.size()) +
                               " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) row[j] = parse_number(cells[j], where);
    rows.push_back(std::move(row));
    row_lines.push_back(line_no);
  }
  if (rows.empty()) throw std::runtime_error(source + ": no data rows");

  t.grid_.assign(d, {});
  for (std::size_t j = 0; j < d; ++j) {
    for (const auto& r : rows) t.grid_[j].push_back(r[j]);
    std::sort(t.grid_[j].begin(), t.grid_[j].end());
    t.grid_[j].erase(std::unique(t.grid_[j].begin(), t.grid_[j].end()), t.grid_[j].end());
  }
  std::size_t cells = 1;
  for (const auto& g : t.grid_) cells *= g.size();
  t.values_.assign(cells, 0.0);
  std::vector<bool> filled(cells, false);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t flat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const auto& g = t.grid_[j];
      flat = flat * g.size() +
             static_cast<std::size_t>(std::lower_bound(g.begin(), g.end(), rows[i][j]) - g.begin());
    }
    if (filled[flat]) {
      throw std::runtime_error(source + ":" + std::to_string(row_lines[i]) +
                               ": duplicate grid point");
    }
    filled[flat] = true;
    t.values_[flat] = rows[i][d];
  }
  for (std::size_t flat = 0; flat < cells; ++flat) {
    if (filled[flat]) continue;
    std::string missing;
    std::size_t rest = flat;
    std::vector<double> point(d);
    for (std::size_t j = d; j-- > 0;) {
      point[j] = t.grid_[j][rest % t.grid_[j].size()];
      rest /= t.grid_[j].size();
    }
    for (std::size_t j = 0; j < d; ++j) {
      missing += (j ? ", " : "") + t.names_[j] + "=" + std::to_string(point[j]);
    }
    throw std::runtime_error(source + ":" + std::to_string(line_no) +
                             ": incomplete grid, no row for (" + missing + ")");
  }
  return t;
}

SearchSpace TabularObjective::space() const {
  SearchSpace s;
  for (const auto& g : grid_) {
    s.lower.push_back(g.front());
    // A single-valued dimension still needs a non-empty box.
    s.upper.push_back(g.size() > 1 ? g.back() : g.front() + 1.0);
  }
  s.integer_mask.assign(grid_.size(), false);
  return s;
}

std::size_t TabularObjective::nearest(std::size_t j, double v) const {
  const auto& g = grid_.at(j);
  const auto it = std::lower_bound(g.begin(), g.end(), v);
  if (it == g.begin()) return 0;
  if (it == g.end()) return g.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - g.begin());
  const std::size_t lo = hi - 1;
  return (v - g[lo] <= g[hi] - v) ? lo : hi;
}

double TabularObjective::operator()(std::span<const double> x) const {
  if (x.size() != dim()) {
    throw std::invalid_argument("tabular objective: expected " + std::to_string(dim()) +
                                " coordinates");
  }
  std::size_t flat = 0;
  for (std::size_t j = 0; j < dim(); ++j) flat = flat * grid_[j].size() + nearest(j, x[j]);
  return values_[flat];
}

TabularObjective load_tabular(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tabular objective " + path.string());
  return TabularObjective::parse(in, path.string());
}

double eval_tabular(const TabularObjective& objective, std::span<const double> x) {
  return objective(x);
}

// --- frozen GP samples ---------------------------------------------------------

std::vector<double> frozen_gp_anchors(std::size_t dim) {
  std::vector<double> a;
  if (dim == 1) {
    for (std::size_t i = 0; i < 256; ++i) a.push_back(static_cast<double>(i) / 255.0);
  } else if (dim == 2) {
    for (std::size_t i = 0; i < 24; ++i) {
      for (std::size_t j = 0; j < 24; ++j) {
        a.push_back(static_cast<double>(i) / 23.0);
        a.push_back(static_cast<double>(j) / 23.0);
      }
    }
  } else {
    for (std::size_t i = 0; i < 512; ++i) {
      const auto h = halton(i, dim);
      a.insert(a.end(), h.begin(), h.end());
    }
  }
  return a;
}

FrozenGpSample::FrozenGpSample(gp::Kernel kernel, std::size_t dim, std::uint64_t seed) {
  std::vector<double> anchors = frozen_gp_anchors(dim);
  const std::size_t n = anchors.size() / dim;
  gp::GpSampleFunction draw(kernel, dim, seed);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = draw.sample(std::span<const double>(anchors.data() + i * dim, dim)).value;
  }
  anchor_min_ = *std::min_element(values.begin(), values.end());
  model_ = std::make_shared<const gp::GpRegression>(kernel, dim, std::move(anchors),
                                                    std::move(values));
}

}  // namespace rnnopt
