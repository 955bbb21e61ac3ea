// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rnnopt/random.hpp"
#include "rnnopt/thread_pool.hpp"

namespace rnnopt {

// --- objectives ----------------------------------------------------------------

ObjectiveFamily ObjectiveFamily::parse(const std::string& name, std::size_t gp_dim) {
  ObjectiveFamily f;
  f.name = name;
  if (name == "gp") {
    if (gp_dim == 0) throw std::invalid_argument("gp objective: dimension must be at least 1");
    f.kind = FamilyKind::Gp;
    f.dim = gp_dim;
  } else if (name == "repeller") {
    f.kind = FamilyKind::Repeller;
  } else {
    f.kind = FamilyKind::Benchmark;
    f.benchmark = parse_benchmark(name);
  }
  return f;
}

ObjectiveFamily ObjectiveFamily::tabular(std::shared_ptr<const TabularObjective> table) {
  ObjectiveFamily f;
  f.kind = FamilyKind::Tabular;
  f.name = "tabular";
  f.table = std::move(table);
  return f;
}

ObjectiveInstance make_instance(const ObjectiveFamily& family, std::uint64_t seed) {
  switch (family.kind) {
    case FamilyKind::Gp: {
      auto f = std::make_shared<const FrozenGpSample>(family.kernel, family.dim, seed);
      return {SearchSpace::unit(family.dim), [f](std::span<const double> x) { return (*f)(x); }};
    }
    case FamilyKind::Benchmark: {
      const PerturbedInstance p = family.perturb ? PerturbedInstance::random(family.benchmark, seed)
                                                 : PerturbedInstance::identity(family.benchmark);
      return {SearchSpace::unit(p.dim()), [p](std::span<const double> x) { return p(x); }};
    }
    case FamilyKind::Repeller: {
      const RepellerConfig c = family.repeller;
      return {repeller_space(c),
              [c](std::span<const double> x) { return simulate_repellers(x, c); }};
    }
    case FamilyKind::Tabular: {
      if (!family.table) throw std::invalid_argument("tabular family without a table");
      auto t = family.table;
      return {t->space(), [t](std::span<const double> x) { return (*t)(x); }};
    }
  }
  throw std::logic_error("make_instance: unknown family");
}

// --- optimizers ----------------------------------------------------------------

std::unique_ptr<Optimizer> make_optimizer(const OptimizerSpec& spec, const SearchSpace& space,
                                          std::uint64_t seed) {
  switch (spec.kind) {
    case OptimizerKind::Policy:
      if (!spec.policy) throw std::invalid_argument("optimizer '" + spec.name + "' has no policy");
      return std::make_unique<PolicyOptimizer>(*spec.policy, space);
    case OptimizerKind::Random:
      return std::make_unique<RandomSearchOptimizer>(space, seed);
    case OptimizerKind::GpEi:
      return std::make_unique<GpEiOptimizer>(space, spec.gp_ei, seed);
  }
  throw std::logic_error("make_optimizer: unknown kind");
}

Trajectory run_optimizer(const OptimizerSpec& spec, const ObjectiveInstance& instance,
                         std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw std::invalid_argument("budget must be at least 1");
  if (spec.kind == OptimizerKind::Policy && spec.workers > 1) {
    if (!spec.policy) throw std::invalid_argument("optimizer '" + spec.name + "' has no policy");
    return run_parallel(*spec.policy, instance.space, instance.objective, spec.workers, budget,
                        RuntimeJitter{spec.eta}, seed);
  }
  if (spec.kind == OptimizerKind::GpEi && budget < spec.gp_ei.n_init) {
    throw std::invalid_argument("GP-EI needs budget >= n_init");
  }
  auto opt = make_optimizer(spec, instance.space, seed);
  Trajectory t = run_sequential(*opt, budget, instance.objective);
  if (auto* p = dynamic_cast<PolicyOptimizer*>(opt.get())) t.o_flags = p->o_flags();
  return t;
}

// --- comparisons ---------------------------------------------------------------

AggregateCurve aggregate(const std::string& optimizer, std::span<const RunRecord> runs) {
  AggregateCurve a;
  a.optimizer = optimizer;
  std::size_t len = 0;
  for (const RunRecord& r : runs) {
    if (r.optimizer != optimizer) continue;
    if (r.failed) {
      ++a.failures;
      continue;
    }
    if (a.n == 0) {
      len = r.curve.size();
      a.mean.assign(len, 0.0);
    } else if (r.curve.size() != len) {
      throw std::invalid_argument("aggregate: runs of different length");
    }
    ++a.n;
    for (std::size_t t = 0; t < len; ++t) a.mean[t] += r.curve[t];
  }
  if (a.n == 0) return a;
  const double n = static_cast<double>(a.n);
  for (double& m : a.mean) m /= n;
  if (a.n >= 2) {
    std::vector<double> ss(len, 0.0);
    for (const RunRecord& r : runs) {
      if (r.optimizer != optimizer || r.failed) continue;
      for (std::size_t t = 0; t < len; ++t) {
        const double dev = r.curve[t] - a.mean[t];
        ss[t] += dev * dev;
      }
    }
    a.ci.resize(len);
    for (std::size_t t = 0; t < len; ++t) a.ci[t] = 1.96 * std::sqrt(ss[t] / (n - 1.0) / n);
  }
  return a;
}

PairedStats paired_difference(std::span<const RunRecord> runs, const std::string& a,
                              const std::string& b, std::size_t step) {
  if (step == 0) throw std::invalid_argument("paired_difference: steps are 1-based");
  std::map<std::size_t, double> va;
  for (const RunRecord& r : runs) {
    if (r.optimizer == a && !r.failed && r.curve.size() >= step) {
      va[r.function_index] = r.curve[step - 1];
    }
  }
  std::vector<double> diffs;
  std::map<std::size_t, double> vb;
  for (const RunRecord& r : runs) {
    if (r.optimizer == b && !r.failed && r.curve.size() >= step) {
      vb[r.function_index] = r.curve[step - 1];
    }
  }
  for (const auto& [i, y] : va) {
    if (auto it = vb.find(i); it != vb.end()) diffs.push_back(y - it->second);
  }
  PairedStats s;
  s.n = diffs.size();
  if (s.n == 0) return s;
  for (double d : diffs) s.mean += d;
  s.mean /= static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0.0;
    for (double d : diffs) ss += (d - s.mean) * (d - s.mean);
    s.stderr_ = std::sqrt(ss / static_cast<double>(s.n - 1) / static_cast<double>(s.n));
  }
  return s;
}

CompareResult compare(std::span<const OptimizerSpec> optimizers, const ObjectiveFamily& family,
                      const CompareOptions& options) {
  if (optimizers.empty()) throw std::invalid_argument("compare: no optimizers");
  if (options.budget == 0) throw std::invalid_argument("compare: budget must be at least 1");
  const std::size_t k = optimizers.size();
  std::vector<std::size_t> counts(k);
  std::size_t n_max = 0;
  for (std::size_t o = 0; o < k; ++o) {
    counts[o] = std::min(options.n_functions,
                         optimizers[o].max_functions.value_or(options.n_functions));
    n_max = std::max(n_max, counts[o]);
  }
  // Function-major so each instance is built once and shared by all optimizers.
  std::vector<std::vector<RunRecord>> slots(n_max, std::vector<RunRecord>(k));
  parallel_for(n_max, options.threads, [&](std::size_t i) {
    const std::uint64_t instance_seed = derive_seed(options.seed, StreamId::Objective, i);
    const std::uint64_t opt_seed = derive_seed(options.seed, StreamId::Optimizer, i);
    std::optional<ObjectiveInstance> instance;
    std::string instance_error;
    try {
      instance = make_instance(family, instance_seed);
    } catch (const std::exception& e) {
      instance_error = e.what();
    }
    for (std::size_t o = 0; o < k; ++o) {
      if (i >= counts[o]) continue;
      RunRecord& r = slots[i][o];
      r.optimizer = optimizers[o].name;
      r.objective = family.name;
      r.function_index = i;
      r.seed = opt_seed;
      r.instance_seed = instance_seed;
      if (!instance) {
        r.failed = true;
        r.error = instance_error;
        continue;
      }
      try {
        const Trajectory t = run_optimizer(optimizers[o], *instance, options.budget, opt_seed);
        r.curve = t.min_observed();
        r.wall_ns.reserve(t.size());
        for (const Evaluation& e : t.evaluations) {
          r.wall_ns.push_back(options.record_wall_clock ? e.wall_ns : 0);
        }
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
      }
    }
  });

  CompareResult result;
  for (std::size_t o = 0; o < k; ++o) {
    for (std::size_t i = 0; i < counts[o]; ++i) result.runs.push_back(std::move(slots[i][o]));
  }
  for (const OptimizerSpec& spec : optimizers) {
    result.aggregates.push_back(aggregate(spec.name, result.runs));
  }
  return result;
}

// --- timing --------------------------------------------------------------------

std::vector<TimingRow> time_proposals(const OptimizerSpec& spec, const ObjectiveInstance& instance,
                                      std::size_t budget, std::size_t repeats, std::uint64_t seed) {
  if (repeats < 3) throw std::invalid_argument("time_proposals: repeats must be at least 3");
  std::vector<std::vector<std::int64_t>> samples(budget);
  for (std::size_t r = 0; r < repeats; ++r) {
    const Trajectory t =
        run_optimizer(spec, instance, budget, derive_seed(seed, StreamId::Optimizer, r));
    for (const Evaluation& e : t.evaluations) {
      const std::size_t step = t.parallel ? static_cast<std::size_t>(e.issue_idx)
                                          : static_cast<std::size_t>(&e - t.evaluations.data());
      samples[step].push_back(e.wall_ns);
    }
  }
  std::vector<TimingRow> rows;
  rows.reserve(budget);
  for (std::size_t s = 0; s < budget; ++s) {
    auto& v = samples[s];
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    const std::int64_t median = m % 2 ? v[m / 2] : (v[m / 2 - 1] + v[m / 2]) / 2;
    rows.push_back({spec.name, s + 1, median});
  }
  return rows;
}

// --- CSV -----------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::runtime_error("not a number: '" + text + "'");
  }
  return v;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool wall_clock) {
  const std::size_t d = traj.evaluations.empty() ? 0 : traj.evaluations[0].x.size();
  out << "step";
  for (std::size_t j = 1; j <= d; ++j) out << ",x_" << j;
  out << ",y,min_so_far,wall_ns";
  if (traj.parallel) out << ",worker_id,issue_idx,complete_idx,sim_time";
  out << '\n';
  double best = 0.0;
  for (std::size_t t = 0; t < traj.evaluations.size(); ++t) {
    const Evaluation& e = traj.evaluations[t];
    best = t == 0 ? e.y : std::min(best, e.y);
    out << t + 1;
    for (double x : e.x) out << ',' << format_double(x);
    out << ',' << format_double(e.y) << ',' << format_double(best) << ','
        << (wall_clock ? e.wall_ns : 0);
    if (traj.parallel) {
      out << ',' << e.worker_id << ',' << e.issue_idx << ',' << e.complete_idx << ','
          << format_double(e.sim_time);
    }
    out << '\n';
  }
}

void write_runs_csv(std::ostream& out, std::span<const RunRecord> runs, bool wall_clock) {
  out << "optimizer,objective,function_index,seed,instance_seed,failed,step,min_so_far,wall_ns\n";
  for (const RunRecord& r : runs) {
    if (r.failed) {
      out << r.optimizer << ',' << r.objective << ',' << r.function_index << ',' << r.seed << ','
          << r.instance_seed << ",1,,,\n";
      continue;
    }
    for (std::size_t t = 0; t < r.curve.size(); ++t) {
      out << r.optimizer << ',' << r.objective << ',' << r.function_index << ',' << r.seed << ','
          << r.instance_seed << ",0," << t + 1 << ',' << format_double(r.curve[t]) << ','
          << (wall_clock && t < r.wall_ns.size() ? r.wall_ns[t] : 0) << '\n';
    }
  }
}

void write_aggregate_csv(std::ostream& out, std::span<const AggregateCurve> curves) {
  out << "optimizer,step,mean,ci_half_width,n,failures\n";
  for (const AggregateCurve& c : curves) {
    for (std::size_t t = 0; t < c.mean.size(); ++t) {
      out << c.optimizer << ',' << t + 1 << ',' << format_double(c.mean[t]) << ','
          << (c.ci.empty() ? std::string() : format_double(c.ci[t])) << ',' << c.n << ','
          << c.failures << '\n';
    }
  }
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<AggregateCurve> read_aggregate_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "optimizer,step,mean,ci_half_width,n,failures") {
    throw std::runtime_error("aggregate CSV: unexpected header");
  }
  std::vector<AggregateCurve> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 6) {
      throw std::runtime_error("aggregate CSV line " + std::to_string(line_no) +
                               ": expected 6 fields");
    }
    if (out.empty() || out.back().optimizer != f[0]) {
      out.push_back({});
      out.back().optimizer = f[0];
    }
    AggregateCurve& c = out.back();
    c.mean.push_back(parse_double(f[2]));
    if (!f[3].empty()) c.ci.push_back(parse_double(f[3]));
    c.n = std::stoul(f[4]);
    c.failures = std::stoul(f[5]);
  }
  return out;
}

void write_paired_csv(std::ostream& out, std::span<const RunRecord> runs,
                      std::span<const OptimizerSpec> optimizers) {
  out << "optimizer_a,optimizer_b,function_index,final_a,final_b,delta\n";
  std::map<std::pair<std::string, std::size_t>, double> finals;
  for (const RunRecord& r : runs) {
    if (!r.failed && !r.curve.empty()) finals[{r.optimizer, r.function_index}] = r.curve.back();
  }
  for (std::size_t a = 0; a < optimizers.size(); ++a) {
    for (std::size_t b = a + 1; b < optimizers.size(); ++b) {
      for (const auto& [key, ya] : finals) {
        if (key.first != optimizers[a].name) continue;
        const auto it = finals.find({optimizers[b].name, key.second});
        if (it == finals.end()) continue;
        out << optimizers[a].name << ',' << optimizers[b].name << ',' << key.second << ','
            << format_double(ya) << ',' << format_double(it->second) << ','
            << format_double(ya - it->second) << '\n';
      }
    }
  }
}

void write_timing_csv(std::ostream& out, std::span<const TimingRow> rows, bool wall_clock) {
  out << "optimizer,step,median_ns\n";
  for (const TimingRow& r : rows) {
    out << r.optimizer << ',' << r.step << ',' << (wall_clock ? r.median_ns : 0) << '\n';
  }
}

// --- configuration -------------------------------------------------------------

Config Config::parse(const std::string& text, const std::string& source) {
  Config c;
  c.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error(source + ":" + std::to_string(line_no) + ": empty key");
    }
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error(source_ + ": missing required key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  try {
    return parse_double(values_.at(key));
  } catch (const std::exception&) {
    throw std::runtime_error(source_ + ": key '" + key + "' must be a number");
  }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = values_.at(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::runtime_error(source_ + ": key '" + key + "' must be a non-negative integer");
  }
  return out;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = values_.at(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error(source_ + ": key '" + key + "' must be true or false");
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

void Config::check_keys(std::span<const std::string> known) const {
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw std::runtime_error(source_ + ": unknown key '" + k + "'");
    }
  }
}

std::string Config::canonical() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
  return s;
}

std::uint64_t Config::hash() const { return fnv1a(canonical()); }

std::vector<std::pair<std::size_t, std::size_t>> parse_curriculum(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const std::string& part : split(text, ',')) {
    const std::string p = trim(part);
    const auto colon = p.find(':');
    if (colon == std::string::npos) {
      throw std::runtime_error("curriculum entry '" + p + "' must be horizon:steps");
    }
    try {
      std::size_t used = 0;
      const std::string h = p.substr(0, colon);
      const std::string n = p.substr(colon + 1);
      const unsigned long horizon = std::stoul(h, &used);
      if (used != h.size()) throw std::invalid_argument(h);
      const unsigned long steps = std::stoul(n, &used);
      if (used != n.size()) throw std::invalid_argument(n);
      out.emplace_back(horizon, steps);
    } catch (const std::exception&) {
      throw std::runtime_error("curriculum entry '" + p + "' must be horizon:steps");
    }
  }
  if (out.empty()) throw std::runtime_error("empty curriculum");
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const Config& config, std::uint64_t seed) {
  nlohmann::ordered_json j;
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config.hash();
  j["command"] = command;
  j["config_hash"] = hash.str();
  j["seed"] = seed;
  j["version"] = kVersion;
  j["compiler"] = __VERSION__;
  j["config"] = config.values();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace rnnopt
