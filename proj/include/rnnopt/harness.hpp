// SPDX-License-Identifier: Apache-2.0
//
// Experiment plumbing: optimizer and objective factories, paired
// comparisons, aggregate curves, proposal timing and CSV/manifest output.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rnnopt/baselines.hpp"
#include "rnnopt/benchmarks.hpp"
#include "rnnopt/parallel.hpp"
#include "rnnopt/policy.hpp"
#include "rnnopt/space.hpp"

namespace rnnopt {

// --- objectives ----------------------------------------------------------------

enum class FamilyKind { Gp, Benchmark, Repeller, Tabular };

/// A family of objective instances indexed by seed.
struct ObjectiveFamily {
  FamilyKind kind = FamilyKind::Gp;
  std::string name = "gp";
  std::size_t dim = 1;           // Gp only
  gp::Kernel kernel;             // Gp only
  BenchmarkId benchmark = BenchmarkId::Branin;
  bool perturb = true;           // Benchmark: random perturbation per instance
  RepellerConfig repeller;
  std::shared_ptr<const TabularObjective> table;

  /// Accepts gp, branin, goldstein_price, hartmann3, hartmann6, repeller.
  /// Tabular families are built with tabular().
  static ObjectiveFamily parse(const std::string& name, std::size_t gp_dim = 1);
  static ObjectiveFamily tabular(std::shared_ptr<const TabularObjective> table);
};

struct ObjectiveInstance {
  SearchSpace space;
  Objective objective;
};

ObjectiveInstance make_instance(const ObjectiveFamily& family, std::uint64_t seed);

// --- optimizers ----------------------------------------------------------------

enum class OptimizerKind { Policy, Random, GpEi };

struct OptimizerSpec {
  std::string name;
  OptimizerKind kind = OptimizerKind::Random;
  std::shared_ptr<const LstmPolicy> policy;  // Policy only
  std::size_t workers = 1;                   // Policy only; > 1 uses run_parallel
  double eta = 0.0;
  GpEiOptions gp_ei;                         // GpEi only
  /// Cap on the number of functions this optimizer runs in compare().
  std::optional<std::size_t> max_functions;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimizerSpec& spec, const SearchSpace& space,
                                          std::uint64_t seed);

/// One episode of `spec` on `instance`.
Trajectory run_optimizer(const OptimizerSpec& spec, const ObjectiveInstance& instance,
                         std::size_t budget, std::uint64_t seed);

// --- comparisons ---------------------------------------------------------------

struct RunRecord {
  std::string optimizer;
  std::string objective;
  std::size_t function_index = 0;
  std::uint64_t seed = 0;             // optimizer seed
  std::uint64_t instance_seed = 0;
  std::vector<double> curve;          // m_t, t = 1..T
  std::vector<std::int64_t> wall_ns;  // per proposal
  bool failed = false;
  std::string error;
};

struct AggregateCurve {
  std::string optimizer;
  std::vector<double> mean;
  std::vector<double> ci;  // 1.96 * stderr; empty when n < 2
  std::size_t n = 0;
  std::size_t failures = 0;
};

/// Per-step mean and 1.96 * stderr over successful runs of one optimizer.
AggregateCurve aggregate(const std::string& optimizer, std::span<const RunRecord> runs);

struct PairedStats {
  double mean = 0.0;    // mean of a - b
  double stderr_ = 0.0;
  std::size_t n = 0;
};

/// Paired difference of m_step (1-based) between optimizers a and b over the
/// functions both completed.
PairedStats paired_difference(std::span<const RunRecord> runs, const std::string& a,
                              const std::string& b, std::size_t step);

struct CompareOptions {
  std::size_t n_functions = 200;
  std::size_t budget = 30;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool record_wall_clock = true;
};

struct CompareResult {
  std::vector<RunRecord> runs;  // optimizer-major, then function index
  std::vector<AggregateCurve> aggregates;
};

/// Paired design: function i uses instance seed derive_seed(seed, Objective, i)
/// and optimizer seed derive_seed(seed, Optimizer, i) for every optimizer.
CompareResult compare(std::span<const OptimizerSpec> optimizers, const ObjectiveFamily& family,
                      const CompareOptions& options);

// --- timing --------------------------------------------------------------------

struct TimingRow {
  std::string optimizer;
  std::size_t step = 0;
  std::int64_t median_ns = 0;
};

/// Median proposal cost per step over `repeats` episodes (objective excluded).
std::vector<TimingRow> time_proposals(const OptimizerSpec& spec, const ObjectiveInstance& instance,
                                      std::size_t budget, std::size_t repeats, std::uint64_t seed);

// --- CSV -----------------------------------------------------------------------

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, bool wall_clock = true);
void write_runs_csv(std::ostream& out, std::span<const RunRecord> runs, bool wall_clock = true);
void write_aggregate_csv(std::ostream& out, std::span<const AggregateCurve> curves);
std::vector<AggregateCurve> read_aggregate_csv(std::istream& in);
void write_paired_csv(std::ostream& out, std::span<const RunRecord> runs,
                      std::span<const OptimizerSpec> optimizers);
void write_timing_csv(std::ostream& out, std::span<const TimingRow> rows, bool wall_clock = true);

// --- configuration -------------------------------------------------------------

/// key = value lines; '#' starts a comment. Later keys override earlier ones.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  void set(const std::string& key, const std::string& value);

  /// Throws if any key is not in `known`.
  void check_keys(std::span<const std::string> known) const;
  /// Canonical text (sorted keys); its hash identifies the run.
  std::string canonical() const;
  std::uint64_t hash() const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

/// Parses "10:300,20:300,30:400" into curriculum stages.
std::vector<std::pair<std::size_t, std::size_t>> parse_curriculum(const std::string& text);

/// Writes manifest.json: command, config hash, seed, library version, compiler.
void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const Config& config, std::uint64_t seed);

inline constexpr const char* kVersion = "1.0.0";

}  // namespace rnnopt
