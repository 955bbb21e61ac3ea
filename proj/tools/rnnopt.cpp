// SPDX-License-Identifier: Apache-2.0
//
// rnnopt: train, deploy, compare and time learned black-box optimizers.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rnnopt/baselines.hpp"
#include "rnnopt/benchmarks.hpp"
#include "rnnopt/checks.hpp"
#include "rnnopt/harness.hpp"
#include "rnnopt/parallel.hpp"
#include "rnnopt/policy.hpp"
#include "rnnopt/random.hpp"
#include "rnnopt/training.hpp"

namespace fs = std::filesystem;
using namespace rnnopt;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) out.push_back(parse_double(s));
  return out;
}

gp::Kernel kernel_from(const Config& c) {
  gp::Kernel k;
  k.length_scale = c.get_double("length_scale", k.length_scale);
  k.signal_variance = c.get_double("signal_variance", k.signal_variance);
  k.noise_variance = c.get_double("noise_variance", k.noise_variance);
  k.validate();
  return k;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

ObjectiveFamily family_from(const std::string& objective, std::size_t gp_dim,
                            const std::string& table, const gp::Kernel& kernel, bool perturb) {
  if (objective == "tabular") {
    if (table.empty()) throw std::runtime_error("objective 'tabular' needs a table file");
    return ObjectiveFamily::tabular(std::make_shared<const TabularObjective>(load_tabular(table)));
  }
  ObjectiveFamily f = ObjectiveFamily::parse(objective, gp_dim);
  f.kernel = kernel;
  f.perturb = perturb;
  return f;
}

// --- train -----------------------------------------------------------------------

int cmd_train(const fs::path& config_path, const fs::path& out_dir, bool wall_clock) {
  const Config c = Config::load(config_path);
  static const std::vector<std::string> kKeys = {
      "dim", "hidden", "loss", "batch", "curriculum", "learning_rate", "beta1", "beta2",
      "epsilon", "clip_norm", "seed", "detach_history", "length_scale", "signal_variance",
      "noise_variance", "workers", "eta", "threads", "checkpoint_every", "scaling", "lower",
      "upper", "validation_functions"};
  c.check_keys(kKeys);

  const std::size_t dim = c.get_size("dim", 1);
  SearchSpace space = SearchSpace::unit(dim);
  if (c.has("lower")) space.lower = parse_doubles(c.get("lower", ""));
  if (c.has("upper")) space.upper = parse_doubles(c.get("upper", ""));
  space.validate();

  TrainConfig tc;
  tc.seed = c.get_u64("seed", 0);
  tc.batch_size = c.get_size("batch", tc.batch_size);
  tc.loss = parse_loss_kind(c.get("loss", "sum"));
  tc.curriculum.clear();
  for (auto [h, n] : parse_curriculum(c.get("curriculum", "10:100,20:100,30:100"))) {
    tc.curriculum.push_back({h, n});
  }
  tc.adam.learning_rate = c.get_double("learning_rate", tc.adam.learning_rate);
  tc.adam.beta1 = c.get_double("beta1", tc.adam.beta1);
  tc.adam.beta2 = c.get_double("beta2", tc.adam.beta2);
  tc.adam.epsilon = c.get_double("epsilon", tc.adam.epsilon);
  tc.clip_norm = c.get_double("clip_norm", tc.clip_norm);
  tc.detach_history = c.get_bool("detach_history", false);
  tc.kernel = kernel_from(c);
  tc.threads = c.get_size("threads", 1);
  const std::size_t workers = c.get_size("workers", 1);
  if (workers > 1) tc.parallel = ParallelTraining{workers, c.get_double("eta", 0.5)};
  tc.checkpoint_every = c.get_size("checkpoint_every", 0);
  if (tc.checkpoint_every > 0) tc.checkpoint_dir = out_dir / "checkpoints";

  fs::create_directories(out_dir);
  const LstmPolicy init = LstmPolicy::initialized(
      space, c.get_size("hidden", 32), derive_seed(tc.seed, StreamId::Init),
      parse_observation_scaling(c.get("scaling", "standardized")));

  std::ofstream csv = open_out(out_dir / "training.csv");
  csv << "outer_step,horizon,mean_loss,grad_norm,wall_ms\n";
  const std::size_t total = tc.total_steps();
  const auto on_step = [&](const TrainRecord& r) {
    csv << r.outer_step << ',' << r.horizon << ',' << format_double(r.mean_loss) << ','
        << format_double(r.grad_norm) << ',' << format_double(wall_clock ? r.wall_ms : 0.0)
        << '\n';
    if (r.outer_step % 50 == 0 || r.outer_step == total) {
      std::fprintf(stderr, "step %zu/%zu  T=%zu  loss %.4f  |g| %.3f\n", r.outer_step, total,
                   r.horizon, r.mean_loss, r.grad_norm);
    }
  };
  TrainResult result = train(tc, init, on_step);
  save_checkpoint(result.policy, out_dir / "policy.json");
  write_manifest(out_dir / "manifest.json", "train", c, tc.seed);

  if (const std::size_t nv = c.get_size("validation_functions", 0); nv > 0) {
    RolloutConfig rc;
    rc.kernel = tc.kernel;
    rc.horizon = tc.curriculum.back().horizon;
    rc.loss = tc.loss == LossKind::EI ? LossKind::Sum : tc.loss;
    const double before = validation_loss(init, rc, tc.seed, nv);
    const double after = validation_loss(result.policy, rc, tc.seed, nv);
    std::printf("validation %s loss over %zu functions: untrained %.6f, trained %.6f\n",
                to_string(rc.loss).c_str(), nv, before, after);
  }
  std::printf("wrote %s\n", (out_dir / "policy.json").string().c_str());
  return 0;
}

// --- optimize --------------------------------------------------------------------

struct OptimizeArgs {
  std::string checkpoint;
  std::string optimizer = "rnn";
  std::string objective = "gp";
  std::string table;
  std::size_t dim = 0;
  std::size_t instance = 0;
  std::size_t budget = 30;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double eta = 0.0;
  bool identity = false;
  std::string out;
};

OptimizerSpec spec_for(const std::string& name, std::shared_ptr<const LstmPolicy> policy,
                       const ObjectiveFamily& family, std::size_t workers, double eta,
                       std::size_t n_init, const gp::Kernel& kernel) {
  OptimizerSpec s;
  s.name = name;
  if (name == "rnn") {
    if (!policy) throw std::runtime_error("optimizer 'rnn' needs a checkpoint");
    s.kind = OptimizerKind::Policy;
    s.policy = std::move(policy);
    s.workers = workers;
    s.eta = eta;
  } else if (name == "random") {
    s.kind = OptimizerKind::Random;
  } else if (name == "gp_ei") {
    s.kind = OptimizerKind::GpEi;
    s.gp_ei.kernel = kernel;
    s.gp_ei.n_init = n_init;
    // The GP prior is only the true model for GP objectives.
    s.gp_ei.standardize = family.kind != FamilyKind::Gp;
  } else {
    throw std::runtime_error("unknown optimizer '" + name + "' (expected rnn, random or gp_ei)");
  }
  return s;
}

int cmd_optimize(const OptimizeArgs& a, bool wall_clock) {
  std::shared_ptr<const LstmPolicy> policy;
  if (!a.checkpoint.empty()) policy = std::make_shared<const LstmPolicy>(load_checkpoint(a.checkpoint));
  const std::size_t dim = a.dim > 0 ? a.dim : policy ? policy->dim() : 1;
  const gp::Kernel kernel = policy ? policy->training_kernel : gp::Kernel{};
  const ObjectiveFamily family = family_from(a.objective, dim, a.table, kernel, !a.identity);
  const ObjectiveInstance inst =
      make_instance(family, derive_seed(a.seed, StreamId::Objective, a.instance));
  const OptimizerSpec spec = spec_for(a.optimizer, policy, family, a.workers, a.eta, 2, kernel);
  const Trajectory t =
      run_optimizer(spec, inst, a.budget, derive_seed(a.seed, StreamId::Optimizer, a.instance));
  if (a.out.empty()) {
    write_trajectory_csv(std::cout, t, wall_clock);
  } else {
    std::ofstream out = open_out(a.out);
    write_trajectory_csv(out, t, wall_clock);
    const auto m = t.min_observed();
    std::printf("%zu evaluations, best %.6g\n", t.size(), m.back());
  }
  return 0;
}

// --- compare ---------------------------------------------------------------------

int cmd_compare(const fs::path& config_path, const fs::path& out_dir, bool wall_clock) {
  const Config c = Config::load(config_path);
  static const std::vector<std::string> kKeys = {
      "objective", "dim", "table", "optimizers", "checkpoint", "functions", "gp_ei_functions",
      "budget", "seed", "threads", "workers", "eta", "n_init", "length_scale", "signal_variance",
      "noise_variance", "perturb"};
  c.check_keys(kKeys);
  std::shared_ptr<const LstmPolicy> policy;
  if (c.has("checkpoint")) {
    fs::path cp = c.get("checkpoint", "");
    if (cp.is_relative()) cp = config_path.parent_path() / cp;
    policy = std::make_shared<const LstmPolicy>(load_checkpoint(cp));
  }
  const std::size_t dim = c.get_size("dim", policy ? policy->dim() : 1);
  gp::Kernel kernel = policy ? policy->training_kernel : gp::Kernel{};
  if (c.has("length_scale") || c.has("signal_variance") || c.has("noise_variance")) {
    kernel = kernel_from(c);
  }
  fs::path table = c.get("table", "");
  if (!table.empty() && table.is_relative()) table = config_path.parent_path() / table;
  const ObjectiveFamily family =
      family_from(c.get("objective", "gp"), dim, table.string(), kernel, c.get_bool("perturb", true));

  std::vector<OptimizerSpec> specs;
  for (const auto& name : split_list(c.get("optimizers", "rnn,random,gp_ei"))) {
    specs.push_back(spec_for(name, policy, family, c.get_size("workers", 1),
                             c.get_double("eta", 0.0), c.get_size("n_init", 2), kernel));
    if (name == "gp_ei") specs.back().max_functions = c.get_size("gp_ei_functions", 50);
  }
  CompareOptions opt;
  opt.n_functions = c.get_size("functions", 200);
  opt.budget = c.get_size("budget", 30);
  opt.seed = c.get_u64("seed", 0);
  opt.threads = c.get_size("threads", 1);
  opt.record_wall_clock = wall_clock;
  const CompareResult r = compare(specs, family, opt);

  fs::create_directories(out_dir);
  {
    std::ofstream out = open_out(out_dir / "aggregate.csv");
    write_aggregate_csv(out, r.aggregates);
  }
  {
    std::ofstream out = open_out(out_dir / "runs.csv");
    write_runs_csv(out, r.runs, wall_clock);
  }
  {
    std::ofstream out = open_out(out_dir / "paired.csv");
    write_paired_csv(out, r.runs, specs);
  }
  write_manifest(out_dir / "manifest.json", "compare", c, opt.seed);
  for (const AggregateCurve& a : r.aggregates) {
    if (a.mean.empty()) {
      std::printf("%-8s no successful runs (%zu failures)\n", a.optimizer.c_str(), a.failures);
      continue;
    }
    std::printf("%-8s m_%zu = %.6f", a.optimizer.c_str(), a.mean.size(), a.mean.back());
    if (!a.ci.empty()) std::printf(" +- %.6f", a.ci.back());
    std::printf("  (n=%zu, failures=%zu)\n", a.n, a.failures);
  }
  return 0;
}

// --- time ------------------------------------------------------------------------

int cmd_time(const std::string& checkpoint, const std::string& optimizers, std::size_t budget,
             std::size_t repeats, std::uint64_t seed, const std::string& out_path,
             bool wall_clock) {
  std::shared_ptr<const LstmPolicy> policy;
  if (!checkpoint.empty()) policy = std::make_shared<const LstmPolicy>(load_checkpoint(checkpoint));
  const std::size_t dim = policy ? policy->dim() : 1;
  const gp::Kernel kernel = policy ? policy->training_kernel : gp::Kernel{};
  ObjectiveFamily family = ObjectiveFamily::parse("gp", dim);
  family.kernel = kernel;
  const ObjectiveInstance inst = make_instance(family, derive_seed(seed, StreamId::Objective, 0));
  std::vector<TimingRow> rows;
  for (const auto& name : split_list(optimizers)) {
    const OptimizerSpec spec = spec_for(name, policy, family, 1, 0.0, 2, kernel);
    const auto r = time_proposals(spec, inst, budget, repeats, seed);
    rows.insert(rows.end(), r.begin(), r.end());
    std::fprintf(stderr, "%-8s step 1: %lld ns, step %zu: %lld ns\n", name.c_str(),
                 static_cast<long long>(r.front().median_ns), budget,
                 static_cast<long long>(r.back().median_ns));
  }
  if (out_path.empty()) {
    write_timing_csv(std::cout, rows, wall_clock);
  } else {
    std::ofstream out = open_out(out_path);
    write_timing_csv(out, rows, wall_clock);
  }
  return 0;
}

// --- check -----------------------------------------------------------------------

int cmd_check(std::uint64_t seed, const std::string& out_path) {
  const auto results = checks::run_all(seed);
  bool ok = true;
  std::ostringstream csv;
  csv << "check,value,threshold,passed\n";
  for (const auto& r : results) {
    std::printf("%-36s %s  %.3g <= %.3g  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                r.value, r.threshold, r.detail.c_str());
    csv << r.name << ',' << format_double(r.value) << ',' << format_double(r.threshold) << ','
        << (r.passed ? 1 : 0) << '\n';
    ok = ok && r.passed;
  }
  if (!out_path.empty()) {
    std::ofstream out = open_out(out_path);
    out << csv.str();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned black-box optimizers meta-trained on Gaussian-process samples"};
  app.require_subcommand(1);
  bool no_wall_clock = false;
  app.add_flag("--no-wall-clock", no_wall_clock,
               "Write zeros in timing columns so outputs are byte-reproducible");

  auto* train_cmd = app.add_subcommand("train", "Meta-train a policy from a config file");
  std::string train_config;
  std::string train_out;
  train_cmd->add_option("-c,--config", train_config, "Config file")->required();
  train_cmd->add_option("-o,--out", train_out, "Output directory")->required();

  auto* opt_cmd = app.add_subcommand("optimize", "Run one optimizer on one objective instance");
  OptimizeArgs oa;
  opt_cmd->add_option("--checkpoint", oa.checkpoint, "Policy checkpoint");
  opt_cmd->add_option("--optimizer", oa.optimizer, "rnn, random or gp_ei");
  opt_cmd->add_option("--objective", oa.objective,
                      "gp, branin, goldstein_price, hartmann3, hartmann6, repeller or tabular");
  opt_cmd->add_option("--table", oa.table, "CSV grid for the tabular objective");
  opt_cmd->add_option("--dim", oa.dim, "Dimension of GP objectives (default: policy dimension)");
  opt_cmd->add_option("--instance", oa.instance, "Objective instance index");
  opt_cmd->add_option("--budget", oa.budget, "Number of evaluations");
  opt_cmd->add_option("--seed", oa.seed, "Master seed");
  opt_cmd->add_option("--workers", oa.workers, "Simulated parallel workers (rnn only)");
  opt_cmd->add_option("--eta", oa.eta, "Runtime jitter half-width for parallel runs");
  opt_cmd->add_flag("--identity", oa.identity, "Use the unperturbed benchmark");
  opt_cmd->add_option("-o,--out", oa.out, "Trajectory CSV (default: stdout)");

  auto* cmp_cmd = app.add_subcommand("compare", "Paired comparison of optimizers");
  std::string cmp_config;
  std::string cmp_out;
  cmp_cmd->add_option("-c,--config", cmp_config, "Config file")->required();
  cmp_cmd->add_option("-o,--out", cmp_out, "Output directory")->required();

  auto* time_cmd = app.add_subcommand("time", "Median per-proposal cost by step");
  std::string time_checkpoint;
  std::string time_optimizers = "rnn,gp_ei";
  std::size_t time_budget = 100;
  std::size_t time_repeats = 5;
  std::uint64_t time_seed = 0;
  std::string time_out;
  time_cmd->add_option("--checkpoint", time_checkpoint, "Policy checkpoint");
  time_cmd->add_option("--optimizers", time_optimizers, "Comma-separated list");
  time_cmd->add_option("--budget", time_budget, "Steps per episode");
  time_cmd->add_option("--repeats", time_repeats, "Episodes per optimizer (>= 3)");
  time_cmd->add_option("--seed", time_seed, "Master seed");
  time_cmd->add_option("-o,--out", time_out, "Timing CSV (default: stdout)");

  auto* check_cmd = app.add_subcommand("check", "Run the oracle and invariant checks");
  std::uint64_t check_seed = 0;
  std::string check_out;
  check_cmd->add_option("--seed", check_seed, "Master seed");
  check_cmd->add_option("-o,--out", check_out, "Results CSV");

  CLI11_PARSE(app, argc, argv);
  const bool wall_clock = !no_wall_clock;
  try {
    if (*train_cmd) return cmd_train(train_config, train_out, wall_clock);
    if (*opt_cmd) return cmd_optimize(oa, wall_clock);
    if (*cmp_cmd) return cmd_compare(cmp_config, cmp_out, wall_clock);
    if (*time_cmd) {
      return cmd_time(time_checkpoint, time_optimizers, time_budget, time_repeats, time_seed,
                      time_out, wall_clock);
    }
    if (*check_cmd) return cmd_check(check_seed, check_out);
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
