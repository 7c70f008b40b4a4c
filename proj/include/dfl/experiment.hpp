#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfl/core.hpp"
#include "dfl/training.hpp"

// Experiment orchestration: data generation, training every requested policy
// per seed, test evaluation of the selected checkpoints and report tables.
namespace dfl::experiment {

namespace fs = std::filesystem;

inline const std::vector<std::string>& known_policies() {
  static const std::vector<std::string> names{"pfl_d",  "pfl_s16", "dfl_d", "dfl_s2",
                                              "dfl_s8", "dfl_s16", "dfl_q"};
  return names;
}

struct ExperimentConfig {
  std::string problem = "wsmc";  // portfolio | wsmc | ptsp
  std::vector<std::string> policies = known_policies();
  int train = 200;
  int validation = 50;
  int test = 200;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int epochs = 50;
  int feature_dim = 5;
  // portfolio
  int securities = 10;
  std::string returns_csv;  // empty: synthetic returns
  int window = 10;
  // wsmc
  int items = 5;
  int sets = 10;
  double zeta_max = 10.0;
  int x_upper = 10;
  // ptsp
  int customers = 6;
  double rho = 5.0;
  // Shared trainer settings; epochs and seed are overridden per run.
  training::TrainConfig trainer;
  std::string output_dir = "runs";

  static ExperimentConfig Desk(const std::string& problem);
  static ExperimentConfig Full(const std::string& problem);

  // UsageError on unknown problem or policy names and invalid sizes.
  void validate() const;
};

json config_to_json(const ExperimentConfig& config);
// Missing fields keep the desk defaults of the named problem.
ExperimentConfig config_from_json(const json& j);

struct SeedData {
  std::unique_ptr<Problem> problem;
  ContextDataset data;
  json instance;
};

// Deterministic per (config, seed).
SeedData make_seed_data(const ExperimentConfig& config, std::uint64_t seed);
std::unique_ptr<Problem> problem_from_json(const std::string& problem, const json& instance,
                                           int feature_dim);

// Trainer settings for one (policy, seed): problem-specific sample counts and
// output standardization are applied here.
training::TrainConfig policy_train_config(const ExperimentConfig& config,
                                          const std::string& policy, std::uint64_t seed);
ProxyConfig policy_proxy(const std::string& policy);

struct RunRecord {
  std::string policy;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double test_mean_abs_regret = 0.0;
  double normalized = 0.0;
  int epochs = 0;
  double wall_time_s = 0.0;
  std::vector<training::EpochRecord> history;
};

struct PolicySummary {
  std::string policy;
  int runs = 0;
  double mean = 0.0;
  double std = 0.0;
  double normalized_mean = 0.0;
  // Paired test against dfl_d over shared seeds (absent for dfl_d itself).
  std::optional<double> t;
  std::optional<double> p;
  int df = 0;
  bool degenerate = false;
};

struct ResultsTable {
  std::string problem;
  std::vector<RunRecord> runs;
  std::vector<PolicySummary> summary;
  std::vector<std::string> missing;  // "policy/seed" of failed or absent runs
  bool all_ok() const { return missing.empty(); }
};

ResultsTable run_experiment(const ExperimentConfig& config);

// Rebuilds table.csv, curves.csv and ttest.csv from results.csv and the
// per-run training logs below `results_dir`.
ResultsTable report(const fs::path& results_dir);

// Re-evaluates a stored checkpoint on the stored test split.
RegretReport evaluate_checkpoint(const fs::path& results_dir, const std::string& policy,
                                 std::uint64_t seed);

fs::path seed_dir(const fs::path& root, std::uint64_t seed);
fs::path run_dir(const fs::path& root, const std::string& policy, std::uint64_t seed);

// Fixed formatting for every number written to CSV.
std::string format_number(double v);

}  // namespace dfl::experiment
