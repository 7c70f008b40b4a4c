#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfl/experiment.hpp"
#include "dfl/oracle.hpp"
#include "dfl/stats.hpp"
#include "dfl/wsmc.hpp"

namespace {

using dfl::json;
namespace ex = dfl::experiment;

constexpr int kExitFailedRuns = 1;
constexpr int kExitUsage = 2;

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty()) out.push_back(std::stod(cell));
  }
  return out;
}

ex::ExperimentConfig load_config(const std::string& path, const std::string& profile,
                                 const std::string& problem) {
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw dfl::UsageError("cannot read config " + path);
    return ex::config_from_json(json::parse(in));
  }
  return profile == "full" ? ex::ExperimentConfig::Full(problem)
                            : ex::ExperimentConfig::Desk(problem);
}

json summary_json(const ex::ResultsTable& table) {
  json rows = json::array();
  for (const ex::PolicySummary& s : table.summary) {
    json row = {{"policy", s.policy},
                {"runs", s.runs},
                {"mean", s.mean},
                {"std", s.std},
                {"normalized_mean", s.normalized_mean}};
    if (s.p) {
      row["t"] = *s.t;
      row["p"] = *s.p;
      row["df"] = s.df;
    }
    rows.push_back(std::move(row));
  }
  return {{"problem", table.problem}, {"summary", std::move(rows)}, {"missing", table.missing}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-focused learning benchmark"};
  app.require_subcommand(1);

  // Shared experiment options for gen / train / run.
  std::string config_path;
  std::string profile = "desk";
  std::string problem = "wsmc";
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> policies;
  std::optional<int> epochs;
  bool timing = false;
  auto add_experiment_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--profile", profile, "desk or full-scale defaults")
        ->check(CLI::IsMember({"desk", "full"}));
    cmd->add_option("--problem", problem, "portfolio, wsmc or ptsp");
    cmd->add_option("--seed", seed, "run a single seed");
    cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate instance and dataset for one seed");
  add_experiment_options(gen);

  CLI::App* train = app.add_subcommand("train", "train policies and write per-seed results");
  add_experiment_options(train);
  train->add_option("--policy", policies, "policies to train (repeatable)");
  train->add_option("--epochs", epochs, "override the epoch count");
  train->add_flag("--timing", timing, "record wall-clock times");

  CLI::App* run = app.add_subcommand("run", "full experiment: every policy and seed, then report");
  add_experiment_options(run);
  run->add_option("--policy", policies, "restrict to these policies (repeatable)");
  run->add_option("--epochs", epochs, "override the epoch count");
  run->add_flag("--timing", timing, "record wall-clock times");

  std::string results_dir;
  std::string eval_policy;
  std::uint64_t eval_seed = 0;
  CLI::App* eval = app.add_subcommand("eval", "re-evaluate a stored checkpoint on its test split");
  eval->add_option("--dir", results_dir, "experiment output directory")->required();
  eval->add_option("--policy", eval_policy, "policy name")->required();
  eval->add_option("--seed", eval_seed, "seed")->required();

  CLI::App* report = app.add_subcommand("report", "rebuild tables and curves from a run directory");
  report->add_option("--dir", results_dir, "experiment output directory")->required();

  std::string a_text;
  std::string b_text;
  CLI::App* ttest = app.add_subcommand("ttest", "two-sided paired t-test");
  ttest->add_option("--a", a_text, "comma-separated values")->required();
  ttest->add_option("--b", b_text, "comma-separated values")->required();

  CLI::App* oracle = app.add_subcommand("oracle", "brute-force theory checks");
  oracle->require_subcommand(1);
  double beta = 0.05;
  double lo = -1.0;
  double hi = 1.7;
  CLI::App* kelly = oracle->add_subcommand("kelly", "single-stock Kelly optimum, c ~ U[a, b]");
  kelly->add_option("--beta", beta, "bank return");
  kelly->add_option("--a", lo, "lower return bound");
  kelly->add_option("--b", hi, "upper return bound");
  CLI::App* wsmc_example = oracle->add_subcommand("wsmc-example", "two-item set-cover example");
  std::uint64_t fp_seed = 0;
  bool surjective = false;
  CLI::App* random_fp = oracle->add_subcommand("random", "random finite problem report");
  random_fp->add_option("--seed", fp_seed, "generator seed");
  random_fp->add_flag("--surjective", surjective, "proxy image covers every decision");

  CLI11_PARSE(app, argc, argv);

  try {
    auto configure = [&]() {
      ex::ExperimentConfig config = load_config(config_path, profile, problem);
      if (seed) config.seeds = {*seed};
      if (!out_dir.empty()) config.output_dir = out_dir;
      if (!policies.empty()) config.policies = policies;
      if (epochs) config.epochs = *epochs;
      if (timing) config.trainer.record_timing = true;
      config.validate();
      return config;
    };

    if (*gen) {
      const ex::ExperimentConfig config = configure();
      const ex::fs::path root(config.output_dir);
      for (std::uint64_t s : config.seeds) {
        const ex::SeedData sd = ex::make_seed_data(config, s);
        const ex::fs::path dir = ex::seed_dir(root, s);
        ex::fs::create_directories(dir);
        std::ofstream(dir / "instance.json") << sd.instance.dump(2) << "\n";
        std::ofstream(dir / "dataset.json") << dfl::dataset_to_json(sd.data).dump() << "\n";
        std::cout << dir.string() << "\n";
      }
      return 0;
    }
    if (*train || *run) {
      const ex::ExperimentConfig config = configure();
      const ex::ResultsTable table = ex::run_experiment(config);
      std::cout << summary_json(table).dump(2) << "\n";
      return table.all_ok() ? 0 : kExitFailedRuns;
    }
    if (*eval) {
      const dfl::RegretReport rep = ex::evaluate_checkpoint(results_dir, eval_policy, eval_seed);
      std::cout << json{{"policy", eval_policy},
                        {"seed", eval_seed},
                        {"test_mean_abs_regret", rep.mean_absolute_regret},
                        {"instances", rep.per_instance_regret.size()}}
                       .dump(2)
                << "\n";
      return 0;
    }
    if (*report) {
      const ex::ResultsTable table = ex::report(results_dir);
      std::cout << summary_json(table).dump(2) << "\n";
      return table.all_ok() ? 0 : kExitFailedRuns;
    }
    if (*ttest) {
      const dfl::stats::TTestResult r =
          dfl::stats::paired_t_test(parse_list(a_text), parse_list(b_text));
      std::cout << json{{"t", r.t}, {"p", r.p}, {"df", r.df}, {"degenerate", r.degenerate}}.dump(2)
                << "\n";
      return 0;
    }
    if (*kelly) {
      const dfl::oracle::KellyResult r = dfl::oracle::kelly_optimum(beta, lo, hi);
      std::cout << json{{"beta", beta},
                        {"a", lo},
                        {"b", hi},
                        {"bank_share", r.bank_share},
                        {"stock_share", r.stock_share},
                        {"expected_log_growth", r.expected_log_growth},
                        {"all_stock_log_growth", r.all_stock_log_growth}}
                       .dump(2)
                << "\n";
      return 0;
    }
    if (*wsmc_example) {
      const dfl::oracle::FiniteProblem fp = dfl::oracle::wsmc_two_item_problem();
      json out = dfl::oracle::report_to_json(fp);
      const dfl::wsmc::WsmcInstance inst = dfl::wsmc::two_item_instance();
      const std::vector<dfl::Vector> scenarios{{1.0, 1.0}, {0.0, 0.0}};
      json g = json::object();
      for (const dfl::Vector& x : std::vector<dfl::Vector>{
               {1, 1, 0}, {1, 0, 0}, {0, 0, 1}, {0, 0, 0}}) {
        g[json(x).dump()] = dfl::wsmc::expected_objective(inst, x, scenarios);
      }
      out["expected_objective"] = std::move(g);
      const auto dom = dfl::oracle::is_scenario_wise_dominated(fp, {1, 1, 0});
      json witnesses = json::array();
      for (const auto& w : dom.witnesses) witnesses.push_back(w ? json(*w) : json(nullptr));
      out["x_110"] = {{"dominated", dom.dominated}, {"witnesses", std::move(witnesses)}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*random_fp) {
      const auto fp = dfl::oracle::random_finite_problem(fp_seed, surjective);
      std::cout << dfl::oracle::report_to_json(fp).dump(2) << "\n";
      return 0;
    }
  } catch (const dfl::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailedRuns;
  }
  return 0;
}
