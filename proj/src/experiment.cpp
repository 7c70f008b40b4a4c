#include "dfl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "dfl/portfolio.hpp"
#include "dfl/ptsp.hpp"
#include "dfl/rng.hpp"
#include "dfl/stats.hpp"
#include "dfl/wsmc.hpp"

namespace dfl::experiment {
namespace {

constexpr int kResidualScenarios = 16;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_pfl(const std::string& policy) { return policy.rfind("pfl_", 0) == 0; }

// Writes through a temporary file so readers never see a partial result.
void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw UsageError("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  return json::parse(in);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_number(const std::string& s) {
  if (s.empty() || s == "nan") return kNaN;
  return std::stod(s);
}

std::string train_log_csv(const std::vector<training::EpochRecord>& history, bool pfl) {
  std::string out = "epoch,split,mean_absolute_regret,sigma_mean,wall_time_s\n";
  for (const training::EpochRecord& r : history) {
    if (!pfl) {
      out += std::to_string(r.epoch) + ",train," + format_number(r.train_loss) + "," +
             format_number(r.sigma_mean) + "," + format_number(r.wall_time_s) + "\n";
    }
    out += std::to_string(r.epoch) + ",val," + format_number(r.val_mean_abs_regret) + "," +
           format_number(r.sigma_mean) + "," + format_number(r.wall_time_s) + "\n";
  }
  return out;
}

std::vector<training::EpochRecord> parse_train_log(const fs::path& path) {
  std::vector<training::EpochRecord> history;
  for (const auto& row : read_csv(path)) {
    if (row.size() < 5 || row[1] != "val") continue;
    training::EpochRecord r;
    r.epoch = std::stoi(row[0]);
    r.val_mean_abs_regret = parse_number(row[2]);
    r.sigma_mean = parse_number(row[3]);
    r.wall_time_s = parse_number(row[4]);
    history.push_back(r);
  }
  return history;
}

// Normalization, summaries, and every table file.
ResultsTable finalize(const fs::path& root, const std::string& problem,
                      const std::vector<std::string>& policies,
                      const std::vector<std::uint64_t>& seeds, std::vector<RunRecord> runs) {
  ResultsTable table;
  table.problem = problem;

  std::map<std::string, std::map<std::uint64_t, double>> regret;
  for (const RunRecord& r : runs) {
    if (r.ok) regret[r.policy][r.seed] = r.test_mean_abs_regret;
  }
  double base = kNaN;
  if (regret.count("dfl_d") && !regret["dfl_d"].empty()) {
    double s = 0.0;
    for (const auto& [seed, v] : regret["dfl_d"]) s += v;
    base = s / static_cast<double>(regret["dfl_d"].size());
  }
  auto normalize = [&](double v) { return base > 0.0 ? v / base : kNaN; };

  std::string results = "problem,policy,seed,test_mean_abs_regret,normalized,epochs,wall_time_s\n";
  std::string failures = "problem,policy,seed,error\n";
  for (RunRecord& r : runs) {
    if (!r.ok) {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      failures += problem + "," + r.policy + "," + std::to_string(r.seed) + "," + msg + "\n";
      table.missing.push_back(r.policy + "/" + std::to_string(r.seed));
      continue;
    }
    r.normalized = normalize(r.test_mean_abs_regret);
    results += problem + "," + r.policy + "," + std::to_string(r.seed) + "," +
               format_number(r.test_mean_abs_regret) + "," + format_number(r.normalized) + "," +
               std::to_string(r.epochs) + "," + format_number(r.wall_time_s) + "\n";
  }
  // Requested runs that never produced a record at all.
  for (const std::string& policy : policies) {
    for (std::uint64_t seed : seeds) {
      const bool present = std::any_of(runs.begin(), runs.end(), [&](const RunRecord& r) {
        return r.policy == policy && r.seed == seed;
      });
      if (!present) table.missing.push_back(policy + "/" + std::to_string(seed));
    }
  }

  std::string summary = "problem,policy,runs,mean,std,normalized_mean\n";
  std::string ttest = "problem,policy,baseline,t,p,df,degenerate\n";
  for (const std::string& policy : policies) {
    PolicySummary s;
    s.policy = policy;
    Vector values;
    for (const auto& [seed, v] : regret[policy]) values.push_back(v);
    s.runs = static_cast<int>(values.size());
    s.mean = values.empty() ? kNaN : stats::mean(values);
    s.std = values.empty() ? kNaN : stats::sample_std(values);
    s.normalized_mean = normalize(s.mean);
    summary += problem + "," + policy + "," + std::to_string(s.runs) + "," +
               format_number(s.mean) + "," + format_number(s.std) + "," +
               format_number(s.normalized_mean) + "\n";
    if (policy != "dfl_d" && regret.count("dfl_d")) {
      Vector a;
      Vector b;
      for (const auto& [seed, v] : regret[policy]) {
        auto it = regret["dfl_d"].find(seed);
        if (it == regret["dfl_d"].end()) continue;
        a.push_back(v);
        b.push_back(it->second);
      }
      if (a.size() >= 2) {
        const stats::TTestResult t = stats::paired_t_test(a, b);
        s.t = t.t;
        s.p = t.p;
        s.df = t.df;
        s.degenerate = t.degenerate;
        ttest += problem + "," + policy + ",dfl_d," + format_number(t.t) + "," +
                 format_number(t.p) + "," + std::to_string(t.df) + "," +
                 (t.degenerate ? "1" : "0") + "\n";
      }
    }
    table.summary.push_back(std::move(s));
  }

  // Learning curves normalized by the mean over runs of each run's best
  // validation regret. The residual-SAA policy has no curve of its own.
  double curve_base = 0.0;
  int curve_runs = 0;
  for (const RunRecord& r : runs) {
    if (!r.ok || r.policy == "pfl_s16" || r.history.empty()) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : r.history) best = std::min(best, e.val_mean_abs_regret);
    curve_base += best;
    ++curve_runs;
  }
  curve_base = curve_runs > 0 ? curve_base / curve_runs : kNaN;
  std::string curves = "problem,policy,seed,epoch,val_mean_abs_regret_normalized\n";
  for (const RunRecord& r : runs) {
    if (!r.ok || r.policy == "pfl_s16") continue;
    for (const auto& e : r.history) {
      const double v = curve_base > 0.0 ? e.val_mean_abs_regret / curve_base : kNaN;
      curves += problem + "," + r.policy + "," + std::to_string(r.seed) + "," +
                std::to_string(e.epoch) + "," + format_number(v) + "\n";
    }
  }

  write_file(root / "results.csv", results);
  write_file(root / "failures.csv", failures);
  write_file(root / "table.csv", summary);
  write_file(root / "ttest.csv", ttest);
  write_file(root / "curves.csv", curves);
  table.runs = std::move(runs);
  return table;
}

ExperimentConfig desk_defaults(const std::string& problem) {
  ExperimentConfig c;
  c.problem = problem;
  return c;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path seed_dir(const fs::path& root, std::uint64_t seed) {
  return root / ("seed_" + std::to_string(seed));
}

fs::path run_dir(const fs::path& root, const std::string& policy, std::uint64_t seed) {
  return seed_dir(root, seed) / policy;
}

ExperimentConfig ExperimentConfig::Desk(const std::string& problem) {
  ExperimentConfig c = desk_defaults(problem);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::Full(const std::string& problem) {
  ExperimentConfig c = desk_defaults(problem);
  c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  if (problem == "portfolio") {
    // 70/15/15 of the 2888 windows available from 2898 daily rows.
    c.train = 2021;
    c.validation = 433;
    c.test = 434;
    c.epochs = 250;
  } else if (problem == "wsmc") {
    c.train = 1000;
    c.validation = 250;
    c.test = 1250;
    c.sets = 25;
    c.epochs = 250;
  } else {
    c.train = 1000;
    c.validation = 250;
    c.test = 1250;
    c.customers = 10;
    c.epochs = 25;
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (problem != "portfolio" && problem != "wsmc" && problem != "ptsp") {
    throw UsageError("unknown problem '" + problem + "'");
  }
  if (policies.empty()) throw UsageError("no policies requested");
  for (const std::string& p : policies) {
    const auto& known = known_policies();
    if (std::find(known.begin(), known.end(), p) == known.end()) {
      throw UsageError("unknown policy '" + p + "'");
    }
  }
  if (train < 1 || validation < 1 || test < 1) throw UsageError("every split needs instances");
  if (seeds.empty()) throw UsageError("no seeds requested");
  if (epochs < 0) throw UsageError("epochs must be non-negative");
  if (feature_dim < 1) throw UsageError("feature_dim must be >= 1");
  if (problem == "wsmc" && (items < 1 || sets <= items)) {
    throw UsageError("WSMC needs sets > items >= 1");
  }
  if (problem == "ptsp" && (customers < 2 || customers > 14)) {
    throw UsageError("PTSP needs 2 <= customers <= 14");
  }
  if (problem == "portfolio" && securities < 2) throw UsageError("portfolio needs k >= 2");
  trainer.validate();
}

json config_to_json(const ExperimentConfig& c) {
  return {{"problem", c.problem},
          {"policies", c.policies},
          {"train", c.train},
          {"validation", c.validation},
          {"test", c.test},
          {"seeds", c.seeds},
          {"epochs", c.epochs},
          {"feature_dim", c.feature_dim},
          {"securities", c.securities},
          {"returns_csv", c.returns_csv},
          {"window", c.window},
          {"items", c.items},
          {"sets", c.sets},
          {"zeta_max", c.zeta_max},
          {"x_upper", c.x_upper},
          {"customers", c.customers},
          {"rho", c.rho},
          {"trainer", training::config_to_json(c.trainer)},
          {"output_dir", c.output_dir}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c = desk_defaults(j.value("problem", std::string("wsmc")));
  c.policies = j.value("policies", c.policies);
  c.train = j.value("train", c.train);
  c.validation = j.value("validation", c.validation);
  c.test = j.value("test", c.test);
  c.seeds = j.value("seeds", c.seeds);
  c.epochs = j.value("epochs", c.epochs);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.securities = j.value("securities", c.securities);
  c.returns_csv = j.value("returns_csv", c.returns_csv);
  c.window = j.value("window", c.window);
  c.items = j.value("items", c.items);
  c.sets = j.value("sets", c.sets);
  c.zeta_max = j.value("zeta_max", c.zeta_max);
  c.x_upper = j.value("x_upper", c.x_upper);
  c.customers = j.value("customers", c.customers);
  c.rho = j.value("rho", c.rho);
  if (j.contains("trainer")) c.trainer = training::config_from_json(j.at("trainer"));
  c.output_dir = j.value("output_dir", c.output_dir);
  c.validate();
  return c;
}

SeedData make_seed_data(const ExperimentConfig& config, std::uint64_t seed) {
  SeedData out;
  if (config.problem == "portfolio") {
    portfolio::ReturnsDataset returns;
    if (!config.returns_csv.empty()) {
      returns = portfolio::load_returns_csv(config.returns_csv, config.window);
      returns.data.seed = seed;
    } else {
      portfolio::ReturnsConfig rc;
      rc.securities = config.securities;
      rc.feature_dim = config.feature_dim;
      rc.train = config.train;
      rc.validation = config.validation;
      rc.test = config.test;
      returns = portfolio::generate_returns(rc, seed);
    }
    auto problem = std::make_unique<portfolio::PortfolioProblem>(returns.data.d_c, returns.beta,
                                                                 returns.data.p);
    out.instance = portfolio::instance_to_json(*problem);
    out.problem = std::move(problem);
    out.data = std::move(returns.data);
  } else if (config.problem == "wsmc") {
    wsmc::WsmcInstance inst = wsmc::generate_instance(config.items, config.sets, seed, config.x_upper);
    wsmc::DemandConfig dc;
    dc.feature_dim = config.feature_dim;
    dc.train = config.train;
    dc.validation = config.validation;
    dc.test = config.test;
    dc.zeta_max = config.zeta_max;
    out.data = wsmc::generate_demands(inst, dc, seed);
    out.instance = wsmc::instance_to_json(inst);
    out.problem = std::make_unique<wsmc::WsmcProblem>(std::move(inst), config.feature_dim);
  } else {
    ptsp::PtspInstance inst = ptsp::generate_instance(config.customers, seed, config.rho);
    ptsp::ServiceConfig sc;
    sc.feature_dim = config.feature_dim;
    sc.train = config.train;
    sc.validation = config.validation;
    sc.test = config.test;
    out.data = ptsp::generate_service(inst, sc, seed);
    out.instance = ptsp::instance_to_json(inst);
    out.problem = std::make_unique<ptsp::PtspProblem>(std::move(inst), config.feature_dim);
  }
  out.data.validate(true);
  return out;
}

std::unique_ptr<Problem> problem_from_json(const std::string& problem, const json& instance,
                                           int feature_dim) {
  if (problem == "portfolio") {
    return std::make_unique<portfolio::PortfolioProblem>(
        instance.at("k").get<int>(), instance.at("beta").get<double>(), feature_dim);
  }
  if (problem == "wsmc") {
    return std::make_unique<wsmc::WsmcProblem>(wsmc::instance_from_json(instance), feature_dim);
  }
  if (problem == "ptsp") {
    return std::make_unique<ptsp::PtspProblem>(ptsp::instance_from_json(instance), feature_dim);
  }
  throw UsageError("unknown problem '" + problem + "'");
}

ProxyConfig policy_proxy(const std::string& policy) {
  if (policy == "pfl_d" || policy == "dfl_d") return ProxyConfig::Deterministic();
  if (policy == "dfl_q") return ProxyConfig::Quadratic();
  if (policy == "pfl_s16" || policy == "dfl_s16") return ProxyConfig::Scenario(16);
  if (policy == "dfl_s2") return ProxyConfig::Scenario(2);
  if (policy == "dfl_s8") return ProxyConfig::Scenario(8);
  throw UsageError("unknown policy '" + policy + "'");
}

training::TrainConfig policy_train_config(const ExperimentConfig& config,
                                          const std::string& policy, std::uint64_t seed) {
  training::TrainConfig tc = config.trainer;
  tc.epochs = config.epochs;
  tc.seed = derive_seed(seed, "train");
  const ProxyConfig proxy = policy_proxy(policy);
  if (config.problem == "wsmc" && proxy.kind == ProxyKind::kQuadratic) tc.samples_per_point = 2;
  if (config.problem == "portfolio" && proxy.kind == ProxyKind::kScenario) {
    tc.standardize_outputs = false;
  }
  return tc;
}

ResultsTable run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path root(config.output_dir);
  fs::create_directories(root);
  write_file(root / "config.json", config_to_json(config).dump(2) + "\n");

  std::vector<RunRecord> runs;
  for (std::uint64_t seed : config.seeds) {
    SeedData sd;
    try {
      sd = make_seed_data(config, seed);
    } catch (const std::exception& e) {
      for (const std::string& policy : config.policies) {
        RunRecord rec;
        rec.policy = policy;
        rec.seed = seed;
        rec.error = std::string("data: ") + e.what();
        runs.push_back(std::move(rec));
      }
      continue;
    }
    const fs::path sdir = seed_dir(root, seed);
    write_file(sdir / "instance.json", sd.instance.dump(2) + "\n");
    write_file(sdir / "dataset.json", dataset_to_json(sd.data).dump() + "\n");
    const Problem& problem = *sd.problem;
    const std::vector<Instance> val = sd.data.split(Split::kValidation);
    const std::vector<Instance> test = sd.data.split(Split::kTest);
    const Vector test_opt = in_data_optimal_costs(problem, test);

    std::optional<training::TrainResult> pfl;
    double pfl_seconds = 0.0;
    for (const std::string& policy : config.policies) {
      RunRecord rec;
      rec.policy = policy;
      rec.seed = seed;
      rec.epochs = config.epochs;
      try {
        const auto start = std::chrono::steady_clock::now();
        json checkpoint = {{"policy", policy}, {"seed", seed}};
        training::TrainResult result;
        RegretReport rep;
        bool reused = false;
        if (is_pfl(policy)) {
          reused = pfl.has_value();
          if (!pfl) {
            pfl = training::train_pfl(problem, sd.data, policy_train_config(config, "pfl_d", seed));
            pfl_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          }
          result = *pfl;
          if (policy == "pfl_d") {
            const training::GaussianPredictor& model = result.predictor;
            rep = mean_absolute_regret(
                problem, test, [&](std::span<const double> z) { return model.decide(problem, z); },
                {}, seed, &test_opt);
          } else {
            const std::uint64_t residual_seed = derive_seed(seed, "residual");
            const training::ResidualSaaPolicy saa(problem, result.predictor, val,
                                                  kResidualScenarios, residual_seed);
            rep = mean_absolute_regret(
                problem, test, [&](std::span<const double> z) { return saa(z); }, {}, seed,
                &test_opt);
            checkpoint["residual"] = {{"n", kResidualScenarios}, {"seed", residual_seed}};
          }
        } else {
          result = training::train_dfl(problem, sd.data, policy_proxy(policy),
                                       policy_train_config(config, policy, seed));
          const training::GaussianPredictor& model = result.predictor;
          rep = mean_absolute_regret(
              problem, test, [&](std::span<const double> z) { return model.decide(problem, z); },
              {}, seed, &test_opt);
        }
        checkpoint["best_epoch"] = result.best_epoch;
        checkpoint["best_validation"] = result.best_validation;
        checkpoint["predictor"] = training::predictor_to_json(result.predictor);
        const fs::path rdir = run_dir(root, policy, seed);
        write_file(rdir / "checkpoint.json", checkpoint.dump() + "\n");
        write_file(rdir / "train_log.csv", train_log_csv(result.history, is_pfl(policy)));
        rec.ok = true;
        rec.test_mean_abs_regret = rep.mean_absolute_regret;
        rec.history = result.history;
        if (config.trainer.record_timing) {
          rec.wall_time_s =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          // Both PFL policies are charged for the shared training.
          if (reused) rec.wall_time_s += pfl_seconds;
        }
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
      }
      runs.push_back(std::move(rec));
    }
  }
  return finalize(root, config.problem, config.policies, config.seeds, std::move(runs));
}

ResultsTable report(const fs::path& results_dir) {
  const ExperimentConfig config = config_from_json(read_json(results_dir / "config.json"));
  std::vector<RunRecord> runs;
  if (fs::exists(results_dir / "results.csv")) {
    for (const auto& row : read_csv(results_dir / "results.csv")) {
      if (row.size() < 7) continue;
      RunRecord r;
      r.policy = row[1];
      r.seed = std::stoull(row[2]);
      r.ok = true;
      r.test_mean_abs_regret = parse_number(row[3]);
      r.epochs = std::stoi(row[5]);
      r.wall_time_s = parse_number(row[6]);
      const fs::path log = run_dir(results_dir, r.policy, r.seed) / "train_log.csv";
      if (fs::exists(log)) r.history = parse_train_log(log);
      runs.push_back(std::move(r));
    }
  }
  if (fs::exists(results_dir / "failures.csv")) {
    for (const auto& row : read_csv(results_dir / "failures.csv")) {
      if (row.size() < 4) continue;
      RunRecord r;
      r.policy = row[1];
      r.seed = std::stoull(row[2]);
      r.error = row[3];
      runs.push_back(std::move(r));
    }
  }
  // Keep the run order of the original experiment: seed-major, then policy.
  auto rank = [&](const RunRecord& r) {
    const auto s = std::find(config.seeds.begin(), config.seeds.end(), r.seed) - config.seeds.begin();
    const auto p = std::find(config.policies.begin(), config.policies.end(), r.policy) -
                   config.policies.begin();
    return std::make_pair(s, p);
  };
  std::stable_sort(runs.begin(), runs.end(),
                   [&](const RunRecord& a, const RunRecord& b) { return rank(a) < rank(b); });
  return finalize(results_dir, config.problem, config.policies, config.seeds, std::move(runs));
}

RegretReport evaluate_checkpoint(const fs::path& results_dir, const std::string& policy,
                                 std::uint64_t seed) {
  const json config = read_json(results_dir / "config.json");
  const fs::path sdir = seed_dir(results_dir, seed);
  const ContextDataset data = dataset_from_json(read_json(sdir / "dataset.json"));
  const std::unique_ptr<Problem> problem =
      problem_from_json(config.at("problem").get<std::string>(), read_json(sdir / "instance.json"),
                        data.p);
  const json checkpoint = read_json(run_dir(results_dir, policy, seed) / "checkpoint.json");
  const training::GaussianPredictor model =
      training::predictor_from_json(checkpoint.at("predictor"));
  const std::vector<Instance> test = data.split(Split::kTest);
  if (checkpoint.contains("residual")) {
    const training::ResidualSaaPolicy saa(*problem, model, data.split(Split::kValidation),
                                          checkpoint["residual"].at("n").get<int>(),
                                          checkpoint["residual"].at("seed").get<std::uint64_t>());
    return mean_absolute_regret(*problem, test, [&](std::span<const double> z) { return saa(z); },
                                {}, seed);
  }
  return mean_absolute_regret(
      *problem, test, [&](std::span<const double> z) { return model.decide(*problem, z); }, {},
      seed);
}

}  // namespace dfl::experiment
