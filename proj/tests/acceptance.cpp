// Acceptance run: one PASS/FAIL line per criterion, exit code 0 iff all pass.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "dfl/experiment.hpp"
#include "dfl/milp.hpp"
#include "dfl/oracle.hpp"
#include "dfl/portfolio.hpp"
#include "dfl/ptsp.hpp"
#include "dfl/training.hpp"
#include "dfl/wsmc.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace dfl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << v;
  return ss.str();
}

std::string run_command(const std::string& cmd, int& status) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    status = -1;
    return out;
  }
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  status = pclose(pipe);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> contents for every regular file below `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

// Two-level grid search on the simplex in 2 or 3 dimensions. The coarse grid
// minimizer lies within one coarse step of the projection (the squared
// distance is 1-strongly convex), so a fine grid over that window finds it
// within one fine step.
Vector refined_grid_projection(const Vector& xi) {
  const int d = static_cast<int>(xi.size());
  const int coarse = 200;
  const Vector start = support::grid_projection(xi, coarse);
  const double h = 1.0 / coarse;
  const double fine = 2e-5;
  const int half = static_cast<int>(std::ceil(2.0 * h / fine));
  Vector best = start;
  auto dist = [&](const Vector& x) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += (x[j] - xi[j]) * (x[j] - xi[j]);
    return s;
  };
  double best_d = dist(best);
  for (int a = -half; a <= half; ++a) {
    const double x0 = start[0] + a * fine;
    if (x0 < 0.0 || x0 > 1.0) continue;
    if (d == 2) {
      const Vector x{x0, 1.0 - x0};
      if (dist(x) < best_d) {
        best_d = dist(x);
        best = x;
      }
      continue;
    }
    for (int b = -half; b <= half; ++b) {
      const double x1 = start[1] + b * fine;
      const double x2 = 1.0 - x0 - x1;
      if (x1 < 0.0 || x2 < 0.0) continue;
      const Vector x{x0, x1, x2};
      const double v = dist(x);
      if (v < best_d) {
        best_d = v;
        best = x;
      }
    }
  }
  return best;
}

Outcome kelly_criterion(const std::string& cli) {
  Outcome o;
  const auto start = Clock::now();
  int status = 0;
  const std::string out = run_command(cli + " oracle kelly --beta 0.05 --a -1 --b 1.7", status);
  const double elapsed = seconds_since(start);
  o.require(status == 0, "oracle kelly exit status");
  if (status != 0) return o;
  const json j = json::parse(out);
  const double bank = j.at("bank_share").get<double>();
  const double growth = j.at("all_stock_log_growth").get<double>();
  // beta multiplies x in the expected log, so x is the bank share.
  o.require(std::abs(bank - 0.465) <= 0.005, "x* within 0.005 of 0.465");
  o.require(std::abs(growth - (std::log(2.7) - 1.0)) <= 1e-4, "E[ln(1+c)] within 1e-4");
  o.require(elapsed < 1.0, "runtime < 1 s");
  o.note("x* = " + fmt(bank) + " (bank share), stock share " + fmt(1.0 - bank) +
         ", E[ln(1+c)] = " + fmt(growth) + ", " + fmt(elapsed, 3) + " s");
  return o;
}

Outcome wsmc_example_criterion() {
  Outcome o;
  const auto start = Clock::now();
  const wsmc::WsmcInstance inst = wsmc::two_item_instance();
  const std::vector<Vector> s{{1, 1}, {0, 0}};
  o.require(wsmc::expected_objective(inst, Vector{1, 1, 0}, s) == 5.0, "g(1,1,0) = 5");
  o.require(wsmc::expected_objective(inst, Vector{1, 0, 0}, s) == 6.0, "g(1,0,0) = 6");
  o.require(wsmc::expected_objective(inst, Vector{0, 0, 1}, s) == 7.0, "g(0,0,1) = 7");
  o.require(wsmc::expected_objective(inst, Vector{0, 0, 0}, s) == 7.0, "g(0,0,0) = 7");
  const oracle::FiniteProblem fp = oracle::wsmc_two_item_problem();
  const oracle::Dominance dom = oracle::is_scenario_wise_dominated(fp, Vector{1, 1, 0});
  o.require(dom.dominated, "(1,1,0) dominated");
  for (const auto& w : dom.witnesses) {
    o.require(w.has_value() && *w == Vector{0, 0, 1}, "witness (0,0,1)");
  }
  const oracle::Values v = oracle::enumerate_values(fp);
  o.require(v.v_star == 5.0 && v.v_dfl == 6.0 && v.v_pfl == 7.0, "values 5 < 6 < 7");
  const double elapsed = seconds_since(start);
  o.require(elapsed < 1.0, "runtime < 1 s");
  o.note("v* = " + fmt(v.v_star) + ", v_dfl = " + fmt(v.v_dfl) + ", v_pfl = " + fmt(v.v_pfl) +
         ", " + fmt(elapsed, 3) + " s");
  return o;
}

Outcome solver_criterion() {
  Outcome o;
  const auto start = Clock::now();

  // (a) MILP against enumeration.
  std::mt19937_64 rng(2024);
  int feasible = 0;
  for (int t = 0; t < 50; ++t) {
    const milp::MilpProblem mp = support::random_integer_program(rng);
    const support::BruteResult brute = support::enumerate_integer_program(mp.lp);
    const milp::SolveResult r = milp::solve_milp(mp);
    if (!brute.feasible) {
      o.require(r.status == milp::SolveStatus::kInfeasible, "MILP infeasibility");
      continue;
    }
    ++feasible;
    o.require(r.status == milp::SolveStatus::kOptimal && std::abs(r.value - brute.value) <= 1e-6,
              "MILP value " + std::to_string(t));
  }

  // (b) Held-Karp against permutations, k = 3..8.
  std::uniform_real_distribution<double> w(0.0, 20.0);
  int subsets = 0;
  for (int t = 0; t < 20; ++t) {
    const int k = 3 + t % 6;
    std::vector<std::vector<double>> m(k + 1, std::vector<double>(k + 1, 0.0));
    for (int i = 0; i <= k; ++i) {
      for (int j = 0; j <= k; ++j) {
        if (i != j) m[i][j] = w(rng);
      }
    }
    const ptsp::HeldKarp hk(m);
    // Full set plus a spread of smaller subsets.
    for (unsigned mask = (1U << k) - 1; mask > 0; mask = mask > 7 ? mask - 7 : 0) {
      std::vector<int> members;
      for (int i = 0; i < k; ++i) {
        if ((mask >> i) & 1U) members.push_back(i + 1);
      }
      const double brute = support::permutation_tour(m, members);
      o.require(std::abs(hk.subset_cost(mask) - brute) <= 1e-9, "Held-Karp k=" + std::to_string(k));
      ++subsets;
    }
  }

  // (c) Simplex projection: KKT and grid search.
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int t = 0; t < 40; ++t) {
    const int d = 2 + t % 2;
    Vector xi(d);
    for (double& v : xi) v = u(rng);
    const Vector x = portfolio::project_simplex(xi);
    o.require(std::abs(std::accumulate(x.begin(), x.end(), 0.0) - 1.0) <= 1e-12, "sum to 1");
    double tau = 0.0;
    bool have = false;
    for (int j = 0; j < d; ++j) {
      o.require(x[j] >= 0.0, "nonnegative");
      if (x[j] > 0.0) {
        if (have) o.require(std::abs(xi[j] - x[j] - tau) <= 1e-12, "KKT shared multiplier");
        tau = xi[j] - x[j];
        have = true;
      }
    }
    for (int j = 0; j < d; ++j) {
      if (x[j] == 0.0) o.require(xi[j] <= tau + 1e-12, "KKT inactive");
    }
    const Vector g = refined_grid_projection(xi);
    for (int j = 0; j < d; ++j) worst = std::max(worst, std::abs(x[j] - g[j]));
  }
  o.require(worst <= 1e-4, "projection within 1e-4 of grid search");

  // (d) WSMC closed-form recourse against its LP.
  std::uniform_int_distribution<int> xs(0, 3);
  std::uniform_int_distribution<int> zs(0, 8);
  double gap = 0.0;
  for (int t = 0; t < 100; ++t) {
    const wsmc::WsmcInstance inst = wsmc::generate_instance(5, 10, 1000 + t, 3);
    Vector x(inst.m_sets);
    for (double& v : x) v = xs(rng);
    Vector zeta(inst.n_items);
    for (double& v : zeta) v = zs(rng);
    gap = std::max(gap, std::abs(wsmc::second_stage_value(inst, x, zeta) -
                                 support::wsmc_second_stage_lp(inst, x, zeta)));
  }
  o.require(gap <= 1e-6, "recourse within 1e-6 of LP");
  const double elapsed = seconds_since(start);
  o.require(elapsed < 120.0, "runtime < 2 min");
  o.note(std::to_string(feasible) + " feasible MILPs, " + std::to_string(subsets) +
         " tour subsets, projection gap " + fmt(worst, 3) + ", recourse gap " + fmt(gap, 3) +
         ", " + fmt(elapsed, 3) + " s");
  return o;
}

// A uniformly random feasible decision of each problem.
Vector random_simplex(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Vector x(n);
  for (double& v : x) v = e(rng);
  const double s = std::accumulate(x.begin(), x.end(), 0.0);
  for (double& v : x) v /= s;
  return x;
}

Outcome proxy_criterion() {
  Outcome o;
  std::mt19937_64 rng(77);
  const portfolio::PortfolioProblem pf(4, 0.05, 1);
  const wsmc::WsmcProblem ws(wsmc::generate_instance(5, 10, 3), 1);
  const ptsp::PtspProblem pt(ptsp::generate_instance(6, 3), 1);

  // Surjectivity round trips.
  double pf_gap = 0.0;
  int exact = 0;
  std::uniform_int_distribution<int> status(0, 2);
  for (int t = 0; t < 100; ++t) {
    const Vector x = random_simplex(5, rng);
    const Vector back = pf.solve_quadratic(x).values;
    for (std::size_t j = 0; j < x.size(); ++j) pf_gap = std::max(pf_gap, std::abs(back[j] - x[j]));

    Vector w(10);
    for (int j = 0; j < 10; ++j) {
      std::uniform_int_distribution<int> b(0, ws.instance().x_upper[j]);
      w[j] = b(rng);
    }
    exact += ws.solve_quadratic(w).values == w ? 1 : 0;

    ptsp::TourDecision dec;
    for (int i = 1; i <= 6; ++i) {
      const int s = status(rng);
      if (s == 1) dec.tour.push_back(i);
      if (s == 2) dec.direct.push_back(i);
    }
    std::shuffle(dec.tour.begin(), dec.tour.end(), rng);
    const Vector e = ptsp::encode(6, dec);
    exact += pt.solve_quadratic(e).values == e ? 1 : 0;
  }
  o.require(pf_gap <= 1e-6, "portfolio round trip within 1e-6");
  o.require(exact == 200, "set-cover and tour round trips exact");

  // One scenario against the deterministic proxy, on projected predictions.
  std::uniform_real_distribution<double> ret(-0.9, 1.6);
  std::uniform_real_distribution<double> dem(-1.0, 11.0);
  std::uniform_real_distribution<double> need(-0.2, 1.2);
  double s1_gap = 0.0;
  auto compare = [&](const Problem& p, const Vector& raw_hat, const Vector& raw_true) {
    const Vector c_hat = p.project_parameters(raw_hat);
    const Vector c_true = p.project_parameters(raw_true);
    const std::vector<Vector> one{c_hat};
    s1_gap = std::max(s1_gap, std::abs(p.objective(c_true, p.solve_scenarios(one)) -
                                       p.objective(c_true, p.solve_deterministic(c_hat))));
  };
  for (int t = 0; t < 100; ++t) {
    Vector a(4), b(4);
    for (double& v : a) v = ret(rng);
    for (double& v : b) v = ret(rng);
    compare(pf, a, b);
    Vector c(5), d(5);
    for (double& v : c) v = dem(rng);
    for (double& v : d) v = dem(rng);
    compare(ws, c, d);
    Vector e(6), f(6);
    for (double& v : e) v = need(rng);
    for (double& v : f) v = need(rng);
    compare(pt, e, f);
  }
  o.require(s1_gap <= 1e-6, "Scenario(1) equals deterministic within 1e-6");

  // The deterministic tour proxy never serves anyone directly.
  int directs = 0;
  for (int t = 0; t < 50; ++t) {
    const ptsp::PtspProblem q(ptsp::generate_instance(6, 500 + t), 1);
    Vector raw(6);
    for (double& v : raw) v = need(rng);
    const DecisionVector x = q.solve_proxy(ProxyConfig::Deterministic(), raw);
    directs += static_cast<int>(ptsp::decode(6, x.values).direct.size());
  }
  o.require(directs == 0, "no direct trips");
  o.note("portfolio round-trip gap " + fmt(pf_gap, 3) + ", S1 gap " + fmt(s1_gap, 3) +
         ", direct trips " + std::to_string(directs));
  return o;
}

Outcome sfge_criterion() {
  Outcome o;
  const training::ToyEstimate lin =
      training::sfge_toy_gradient([](double c) { return c; }, 0.0, 1.0, 100000, 11);
  const double mu = 1.5;
  const training::ToyEstimate quad =
      training::sfge_toy_gradient([](double c) { return c * c; }, mu, 1.0, 100000, 12);
  o.require(std::abs(lin.mean - 1.0) <= 3.0 * lin.standard_error, "linear toy within 3 SE of 1");
  o.require(std::abs(quad.mean - 2.0 * mu) <= 3.0 * quad.standard_error,
            "quadratic toy within 3 SE of 2 mu");
  o.note("linear " + fmt(lin.mean) + " +/- " + fmt(lin.standard_error, 3) + ", quadratic " +
         fmt(quad.mean) + " +/- " + fmt(quad.standard_error, 3) + " (2 mu = 3)");
  return o;
}

Outcome value_chain_criterion() {
  Outcome o;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const oracle::Values v = oracle::enumerate_values(oracle::random_finite_problem(seed, false));
    o.require(v.v_star <= v.v_dfl + 1e-12 && v.v_dfl <= v.v_pfl + 1e-12,
              "chain on seed " + std::to_string(seed));
    const oracle::Values s = oracle::enumerate_values(oracle::random_finite_problem(seed, true));
    o.require(s.v_dfl == s.v_star, "surjective v_dfl = v* on seed " + std::to_string(seed));
  }
  o.note("20 random problems, both variants");
  return o;
}

struct DeskRun {
  experiment::ResultsTable table;
  double seconds = 0.0;
};

DeskRun desk_run(const std::string& problem, const fs::path& dir) {
  experiment::ExperimentConfig cfg = experiment::ExperimentConfig::Desk(problem);
  cfg.policies = {"dfl_d", "dfl_s2", "dfl_q"};
  cfg.output_dir = dir.string();
  fs::remove_all(dir);
  const auto start = Clock::now();
  DeskRun r;
  r.table = experiment::run_experiment(cfg);
  r.seconds = seconds_since(start);
  return r;
}

const experiment::PolicySummary* find(const experiment::ResultsTable& t, const std::string& p) {
  for (const auto& s : t.summary) {
    if (s.policy == p) return &s;
  }
  return nullptr;
}

Outcome ordering_criterion(const fs::path& out) {
  Outcome o;
  for (const std::string problem : {"wsmc", "ptsp", "portfolio"}) {
    const DeskRun r = desk_run(problem, out / problem);
    o.require(r.table.all_ok(), problem + ": all runs succeeded");
    o.require(r.seconds <= 3600.0, problem + ": within 60 min");
    const auto* d = find(r.table, "dfl_d");
    const auto* s2 = find(r.table, "dfl_s2");
    const auto* q = find(r.table, "dfl_q");
    if (!d || !s2 || !q) {
      o.require(false, problem + ": summary rows");
      continue;
    }
    std::string line = problem + ": D " + fmt(d->mean, 4) + ", S2 " + fmt(s2->mean, 4) +
                       " (p " + fmt(s2->p.value_or(1.0), 3) + "), Q " + fmt(q->mean, 4) + " (p " +
                       fmt(q->p.value_or(1.0), 3) + "), " + fmt(r.seconds, 3) + " s";
    o.note(line);
    if (problem == "portfolio") {
      o.require(q->mean <= d->mean, "portfolio: Q <= D");
    } else {
      o.require(s2->mean < d->mean && s2->p.value_or(1.0) < 0.05, problem + ": S2 < D, p < 0.05");
      o.require(q->mean < d->mean && q->p.value_or(1.0) < 0.05, problem + ": Q < D, p < 0.05");
    }
  }
  return o;
}

Outcome determinism_criterion(const fs::path& out, const std::string& cli) {
  Outcome o;
  // The same command again, into the same directory, against a snapshot of
  // the first run's files.
  for (const std::string problem : {"wsmc", "ptsp", "portfolio"}) {
    const fs::path dir = out / problem;
    const auto before = tree(dir);
    desk_run(problem, dir);
    const auto after = tree(dir);
    o.require(!before.empty() && before == after, problem + ": rerun byte-identical");
    o.note(problem + ": " + std::to_string(before.size()) + " files compared");
  }
  const fs::path dir = out / "cli_ptsp";
  fs::remove_all(dir);
  const std::string cmd = cli + " run --problem ptsp --seed 2 --epochs 5 --policy dfl_d" +
                          " --policy dfl_q --out " + dir.string() + " > /dev/null";
  int s1 = 0;
  int s2 = 0;
  run_command(cmd, s1);
  const auto before = tree(dir);
  run_command(cmd, s2);
  o.require(s1 == 0 && s2 == 0, "cli run exit status");
  o.require(!before.empty() && before == tree(dir), "cli rerun byte-identical");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance_runs";
  std::string cli = DFL_CLI_PATH;
  bool skip_experiments = false;
  app.add_option("--out", out, "directory for experiment outputs");
  app.add_option("--cli", cli, "path to the dflbench executable");
  app.add_flag("--skip-experiments", skip_experiments, "only the fast criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(out);

  int failed = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name;
    for (const std::string& n : o.notes) std::cout << " | " << n;
    std::cout << std::endl;
    if (!o.pass) ++failed;
  };
  auto guarded = [&](auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      Outcome o;
      o.require(false, std::string("exception: ") + e.what());
      return o;
    }
  };

  report(1, "Kelly oracle", guarded([&] { return kelly_criterion(cli); }));
  report(2, "set-cover example", guarded(wsmc_example_criterion));
  report(3, "solver oracles", guarded(solver_criterion));
  report(4, "proxy structure", guarded(proxy_criterion));
  report(5, "score-function estimator", guarded(sfge_criterion));
  report(6, "value chain", guarded(value_chain_criterion));
  if (skip_experiments) {
    std::cout << "SKIP  7. desk experiment ordering\nSKIP  8. determinism" << std::endl;
  } else {
    report(7, "desk experiment ordering", guarded([&] { return ordering_criterion(out); }));
    report(8, "determinism", guarded([&] { return determinism_criterion(out, cli); }));
  }
  return failed == 0 ? 0 : 1;
}
