#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dfl/core.hpp"

// Exhaustive checks of the value hierarchy and dominance results on problems
// small enough to enumerate.
namespace dfl::oracle {

struct WeightedScenario {
  Vector c;
  double probability = 0.0;
};

using CostFn = std::function<double(std::span<const double> c, const Vector& x)>;

struct FiniteProblem {
  std::vector<Vector> decisions;
  std::vector<WeightedScenario> scenarios;
  std::vector<Vector> prediction_candidates;
  // Realized cost used for V*, V_DFL, V_PFL.
  CostFn cost;
  // Objective the deterministic proxy minimizes at a prediction, and the cost
  // under which dominance is judged. Falls back to `cost` when empty.
  CostFn proxy_cost;

  void validate() const;
  double expected_cost(const Vector& x) const;
  Vector mean_scenario() const;
  // Index of argmin_x proxy_cost(c_hat, x); ties go to the lexicographically
  // smallest decision.
  std::size_t proxy_decision(std::span<const double> c_hat) const;
  double proxy_value(std::span<const double> c, const Vector& x) const;
};

struct Values {
  double v_star = 0.0;
  double v_dfl = 0.0;
  double v_pfl = 0.0;
  std::size_t star_index = 0;
  std::size_t dfl_index = 0;
  std::size_t pfl_index = 0;
  std::vector<Vector> candidates;  // as evaluated, mean appended if absent
};

Values enumerate_values(const FiniteProblem& fp);

// Indices of decisions reached by the proxy over the candidate set.
std::vector<std::size_t> proxy_image(const FiniteProblem& fp);

struct Dominance {
  bool dominated = false;
  // Per scenario: a strictly cheaper decision, if any. A decision that is
  // strictly cheaper in every scenario is preferred when one exists.
  std::vector<std::optional<Vector>> witnesses;
};

Dominance is_scenario_wise_dominated(const FiniteProblem& fp, const Vector& x);

struct DominanceReport {
  Values values;
  Vector x_star;
  bool lhs = false;  // x* is scenario-wise dominated
  bool rhs = false;  // v_dfl > v_star
  bool holds() const { return lhs == rhs; }
};

DominanceReport check_dominance(const FiniteProblem& fp);

json report_to_json(const FiniteProblem& fp);

// Two-item set-cover example with demand scenarios {(1,1), (0,0)} at
// probability 1/2, decisions {0,1,2}^3, covering-form proxy and the integer
// grid {0,1,2}^2 plus (0.5, 0.5) as candidates.
FiniteProblem wsmc_two_item_problem();

// Random scalar problem: cost (c - t_x)^2 + h_x with at most 4 decisions and
// 3 scenarios; candidates are the scenario support plus the mean. With
// `surjective`, h = 0 and the candidates are the targets t_x.
FiniteProblem random_finite_problem(std::uint64_t seed, bool surjective);

// c ~ U[a, b], one stock against a bank paying beta; x is the bank share.
struct KellyResult {
  double bank_share = 0.0;
  double stock_share = 0.0;
  double expected_log_growth = 0.0;  // at the optimum
  double all_stock_log_growth = 0.0; // E[ln(1 + c)]
};

double kelly_expected_log(double beta, double a, double b, double bank_share);
KellyResult kelly_optimum(double beta, double a, double b);

}  // namespace dfl::oracle
