#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfl/core.hpp"
#include "dfl/milp.hpp"

// Two-stage weighted-set multi-cover with refundable single-item sets.
// First stage buys integer copies x_j of each set; after the demand zeta is
// revealed, unmet coverage is bought at c_plus and excess coverage may be
// returned for c_minus, at most x_i units for single-item set i.
namespace dfl::wsmc {

inline constexpr std::string_view kProblemId = "wsmc";

struct WsmcInstance {
  int n_items = 0;
  int m_sets = 0;
  // n_items x m_sets incidence, row-major; the first n_items sets are the
  // single-item sets.
  std::vector<std::vector<int>> A;
  Vector c;
  Vector c_plus;
  Vector c_minus;
  std::vector<int> x_upper;
  std::uint64_t seed = 0;

  // Throws UsageError when the structural invariants fail.
  void validate() const;
  std::vector<int> coverage_mask() const;  // bitmask of items per set
};

// Two-item set-cover example: c = (4,4,7),
// A = [[1,0,1],[0,1,1]], c_plus = (7,7), c_minus = (3,3), x_upper = 2.
WsmcInstance two_item_instance();

double second_stage_value(const WsmcInstance& inst, std::span<const double> x,
                          std::span<const double> zeta);
double expected_objective(const WsmcInstance& inst, std::span<const double> x,
                          std::span<const Vector> scenarios);

// The scenario MILP: integer x, per-scenario shortfall/excess variables.
milp::MilpProblem build_scenario_milp(const WsmcInstance& inst,
                                      std::span<const Vector> scenarios);

class WsmcProblem : public Problem {
 public:
  WsmcProblem(WsmcInstance instance, int feature_dim);

  std::string_view id() const override { return kProblemId; }
  Dims dims() const override;
  const WsmcInstance& instance() const { return inst_; }

  double objective(std::span<const double> zeta, const DecisionVector& x) const override;
  DecisionVector solve_deterministic(std::span<const double> zeta) const override;
  DecisionVector solve_scenarios(std::span<const Vector> scenarios) const override;
  // Box projection: nearest integer in [0, x_upper], halves round down.
  DecisionVector solve_quadratic(std::span<const double> xi) const override;
  bool is_feasible(const DecisionVector& x) const override;
  // Demands are non-negative integers: round, then clamp at 0.
  Vector project_parameters(std::span<const double> zeta) const override;

 private:
  WsmcInstance inst_;
  int feature_dim_;
};

// Cost bounds for a new multi-item set given already-priced sets:
// lower = max cost over proper subsets + 1, upper = cheapest exact partition
// into existing coverages - 1.
struct CostBounds {
  int lower = 0;
  int upper = 0;
};
CostBounds cost_bounds(int coverage, std::span<const int> existing_coverage,
                       std::span<const int> existing_cost);

WsmcInstance generate_instance(int n_items, int m_sets, std::uint64_t seed,
                               int x_upper = 10);

// Pairs (j, k) where set j covers a subset of set k at no lower cost.
std::vector<std::pair<int, int>> dominated_sets(const WsmcInstance& inst);

struct DemandConfig {
  int feature_dim = 5;
  int train = 200;
  int validation = 50;
  int test = 200;
  double zeta_scale = 5.0;
  double zeta_max = 10.0;
  int degree = 5;
  double noise_halfwidth = 0.5;
};

ContextDataset generate_demands(const WsmcInstance& inst, const DemandConfig& config,
                                std::uint64_t seed);

json instance_to_json(const WsmcInstance& inst);
WsmcInstance instance_from_json(const json& j);

}  // namespace dfl::wsmc
