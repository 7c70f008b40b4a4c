#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfl/core.hpp"

// Two-stage probabilistic TSP. The first stage picks a depot-rooted tour
// through a customer subset T and a set D of direct (out-and-back) trips;
// once service needs zeta are known, unneeded direct trips are cancelled for
// a refund and unserved customers with zeta = 1 cost 2 * rho * d_0i each.
namespace dfl::ptsp {

inline constexpr std::string_view kProblemId = "ptsp";
inline constexpr int kMaxCustomers = 14;

struct PtspInstance {
  int k = 0;
  double rho = 5.0;
  std::vector<std::pair<double, double>> coords;  // node 0 is the depot
  std::vector<std::vector<double>> d;
  std::uint64_t seed = 0;

  static PtspInstance FromCoords(std::vector<std::pair<double, double>> coords,
                                 double rho, std::uint64_t seed = 0);
  int nodes() const { return k + 1; }
};

struct TourDecision {
  std::vector<int> tour;    // customers in visiting order (1-based ids)
  std::vector<int> direct;  // sorted customer ids

  bool operator==(const TourDecision&) const = default;
};

// Encoding: arc indicators over ordered node pairs (i != j, depot included),
// then one direct-trip flag per customer; d_x = (k+1)k + k.
int decision_dim(int k);
int arc_index(int k, int from, int to);
int direct_index(int k, int customer);
Vector encode(int k, const TourDecision& decision);
// Throws FeasibilityError when the vector is not a valid decision.
TourDecision decode(int k, std::span<const double> values);

double tour_length(const PtspInstance& inst, const TourDecision& decision);
double first_stage_cost(const PtspInstance& inst, const TourDecision& decision);
// Linear in zeta, so real-valued zeta (scenario means, predictions) is
// allowed: unserved customers pay 2 rho d_0i zeta_i, direct trips refund
// 2 d_0i (1 - zeta_i).
double second_stage_value(const PtspInstance& inst, const TourDecision& decision,
                          std::span<const double> zeta);

// Optimal closed depot tour through every customer subset under arbitrary
// (possibly negative, asymmetric) arc weights.
class HeldKarp {
 public:
  explicit HeldKarp(const std::vector<std::vector<double>>& weights);

  int customers() const { return k_; }
  // Subsets are bitmasks over customers 1..k (bit i-1 for customer i).
  double subset_cost(unsigned mask) const { return tour_cost_[mask]; }
  std::vector<int> order(unsigned mask) const;

 private:
  double& dp(unsigned mask, int last) { return dp_[mask * k_ + last]; }
  double dp(unsigned mask, int last) const { return dp_[mask * k_ + last]; }

  int k_;
  std::vector<double> dp_;
  std::vector<int> parent_;
  std::vector<double> tour_cost_;
  std::vector<int> tour_last_;
};

class PtspProblem : public Problem {
 public:
  PtspProblem(PtspInstance instance, int feature_dim);

  std::string_view id() const override { return kProblemId; }
  Dims dims() const override;
  const PtspInstance& instance() const { return inst_; }

  double objective(std::span<const double> zeta, const DecisionVector& x) const override;
  DecisionVector solve_deterministic(std::span<const double> zeta) const override;
  DecisionVector solve_scenarios(std::span<const Vector> scenarios) const override;
  DecisionVector solve_quadratic(std::span<const double> xi) const override;
  bool is_feasible(const DecisionVector& x) const override;
  // Service needs are binary: 1 iff the prediction is at least 0.5.
  Vector project_parameters(std::span<const double> zeta) const override;

  TourDecision solve_mean(std::span<const double> p_hat) const;

 private:
  PtspInstance inst_;
  int feature_dim_;
};

PtspInstance generate_instance(int k, std::uint64_t seed, double rho = 5.0);

struct ServiceConfig {
  int feature_dim = 5;
  int train = 200;
  int validation = 50;
  int test = 200;
  int degree = 5;
  double noise_halfwidth = 0.5;
  double bernoulli_fraction = 0.5;
};

// `replaced`, when given, receives one flag per (instance, customer) telling
// whether the entry was drawn as Bernoulli(q) instead of rounded.
ContextDataset generate_service(const PtspInstance& inst, const ServiceConfig& config,
                                std::uint64_t seed,
                                std::vector<std::vector<int>>* replaced = nullptr);

json instance_to_json(const PtspInstance& inst);
PtspInstance instance_from_json(const json& j);
json decision_to_json(const TourDecision& decision);

}  // namespace dfl::ptsp
