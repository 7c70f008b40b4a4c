#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "dfl/core.hpp"

// Kelly-criterion portfolio: k securities plus a bank asset paying a fixed
// net return beta. Decisions live on the (k+1)-simplex, x[0] = bank share.
// The log-growth objective is negated to fit the minimization convention.
namespace dfl::portfolio {

inline constexpr std::string_view kProblemId = "portfolio";
inline constexpr double kReturnFloor = -1.0 + 1e-6;
inline constexpr double kReturnCeil = 1.7;

// Euclidean projection onto the probability simplex (sort and threshold).
Vector project_simplex(std::span<const double> xi);

struct ScenarioSolveInfo {
  int iterations = 0;
  bool converged = false;
};

class PortfolioProblem : public Problem {
 public:
  PortfolioProblem(int securities, double beta, int feature_dim);

  std::string_view id() const override { return kProblemId; }
  Dims dims() const override;
  int securities() const { return k_; }
  double beta() const { return beta_; }

  // -ln(1 + beta x0 + c . x[1..k]); NumericError when the argument is <= 0.
  double objective(std::span<const double> c, const DecisionVector& x) const override;
  // All mass on argmax(beta, c_1..c_k); ties go to the lowest index.
  DecisionVector solve_deterministic(std::span<const double> c) const override;
  // Maximizes mean log growth over the scenarios by projected gradient ascent.
  DecisionVector solve_scenarios(std::span<const Vector> scenarios) const override;
  DecisionVector solve_scenarios(std::span<const Vector> scenarios,
                                 ScenarioSolveInfo* info) const;
  DecisionVector solve_quadratic(std::span<const double> xi) const override;
  bool is_feasible(const DecisionVector& x) const override;
  // Clips to [kReturnFloor, kReturnCeil].
  Vector project_parameters(std::span<const double> c) const override;

 private:
  int k_;
  double beta_;
  int feature_dim_;
};

struct ReturnsConfig {
  int securities = 10;
  int feature_dim = 5;
  int train = 200;
  int validation = 50;
  int test = 200;
  double factor_scale = 1.0;
  double noise_std = 0.5;
};

struct ReturnsDataset {
  ContextDataset data;
  double beta = 0.0;
};

// Median over training instances of each instance's 4th-highest security
// return (the lowest return when fewer than four securities exist).
double compute_beta(std::span<const Instance> train);

// Synthetic factor-driven returns: c = clip(1.35 tanh(s B z + e) + 0.35).
ReturnsDataset generate_returns(const ReturnsConfig& config, std::uint64_t seed);

// Returns CSV (header r_1..r_k, one row per time step). Features are the
// trailing `window` rows flattened; splits are chronological 70/15/15.
ReturnsDataset load_returns_csv(const std::filesystem::path& path, int window = 10);

json instance_to_json(const PortfolioProblem& problem);

}  // namespace dfl::portfolio
