#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dfl {

using Vector = std::vector<double>;
using json = nlohmann::json;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FeasibilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kIntegralityTol = 1e-9;
inline constexpr double kContinuousTol = 1e-6;

// Feature dimension p, parameter dimension d_c, decision dimension d_x.
struct Dims {
  int features = 0;
  int params = 0;
  int decision = 0;
};

struct DecisionVector {
  Vector values;
  std::string problem_id;

  bool operator==(const DecisionVector&) const = default;
};

enum class ProxyKind { kDeterministic, kScenario, kQuadratic };

struct ProxyConfig {
  ProxyKind kind = ProxyKind::kDeterministic;
  int scenarios = 1;

  static ProxyConfig Deterministic() { return {ProxyKind::kDeterministic, 1}; }
  static ProxyConfig Scenario(int n);
  static ProxyConfig Quadratic() { return {ProxyKind::kQuadratic, 1}; }

  // Output size of the predictor: d_c, n * d_c or d_x.
  int prediction_dim(const Dims& dims) const;
  std::string name() const;

  bool operator==(const ProxyConfig&) const = default;
};

// A stochastic optimization problem in minimization convention. Realized cost
// objective(c, x) includes the optimal recourse at c for two-stage problems.
// Implementations are immutable after construction.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string_view id() const = 0;
  virtual Dims dims() const = 0;
  virtual double objective(std::span<const double> c,
                           const DecisionVector& x) const = 0;
  virtual DecisionVector solve_deterministic(std::span<const double> c) const = 0;
  virtual DecisionVector solve_scenarios(std::span<const Vector> scenarios) const = 0;
  virtual DecisionVector solve_quadratic(std::span<const double> xi) const = 0;
  virtual bool is_feasible(const DecisionVector& x) const = 0;

  // Maps a raw network output onto the parameter space C (binary service
  // needs, integer demands, bounded returns). The deterministic and scenario
  // proxies only ever see points of C. Identity by default.
  virtual Vector project_parameters(std::span<const double> c) const {
    return Vector(c.begin(), c.end());
  }

  // Dispatches a flat prediction vector to the proxy selected by `proxy`.
  // Scenario(n) predictions are n contiguous blocks of length d_c; parameter
  // predictions are projected onto C first.
  DecisionVector solve_proxy(const ProxyConfig& proxy,
                             std::span<const double> prediction) const;
};

// ---------------------------------------------------------------------------
// Datasets

enum class Split { kTrain, kValidation, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct Instance {
  Vector z;
  Vector c;
  Split split = Split::kTrain;
};

struct ContextDataset {
  std::uint64_t seed = 0;
  int p = 0;
  int d_c = 0;
  std::vector<Instance> instances;

  // Throws ShapeError on ragged vectors; with `require_all_splits`, UsageError
  // when a split is empty.
  void validate(bool require_all_splits = false) const;
  std::vector<Instance> split(Split which) const;
  std::size_t count(Split which) const;
};

json dataset_to_json(const ContextDataset& data);
ContextDataset dataset_from_json(const json& j);

// ---------------------------------------------------------------------------
// Regret

double regret(const Problem& problem, std::span<const double> c,
              const DecisionVector& x);

struct RegretReport {
  Vector per_instance_regret;
  double mean_absolute_regret = 0.0;
  std::optional<double> normalization_base;
  double normalized_mean = 0.0;
  std::uint64_t seed = 0;
};

using Policy = std::function<DecisionVector(std::span<const double> z)>;

// Optimal realized cost f(c, x^D(c)) for every instance of `split`.
Vector in_data_optimal_costs(const Problem& problem,
                             std::span<const Instance> split);

// Mean regret of `policy` over `split`. When `optimal_costs` is supplied it
// must hold in_data_optimal_costs(problem, split).
RegretReport mean_absolute_regret(const Problem& problem,
                                  std::span<const Instance> split,
                                  const Policy& policy,
                                  std::optional<double> normalization_base = {},
                                  std::uint64_t seed = 0,
                                  const Vector* optimal_costs = nullptr);

// Builds a report from precomputed regrets (used by the trainers).
RegretReport make_regret_report(Vector regrets,
                                std::optional<double> normalization_base = {},
                                std::uint64_t seed = 0);

}  // namespace dfl
