#include "dfl/wsmc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dfl/rng.hpp"

namespace dfl::wsmc {
namespace {

constexpr int kMaxCostRetries = 1000;

std::vector<int> coverage_of(const WsmcInstance& inst, std::span<const double> x) {
  std::vector<int> a(inst.n_items, 0);
  for (int i = 0; i < inst.n_items; ++i) {
    double cover = 0.0;
    for (int j = 0; j < inst.m_sets; ++j) cover += inst.A[i][j] * x[j];
    a[i] = static_cast<int>(std::lround(cover));
  }
  return a;
}

}  // namespace

void WsmcInstance::validate() const {
  if (n_items < 1 || m_sets <= n_items) throw UsageError("WSMC needs m > n >= 1");
  if (static_cast<int>(A.size()) != n_items || static_cast<int>(c.size()) != m_sets ||
      static_cast<int>(c_plus.size()) != n_items ||
      static_cast<int>(c_minus.size()) != n_items ||
      static_cast<int>(x_upper.size()) != m_sets) {
    throw ShapeError("WSMC instance arrays have inconsistent sizes");
  }
  for (int i = 0; i < n_items; ++i) {
    if (static_cast<int>(A[i].size()) != m_sets) throw ShapeError("ragged incidence matrix");
    for (int j = 0; j < n_items; ++j) {
      if (A[i][j] != (i == j ? 1 : 0)) {
        throw UsageError("the first n sets must be the single-item sets");
      }
    }
    if (!(c_plus[i] > c[i] && c[i] > c_minus[i] && c_minus[i] > 0.0)) {
      throw UsageError("WSMC needs c_plus > c > c_minus > 0 on single-item sets");
    }
  }
  const std::vector<int> masks = coverage_mask();
  for (int j = 0; j < m_sets; ++j) {
    if (masks[j] == 0) throw UsageError("set " + std::to_string(j) + " covers nothing");
    for (int k = j + 1; k < m_sets; ++k) {
      if (masks[j] == masks[k]) throw UsageError("set coverages must be unique");
    }
    if (x_upper[j] < 0) throw UsageError("negative set upper bound");
  }
}

std::vector<int> WsmcInstance::coverage_mask() const {
  std::vector<int> masks(m_sets, 0);
  for (int j = 0; j < m_sets; ++j) {
    for (int i = 0; i < n_items; ++i) {
      if (A[i][j] != 0) masks[j] |= 1 << i;
    }
  }
  return masks;
}

WsmcInstance two_item_instance() {
  WsmcInstance inst;
  inst.n_items = 2;
  inst.m_sets = 3;
  inst.A = {{1, 0, 1}, {0, 1, 1}};
  inst.c = {4, 4, 7};
  inst.c_plus = {7, 7};
  inst.c_minus = {3, 3};
  inst.x_upper = {2, 2, 2};
  return inst;
}

double second_stage_value(const WsmcInstance& inst, std::span<const double> x,
                          std::span<const double> zeta) {
  if (static_cast<int>(x.size()) != inst.m_sets ||
      static_cast<int>(zeta.size()) != inst.n_items) {
    throw ShapeError("second stage dimension mismatch");
  }
  const std::vector<int> a = coverage_of(inst, x);
  double q = 0.0;
  for (int i = 0; i < inst.n_items; ++i) {
    const double shortfall = std::max(zeta[i] - a[i], 0.0);
    const double excess = std::max(a[i] - zeta[i], 0.0);
    q += inst.c_plus[i] * shortfall - inst.c_minus[i] * std::min(excess, x[i]);
  }
  return q;
}

double expected_objective(const WsmcInstance& inst, std::span<const double> x,
                          std::span<const Vector> scenarios) {
  if (scenarios.empty()) throw UsageError("expected objective over no scenarios");
  double first = 0.0;
  for (int j = 0; j < inst.m_sets; ++j) first += inst.c[j] * x[j];
  double second = 0.0;
  for (const Vector& zeta : scenarios) second += second_stage_value(inst, x, zeta);
  return first + second / static_cast<double>(scenarios.size());
}

milp::MilpProblem build_scenario_milp(const WsmcInstance& inst,
                                      std::span<const Vector> scenarios) {
  if (scenarios.empty()) throw UsageError("scenario MILP needs at least one scenario");
  const int n = inst.n_items;
  const int m = inst.m_sets;
  const int s_count = static_cast<int>(scenarios.size());
  const int vars = m + 2 * n * s_count;
  const double weight = 1.0 / s_count;

  milp::MilpProblem model;
  milp::LinearProgram& lp = model.lp;
  lp.objective.assign(vars, 0.0);
  lp.lower.assign(vars, 0.0);
  lp.upper.assign(vars, milp::kInfinity);
  for (int j = 0; j < m; ++j) {
    lp.objective[j] = inst.c[j];
    lp.upper[j] = inst.x_upper[j];
    model.integer_vars.push_back(j);
  }
  for (int s = 0; s < s_count; ++s) {
    if (static_cast<int>(scenarios[s].size()) != n) throw ShapeError("demand length mismatch");
    const int plus = m + 2 * n * s;
    const int minus = plus + n;
    for (int i = 0; i < n; ++i) {
      lp.objective[plus + i] = weight * inst.c_plus[i];
      lp.objective[minus + i] = -weight * inst.c_minus[i];

      milp::Constraint cover{Vector(vars, 0.0), milp::Relation::kGreaterEqual,
                             scenarios[s][i]};
      for (int j = 0; j < m; ++j) cover.coeffs[j] = inst.A[i][j];
      cover.coeffs[plus + i] = 1.0;
      cover.coeffs[minus + i] = -1.0;
      lp.constraints.push_back(std::move(cover));

      milp::Constraint refund{Vector(vars, 0.0), milp::Relation::kLessEqual, 0.0};
      refund.coeffs[minus + i] = 1.0;
      refund.coeffs[i] = -1.0;
      lp.constraints.push_back(std::move(refund));
    }
  }
  return model;
}

WsmcProblem::WsmcProblem(WsmcInstance instance, int feature_dim)
    : inst_(std::move(instance)), feature_dim_(feature_dim) {
  inst_.validate();
}

Dims WsmcProblem::dims() const { return {feature_dim_, inst_.n_items, inst_.m_sets}; }

double WsmcProblem::objective(std::span<const double> zeta, const DecisionVector& x) const {
  if (static_cast<int>(x.values.size()) != inst_.m_sets) {
    throw ShapeError("WSMC decision length mismatch");
  }
  double first = 0.0;
  for (int j = 0; j < inst_.m_sets; ++j) first += inst_.c[j] * x.values[j];
  return first + second_stage_value(inst_, x.values, zeta);
}

DecisionVector WsmcProblem::solve_deterministic(std::span<const double> zeta) const {
  const std::vector<Vector> one{Vector(zeta.begin(), zeta.end())};
  return solve_scenarios(one);
}

DecisionVector WsmcProblem::solve_scenarios(std::span<const Vector> scenarios) const {
  const milp::SolveResult result = milp::solve_milp(build_scenario_milp(inst_, scenarios));
  if (result.status != milp::SolveStatus::kOptimal) {
    throw NumericError("WSMC scenario MILP did not solve to optimality");
  }
  DecisionVector x{Vector(result.solution.begin(), result.solution.begin() + inst_.m_sets),
                   std::string(kProblemId)};
  for (double& v : x.values) v = std::round(v);
  return x;
}

DecisionVector WsmcProblem::solve_quadratic(std::span<const double> xi) const {
  if (static_cast<int>(xi.size()) != inst_.m_sets) throw ShapeError("quadratic input length mismatch");
  DecisionVector x{Vector(inst_.m_sets, 0.0), std::string(kProblemId)};
  for (int j = 0; j < inst_.m_sets; ++j) {
    const double v = std::clamp(xi[j], 0.0, static_cast<double>(inst_.x_upper[j]));
    x.values[j] = std::max(std::ceil(v - 0.5), 0.0);
  }
  return x;
}

Vector WsmcProblem::project_parameters(std::span<const double> zeta) const {
  Vector out(zeta.size());
  for (std::size_t i = 0; i < zeta.size(); ++i) out[i] = std::max(std::round(zeta[i]), 0.0);
  return out;
}

bool WsmcProblem::is_feasible(const DecisionVector& x) const {
  if (static_cast<int>(x.values.size()) != inst_.m_sets) return false;
  for (int j = 0; j < inst_.m_sets; ++j) {
    const double v = x.values[j];
    if (!std::isfinite(v) || std::abs(v - std::round(v)) > kIntegralityTol) return false;
    if (v < -kIntegralityTol || v > inst_.x_upper[j] + kIntegralityTol) return false;
  }
  return true;
}

CostBounds cost_bounds(int coverage, std::span<const int> existing_coverage,
                       std::span<const int> existing_cost) {
  if (existing_coverage.size() != existing_cost.size()) {
    throw ShapeError("coverage/cost arrays differ in length");
  }
  int max_subset = std::numeric_limits<int>::min();
  for (std::size_t e = 0; e < existing_coverage.size(); ++e) {
    const int cov = existing_coverage[e];
    if ((cov & coverage) == cov && cov != coverage) {
      max_subset = std::max(max_subset, existing_cost[e]);
    }
  }
  // Cheapest exact partition of `coverage` into existing coverages, by DP over
  // its submasks; every piece must contain the lowest uncovered item.
  constexpr int kUnreachable = std::numeric_limits<int>::max() / 2;
  std::vector<int> best(static_cast<std::size_t>(coverage) + 1, kUnreachable);
  best[0] = 0;
  std::vector<int> submasks;
  for (int s = coverage; s > 0; s = (s - 1) & coverage) submasks.push_back(s);
  std::reverse(submasks.begin(), submasks.end());  // increasing order
  for (int s : submasks) {
    const int low = s & -s;
    for (std::size_t e = 0; e < existing_coverage.size(); ++e) {
      const int cov = existing_coverage[e];
      if ((cov & s) != cov || (cov & low) == 0 || cov == coverage) continue;
      if (best[s ^ cov] >= kUnreachable) continue;
      best[s] = std::min(best[s], existing_cost[e] + best[s ^ cov]);
    }
  }
  CostBounds b;
  b.lower = max_subset == std::numeric_limits<int>::min() ? 1 : max_subset + 1;
  b.upper = best[coverage] >= kUnreachable ? std::numeric_limits<int>::max()
                                           : best[coverage] - 1;
  return b;
}

WsmcInstance generate_instance(int n_items, int m_sets, std::uint64_t seed, int x_upper) {
  if (n_items < 1 || m_sets <= n_items) throw UsageError("generate_instance needs m > n >= 1");
  if (n_items > 20 || (1 << n_items) - 1 < m_sets) {
    throw UsageError("not enough distinct item coverages for m sets");
  }
  Rng rng = make_rng(seed, "wsmc/instance");
  std::uniform_int_distribution<int> single_cost(2, 10);

  std::vector<int> coverage;
  std::vector<int> cost;
  for (int i = 0; i < n_items; ++i) {
    coverage.push_back(1 << i);
    cost.push_back(single_cost(rng));
  }

  std::vector<int> pool;
  for (int mask = 1; mask < (1 << n_items); ++mask) {
    if (std::popcount(static_cast<unsigned>(mask)) >= 2) pool.push_back(mask);
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  const int multi = m_sets - n_items;
  std::vector<int> pending(pool.begin(), pool.begin() + multi);
  pool.erase(pool.begin(), pool.begin() + multi);
  auto by_size = [](int a, int b) {
    return std::popcount(static_cast<unsigned>(a)) < std::popcount(static_cast<unsigned>(b));
  };
  std::stable_sort(pending.begin(), pending.end(), by_size);

  int retries = 0;
  while (!pending.empty()) {
    const int mask = pending.front();
    pending.erase(pending.begin());
    const CostBounds b = cost_bounds(mask, coverage, cost);
    if (b.lower <= b.upper) {
      coverage.push_back(mask);
      cost.push_back((b.lower + b.upper) / 2);
      continue;
    }
    // Replace with an unused coverage at least as large, keeping size order.
    if (++retries > kMaxCostRetries) throw UsageError("WSMC cost generation retries exhausted");
    const int size = std::popcount(static_cast<unsigned>(mask));
    auto it = std::find_if(pool.begin(), pool.end(), [&](int cand) {
      return std::popcount(static_cast<unsigned>(cand)) >= size;
    });
    if (it == pool.end()) throw UsageError("WSMC cost generation ran out of coverages");
    const int replacement = *it;
    pool.erase(it);
    pending.insert(std::upper_bound(pending.begin(), pending.end(), replacement, by_size),
                   replacement);
  }

  WsmcInstance inst;
  inst.n_items = n_items;
  inst.m_sets = m_sets;
  inst.seed = seed;
  inst.A.assign(n_items, std::vector<int>(m_sets, 0));
  for (int j = 0; j < m_sets; ++j) {
    for (int i = 0; i < n_items; ++i) inst.A[i][j] = (coverage[j] >> i) & 1;
    inst.c.push_back(cost[j]);
  }
  for (int i = 0; i < n_items; ++i) {
    double max_cost = 0.0;
    for (int j = 0; j < m_sets; ++j) {
      if (inst.A[i][j] != 0) max_cost = std::max(max_cost, inst.c[j]);
    }
    inst.c_plus.push_back(5.0 * max_cost);
    inst.c_minus.push_back(0.8 * inst.c[i]);
  }
  inst.x_upper.assign(m_sets, x_upper);
  inst.validate();
  return inst;
}

std::vector<std::pair<int, int>> dominated_sets(const WsmcInstance& inst) {
  const std::vector<int> masks = inst.coverage_mask();
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < inst.m_sets; ++j) {
    for (int k = 0; k < inst.m_sets; ++k) {
      if (j == k) continue;
      if ((masks[j] & masks[k]) == masks[j] && inst.c[j] >= inst.c[k]) out.emplace_back(j, k);
    }
  }
  return out;
}

ContextDataset generate_demands(const WsmcInstance& inst, const DemandConfig& config,
                                std::uint64_t seed) {
  if (config.feature_dim < 1) throw UsageError("demand generator needs p >= 1");
  const int n = inst.n_items;
  const int p = config.feature_dim;
  Rng model_rng = make_rng(seed, "wsmc/demand-model");
  Rng data_rng = make_rng(seed, "wsmc/demand-data");
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> noise(1.0 - config.noise_halfwidth,
                                               1.0 + config.noise_halfwidth);

  std::vector<std::vector<int>> mask(n, std::vector<int>(p));
  for (auto& row : mask) {
    for (int& b : row) b = coin(model_rng) ? 1 : 0;
  }
  const double denom = std::pow(3.0, config.degree);
  const double root_p = std::sqrt(static_cast<double>(p));

  ContextDataset data;
  data.seed = seed;
  data.p = p;
  data.d_c = n;
  const int total = config.train + config.validation + config.test;
  for (int t = 0; t < total; ++t) {
    Instance row;
    row.z.resize(p);
    for (double& v : row.z) v = normal(data_rng);
    row.c.resize(n);
    for (int i = 0; i < n; ++i) {
      double bz = 0.0;
      for (int j = 0; j < p; ++j) bz += mask[i][j] * row.z[j];
      const double raw =
          std::pow(bz / root_p + 3.0, config.degree) / denom * config.zeta_scale;
      row.c[i] = std::round(std::clamp(raw * noise(data_rng), 0.0, config.zeta_max));
    }
    row.split = t < config.train                        ? Split::kTrain
                : t < config.train + config.validation ? Split::kValidation
                                                        : Split::kTest;
    data.instances.push_back(std::move(row));
  }
  return data;
}

json instance_to_json(const WsmcInstance& inst) {
  return {{"n", inst.n_items},   {"m", inst.m_sets},         {"A", inst.A},
          {"c", inst.c},         {"c_plus", inst.c_plus},    {"c_minus", inst.c_minus},
          {"x_upper", inst.x_upper}, {"seed", inst.seed}};
}

WsmcInstance instance_from_json(const json& j) {
  WsmcInstance inst;
  inst.n_items = j.at("n").get<int>();
  inst.m_sets = j.at("m").get<int>();
  inst.A = j.at("A").get<std::vector<std::vector<int>>>();
  inst.c = j.at("c").get<Vector>();
  inst.c_plus = j.at("c_plus").get<Vector>();
  inst.c_minus = j.at("c_minus").get<Vector>();
  inst.x_upper = j.at("x_upper").get<std::vector<int>>();
  inst.seed = j.value("seed", std::uint64_t{0});
  inst.validate();
  return inst;
}

}  // namespace dfl::wsmc
