#pragma once

// Brute-force reference computations shared by the unit and acceptance tests.
// None of these call the solvers they are used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "dfl/milp.hpp"
#include "dfl/ptsp.hpp"
#include "dfl/wsmc.hpp"

namespace support {

using dfl::Vector;
constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// Calls f on every integer vector with 0 <= v[i] <= upper[i].
inline void for_each_box_point(const std::vector<int>& upper,
                               const std::function<void(const Vector&)>& f) {
  Vector v(upper.size(), 0.0);
  while (true) {
    f(v);
    std::size_t i = 0;
    while (i < v.size() && v[i] >= upper[i]) {
      v[i] = 0.0;
      ++i;
    }
    if (i == v.size()) return;
    v[i] += 1.0;
  }
}

// Pure-integer program with finite bounds: enumerate every point.
struct BruteResult {
  bool feasible = false;
  double value = kInf;
};

inline BruteResult enumerate_integer_program(const dfl::milp::LinearProgram& lp) {
  std::vector<int> upper;
  for (int j = 0; j < lp.num_vars(); ++j) upper.push_back(static_cast<int>(lp.upper[j] - lp.lower[j]));
  BruteResult best;
  for_each_box_point(upper, [&](const Vector& offset) {
    Vector x(offset.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = offset[j] + lp.lower[j];
    for (const auto& row : lp.constraints) {
      double lhs = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) lhs += row.coeffs[j] * x[j];
      const bool ok = row.relation == dfl::milp::Relation::kLessEqual      ? lhs <= row.rhs + 1e-9
                      : row.relation == dfl::milp::Relation::kGreaterEqual ? lhs >= row.rhs - 1e-9
                                                                            : std::abs(lhs - row.rhs) <= 1e-9;
      if (!ok) return;
    }
    double value = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) value += lp.objective[j] * x[j];
    if (value < best.value) best.value = value;
    best.feasible = true;
  });
  return best;
}

inline dfl::milp::MilpProblem random_integer_program(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_vars(2, 4);
  std::uniform_int_distribution<int> n_rows(1, 3);
  std::uniform_int_distribution<int> coef(-4, 6);
  std::uniform_int_distribution<int> bound(1, 3);
  std::uniform_int_distribution<int> rel(0, 2);
  dfl::milp::MilpProblem mp;
  const int n = n_vars(rng);
  const int m = n_rows(rng);
  for (int j = 0; j < n; ++j) {
    mp.lp.objective.push_back(coef(rng));
    mp.lp.lower.push_back(0.0);
    mp.lp.upper.push_back(bound(rng));
    mp.integer_vars.push_back(j);
  }
  for (int i = 0; i < m; ++i) {
    dfl::milp::Constraint row;
    for (int j = 0; j < n; ++j) row.coeffs.push_back(coef(rng));
    const int r = rel(rng);
    row.relation = r == 0 ? dfl::milp::Relation::kLessEqual
                   : r == 1 ? dfl::milp::Relation::kGreaterEqual
                            : dfl::milp::Relation::kLessEqual;
    row.rhs = coef(rng) + 2;
    mp.lp.constraints.push_back(row);
  }
  return mp;
}

// Second stage of the set-cover problem as an explicit LP in (y+, y-).
inline double wsmc_second_stage_lp(const dfl::wsmc::WsmcInstance& inst, const Vector& x,
                                   const Vector& zeta) {
  using namespace dfl::milp;
  const int n = inst.n_items;
  LinearProgram lp;
  lp.objective.assign(2 * n, 0.0);
  lp.lower.assign(2 * n, 0.0);
  lp.upper.assign(2 * n, kInfinity);
  for (int i = 0; i < n; ++i) {
    lp.objective[i] = inst.c_plus[i];
    lp.objective[n + i] = -inst.c_minus[i];
    lp.upper[n + i] = x[i];
    double cover = 0.0;
    for (int j = 0; j < inst.m_sets; ++j) cover += inst.A[i][j] * x[j];
    Constraint row;
    row.coeffs.assign(2 * n, 0.0);
    row.coeffs[i] = 1.0;
    row.coeffs[n + i] = -1.0;
    row.relation = Relation::kGreaterEqual;
    row.rhs = zeta[i] - cover;
    lp.constraints.push_back(row);
  }
  const SolveResult r = solve_lp(lp);
  return r.value;
}

// Cheapest closed tour through `customers` by trying every order.
inline double permutation_tour(const std::vector<std::vector<double>>& w,
                               std::vector<int> customers) {
  if (customers.empty()) return 0.0;
  std::sort(customers.begin(), customers.end());
  double best = kInf;
  do {
    double cost = w[0][customers.front()];
    for (std::size_t i = 1; i < customers.size(); ++i) cost += w[customers[i - 1]][customers[i]];
    cost += w[customers.back()][0];
    best = std::min(best, cost);
  } while (std::next_permutation(customers.begin(), customers.end()));
  return best;
}

// Every feasible PTSP decision: each customer is on the tour, direct or
// skipped, and the tour takes every order of its customers.
inline std::vector<dfl::ptsp::TourDecision> all_ptsp_decisions(int k) {
  std::vector<dfl::ptsp::TourDecision> out;
  std::vector<int> upper(k, 2);
  for_each_box_point(upper, [&](const Vector& status) {
    std::vector<int> tour;
    std::vector<int> direct;
    for (int i = 0; i < k; ++i) {
      if (status[i] == 1.0) tour.push_back(i + 1);
      if (status[i] == 2.0) direct.push_back(i + 1);
    }
    do {
      out.push_back({tour, direct});
    } while (std::next_permutation(tour.begin(), tour.end()));
  });
  return out;
}

inline dfl::ptsp::PtspInstance random_ptsp(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-10.0, 10.0);
  std::vector<std::pair<double, double>> coords{{0.0, 0.0}};
  for (int i = 0; i < k; ++i) coords.emplace_back(pos(rng), pos(rng));
  return dfl::ptsp::PtspInstance::FromCoords(coords, 5.0);
}

// Grid search for the nearest simplex point in 2 or 3 dimensions.
inline Vector grid_projection(const Vector& xi, int steps) {
  Vector best;
  double best_d = kInf;
  const int d = static_cast<int>(xi.size());
  for (int a = 0; a <= steps; ++a) {
    for (int b = 0; b <= (d == 3 ? steps - a : 0); ++b) {
      Vector x;
      if (d == 2) {
        x = {a / double(steps), 1.0 - a / double(steps)};
      } else {
        x = {a / double(steps), b / double(steps), 1.0 - (a + b) / double(steps)};
      }
      double dist = 0.0;
      for (int j = 0; j < d; ++j) dist += (x[j] - xi[j]) * (x[j] - xi[j]);
      if (dist < best_d) {
        best_d = dist;
        best = x;
      }
    }
  }
  return best;
}

}  // namespace support
