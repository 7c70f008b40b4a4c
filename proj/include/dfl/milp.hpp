#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dfl/core.hpp"

// Dense two-phase simplex and best-first branch-and-bound. Sized for the
// small covering models built by the WSMC proxies (tens of variables).
namespace dfl::milp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class Relation { kLessEqual, kEqual, kGreaterEqual };

struct Constraint {
  Vector coeffs;
  Relation relation = Relation::kLessEqual;
  double rhs = 0.0;
};

// min objective . x  s.t. constraints, lower <= x <= upper.
// Lower bounds must be finite; upper bounds may be +infinity.
struct LinearProgram {
  Vector objective;
  std::vector<Constraint> constraints;
  Vector lower;
  Vector upper;

  int num_vars() const { return static_cast<int>(objective.size()); }
  // Throws ShapeError / std::invalid_argument on malformed input.
  void validate() const;
  // Plain-text dump (objective row, constraint rows, bounds) for triage.
  std::string debug_dump() const;
};

struct MilpProblem {
  LinearProgram lp;
  std::vector<int> integer_vars;
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded };

struct SolveResult {
  SolveStatus status = SolveStatus::kInfeasible;
  double value = 0.0;
  Vector solution;
  int nodes_explored = 0;
};

SolveResult solve_lp(const LinearProgram& lp);

// Branches on the most fractional variable, explores nodes by best bound
// (FIFO among equal bounds). Among equal-valued integer solutions that it
// encounters, the lexicographically smallest is kept.
SolveResult solve_milp(const MilpProblem& milp);

// Largest violation of constraints and bounds at `x` (0 when feasible).
double max_violation(const LinearProgram& lp, const Vector& x);

}  // namespace dfl::milp
