#include "dfl/milp.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace dfl::milp {
namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kReducedCostTol = 1e-9;
constexpr double kRatioTieTol = 1e-12;
constexpr double kFractionalTol = 1e-6;
constexpr int kDegenerateStreakForBland = 50;
constexpr long kMaxPivots = 1'000'000;
constexpr long kMaxNodes = 5'000'000;

// Dense tableau in canonical form with respect to `basis`.
struct Tableau {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;
  Vector rhs;
  std::vector<int> basis;

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return a[static_cast<std::size_t>(r) * cols + c];
  }
};

// Reduced-cost row and the negated objective value it tracks.
struct CostRow {
  Vector d;
  double neg_value = 0.0;
};

void pivot(Tableau& t, CostRow& cost, int r, int c) {
  const double p = t.at(r, c);
  double* row_r = &t.a[static_cast<std::size_t>(r) * t.cols];
  for (int j = 0; j < t.cols; ++j) row_r[j] /= p;
  t.rhs[r] /= p;
  row_r[c] = 1.0;
  for (int i = 0; i < t.rows; ++i) {
    if (i == r) continue;
    const double f = t.at(i, c);
    if (f == 0.0) continue;
    double* row_i = &t.a[static_cast<std::size_t>(i) * t.cols];
    for (int j = 0; j < t.cols; ++j) row_i[j] -= f * row_r[j];
    row_i[c] = 0.0;
    t.rhs[i] -= f * t.rhs[r];
    if (t.rhs[i] < 0.0 && t.rhs[i] > -kPivotTol) t.rhs[i] = 0.0;
  }
  const double f = cost.d[c];
  if (f != 0.0) {
    for (int j = 0; j < t.cols; ++j) cost.d[j] -= f * row_r[j];
    cost.d[c] = 0.0;
    cost.neg_value -= f * t.rhs[r];
  }
  t.basis[r] = c;
}

CostRow price_out(const Tableau& t, const Vector& costs) {
  CostRow cost{costs, 0.0};
  for (int r = 0; r < t.rows; ++r) {
    const double cb = costs[t.basis[r]];
    if (cb == 0.0) continue;
    for (int j = 0; j < t.cols; ++j) cost.d[j] -= cb * t.at(r, j);
    cost.neg_value -= cb * t.rhs[r];
  }
  return cost;
}

enum class PhaseResult { kOptimal, kUnbounded };

// Primal simplex over the columns j < `allowed_cols`. Dantzig pricing, with a
// permanent switch to Bland's rule after a run of degenerate pivots.
PhaseResult run_simplex(Tableau& t, CostRow& cost, int allowed_cols) {
  bool bland = false;
  int degenerate_streak = 0;
  for (long iter = 0; iter < kMaxPivots; ++iter) {
    int enter = -1;
    double best = -kReducedCostTol;
    for (int j = 0; j < allowed_cols; ++j) {
      if (cost.d[j] < best) {
        enter = j;
        if (bland) break;
        best = cost.d[j];
      }
    }
    if (enter < 0) return PhaseResult::kOptimal;

    int leave = -1;
    double best_ratio = 0.0;
    for (int i = 0; i < t.rows; ++i) {
      const double aij = t.at(i, enter);
      if (aij <= kPivotTol) continue;
      const double ratio = std::max(t.rhs[i], 0.0) / aij;
      if (leave < 0 || ratio < best_ratio - kRatioTieTol ||
          (ratio <= best_ratio + kRatioTieTol && t.basis[i] < t.basis[leave])) {
        leave = i;
        best_ratio = ratio;
      }
    }
    if (leave < 0) return PhaseResult::kUnbounded;

    if (best_ratio <= kPivotTol) {
      if (++degenerate_streak > kDegenerateStreakForBland) bland = true;
    } else {
      degenerate_streak = 0;
    }
    pivot(t, cost, leave, enter);
  }
  throw NumericError("simplex exceeded the pivot limit");
}

bool lex_less(const Vector& a, const Vector& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i] - kIntegralityTol) return true;
    if (a[i] > b[i] + kIntegralityTol) return false;
  }
  return false;
}

double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void LinearProgram::validate() const {
  const std::size_t n = objective.size();
  if (lower.size() != n || upper.size() != n) {
    throw ShapeError("bound vectors do not match the number of variables");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(objective[j])) {
      throw std::invalid_argument("non-finite objective coefficient");
    }
    if (!std::isfinite(lower[j])) {
      throw std::invalid_argument("lower bounds must be finite");
    }
    if (std::isnan(upper[j])) throw std::invalid_argument("NaN upper bound");
    if (lower[j] > upper[j]) {
      throw std::invalid_argument("lower bound exceeds upper bound");
    }
  }
  for (const Constraint& row : constraints) {
    if (row.coeffs.size() != n) throw ShapeError("constraint row length mismatch");
    if (!std::isfinite(row.rhs)) throw std::invalid_argument("non-finite rhs");
    for (double v : row.coeffs) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite coefficient");
    }
  }
}

std::string LinearProgram::debug_dump() const {
  std::ostringstream out;
  out.precision(17);
  out << "min";
  for (double v : objective) out << ' ' << v;
  out << '\n';
  for (const Constraint& row : constraints) {
    for (double v : row.coeffs) out << v << ' ';
    switch (row.relation) {
      case Relation::kLessEqual:
        out << "<=";
        break;
      case Relation::kEqual:
        out << "=";
        break;
      case Relation::kGreaterEqual:
        out << ">=";
        break;
    }
    out << ' ' << row.rhs << '\n';
  }
  out << "bounds\n";
  for (int j = 0; j < num_vars(); ++j) {
    out << 'x' << j << ' ' << lower[j] << ' ' << upper[j] << '\n';
  }
  return out.str();
}

double max_violation(const LinearProgram& lp, const Vector& x) {
  double worst = 0.0;
  for (int j = 0; j < lp.num_vars(); ++j) {
    worst = std::max(worst, lp.lower[j] - x[j]);
    if (std::isfinite(lp.upper[j])) worst = std::max(worst, x[j] - lp.upper[j]);
  }
  for (const Constraint& row : lp.constraints) {
    const double lhs = dot(row.coeffs, x);
    switch (row.relation) {
      case Relation::kLessEqual:
        worst = std::max(worst, lhs - row.rhs);
        break;
      case Relation::kEqual:
        worst = std::max(worst, std::abs(lhs - row.rhs));
        break;
      case Relation::kGreaterEqual:
        worst = std::max(worst, row.rhs - lhs);
        break;
    }
  }
  return worst;
}

SolveResult solve_lp(const LinearProgram& lp) {
  lp.validate();
  const int n = lp.num_vars();

  // Shift x = lower + x' so that x' >= 0; finite upper bounds become rows.
  struct Row {
    Vector coeffs;
    Relation rel;
    double rhs;
  };
  std::vector<Row> rows;
  rows.reserve(lp.constraints.size() + n);
  for (const Constraint& c : lp.constraints) {
    rows.push_back({c.coeffs, c.relation, c.rhs - dot(c.coeffs, lp.lower)});
  }
  for (int j = 0; j < n; ++j) {
    if (!std::isfinite(lp.upper[j])) continue;
    Vector e(n, 0.0);
    e[j] = 1.0;
    rows.push_back({std::move(e), Relation::kLessEqual, lp.upper[j] - lp.lower[j]});
  }
  int num_slack = 0;
  int num_art = 0;
  for (Row& r : rows) {
    if (r.rhs < 0.0) {
      for (double& v : r.coeffs) v = -v;
      r.rhs = -r.rhs;
      if (r.rel == Relation::kLessEqual) {
        r.rel = Relation::kGreaterEqual;
      } else if (r.rel == Relation::kGreaterEqual) {
        r.rel = Relation::kLessEqual;
      }
    }
    num_slack += r.rel != Relation::kEqual;
    num_art += r.rel != Relation::kLessEqual;
  }

  Tableau t;
  t.rows = static_cast<int>(rows.size());
  const int art_start = n + num_slack;
  t.cols = art_start + num_art;
  t.a.assign(static_cast<std::size_t>(t.rows) * t.cols, 0.0);
  t.rhs.resize(t.rows);
  t.basis.resize(t.rows);
  int next_slack = n;
  int next_art = art_start;
  double rhs_scale = 1.0;
  for (int i = 0; i < t.rows; ++i) {
    const Row& r = rows[i];
    for (int j = 0; j < n; ++j) t.at(i, j) = r.coeffs[j];
    t.rhs[i] = r.rhs;
    rhs_scale = std::max(rhs_scale, r.rhs);
    if (r.rel == Relation::kLessEqual) {
      t.at(i, next_slack) = 1.0;
      t.basis[i] = next_slack++;
    } else {
      if (r.rel == Relation::kGreaterEqual) t.at(i, next_slack++) = -1.0;
      t.at(i, next_art) = 1.0;
      t.basis[i] = next_art++;
    }
  }

  SolveResult result;
  if (num_art > 0) {
    Vector phase1(t.cols, 0.0);
    for (int j = art_start; j < t.cols; ++j) phase1[j] = 1.0;
    CostRow cost = price_out(t, phase1);
    run_simplex(t, cost, art_start);
    if (-cost.neg_value > 1e-7 * rhs_scale) {
      result.status = SolveStatus::kInfeasible;
      return result;
    }
    // Drive artificial variables out of the basis where possible; rows where
    // that fails are redundant and keep a zero-valued artificial.
    for (int r = 0; r < t.rows; ++r) {
      if (t.basis[r] < art_start) continue;
      for (int j = 0; j < art_start; ++j) {
        if (std::abs(t.at(r, j)) > kPivotTol) {
          pivot(t, cost, r, j);
          break;
        }
      }
    }
  }

  Vector phase2(t.cols, 0.0);
  std::copy(lp.objective.begin(), lp.objective.end(), phase2.begin());
  CostRow cost = price_out(t, phase2);
  if (run_simplex(t, cost, art_start) == PhaseResult::kUnbounded) {
    result.status = SolveStatus::kUnbounded;
    return result;
  }

  result.status = SolveStatus::kOptimal;
  result.solution = lp.lower;
  for (int r = 0; r < t.rows; ++r) {
    if (t.basis[r] < n) result.solution[t.basis[r]] += std::max(t.rhs[r], 0.0);
  }
  result.value = dot(lp.objective, result.solution);
  result.nodes_explored = 1;
  return result;
}

SolveResult solve_milp(const MilpProblem& milp) {
  const LinearProgram& base = milp.lp;
  base.validate();
  for (int j : milp.integer_vars) {
    if (j < 0 || j >= base.num_vars()) {
      throw std::invalid_argument("integer variable index out of range");
    }
    if (!std::isfinite(base.upper[j])) {
      throw std::invalid_argument("integer variables need finite bounds");
    }
  }

  struct Node {
    Vector lower;
    Vector upper;
    double key;
    long seq;
  };
  auto worse = [](const Node& a, const Node& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.seq > b.seq;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
  long seq = 0;
  // Integer bounds are rounded inward up front.
  Node root{base.lower, base.upper, -kInfinity, seq++};
  for (int j : milp.integer_vars) {
    root.lower[j] = std::ceil(root.lower[j] - kFractionalTol);
    root.upper[j] = std::floor(root.upper[j] + kFractionalTol);
  }
  open.push(std::move(root));

  SolveResult best;
  best.status = SolveStatus::kInfeasible;
  bool have_incumbent = false;
  int nodes = 0;
  LinearProgram relax = base;

  auto tolerance = [&](double v) { return 1e-9 * std::max(1.0, std::abs(v)); };

  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (have_incumbent && node.key > best.value + tolerance(best.value)) break;
    bool empty_box = false;
    for (int j = 0; j < base.num_vars(); ++j) {
      empty_box |= node.lower[j] > node.upper[j];
    }
    if (empty_box) continue;

    relax.lower = node.lower;
    relax.upper = node.upper;
    SolveResult lp = solve_lp(relax);
    if (++nodes > kMaxNodes) throw NumericError("branch-and-bound node limit");
    if (lp.status == SolveStatus::kInfeasible) continue;
    if (lp.status == SolveStatus::kUnbounded) {
      SolveResult out;
      out.status = SolveStatus::kUnbounded;
      out.nodes_explored = nodes;
      return out;
    }
    if (have_incumbent && lp.value > best.value + tolerance(best.value)) continue;

    int branch_var = -1;
    double most_fractional = kFractionalTol;
    for (int j : milp.integer_vars) {
      const double v = lp.solution[j];
      const double frac = v - std::floor(v);
      const double dist = std::min(frac, 1.0 - frac);
      if (dist > most_fractional ||
          (dist == most_fractional && branch_var >= 0 && j < branch_var)) {
        most_fractional = dist;
        branch_var = j;
      }
    }

    if (branch_var < 0) {
      for (int j : milp.integer_vars) lp.solution[j] = std::round(lp.solution[j]);
      lp.value = dot(base.objective, lp.solution);
      const bool better =
          !have_incumbent || lp.value < best.value - tolerance(best.value) ||
          (lp.value <= best.value + tolerance(best.value) &&
           lex_less(lp.solution, best.solution));
      if (better) {
        best.status = SolveStatus::kOptimal;
        best.value = lp.value;
        best.solution = std::move(lp.solution);
        have_incumbent = true;
      }
      continue;
    }

    const double v = lp.solution[branch_var];
    Node down{node.lower, node.upper, lp.value, seq++};
    down.upper[branch_var] = std::floor(v);
    Node up{std::move(node.lower), std::move(node.upper), lp.value, seq++};
    up.lower[branch_var] = std::ceil(v);
    open.push(std::move(down));
    open.push(std::move(up));
  }
  best.nodes_explored = nodes;
  return best;
}

}  // namespace dfl::milp
