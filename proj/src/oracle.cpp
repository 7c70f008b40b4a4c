#include "dfl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dfl/rng.hpp"
#include "dfl/wsmc.hpp"

namespace dfl::oracle {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kValueTol = 1e-12;

// F(u) = u ln u - u, an antiderivative of ln u, with F(0) = 0.
double log_antiderivative(double u) {
  if (u <= 0.0) return 0.0;
  return u * std::log(u) - u;
}

}  // namespace

void FiniteProblem::validate() const {
  if (decisions.empty() || scenarios.empty() || prediction_candidates.empty()) {
    throw UsageError("finite problem lists must be non-empty");
  }
  if (!cost) throw UsageError("finite problem needs a cost function");
  double total = 0.0;
  for (const WeightedScenario& s : scenarios) {
    if (s.probability < 0.0) throw UsageError("negative scenario probability");
    total += s.probability;
  }
  if (std::abs(total - 1.0) > 1e-12) throw UsageError("scenario probabilities must sum to 1");
}

double FiniteProblem::expected_cost(const Vector& x) const {
  double total = 0.0;
  for (const WeightedScenario& s : scenarios) total += s.probability * cost(s.c, x);
  return total;
}

Vector FiniteProblem::mean_scenario() const {
  Vector mean(scenarios.front().c.size(), 0.0);
  for (const WeightedScenario& s : scenarios) {
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += s.probability * s.c[j];
  }
  return mean;
}

double FiniteProblem::proxy_value(std::span<const double> c, const Vector& x) const {
  return proxy_cost ? proxy_cost(c, x) : cost(c, x);
}

std::size_t FiniteProblem::proxy_decision(std::span<const double> c_hat) const {
  std::size_t best = 0;
  double best_value = kInf;
  bool have = false;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const double v = proxy_value(c_hat, decisions[i]);
    if (!have || v < best_value ||
        (v == best_value && decisions[i] < decisions[best])) {
      best = i;
      best_value = v;
      have = true;
    }
  }
  return best;
}

Values enumerate_values(const FiniteProblem& fp) {
  fp.validate();
  Values out;
  Vector expected(fp.decisions.size());
  for (std::size_t i = 0; i < fp.decisions.size(); ++i) expected[i] = fp.expected_cost(fp.decisions[i]);

  out.star_index = 0;
  for (std::size_t i = 1; i < expected.size(); ++i) {
    if (expected[i] < expected[out.star_index] ||
        (expected[i] == expected[out.star_index] &&
         fp.decisions[i] < fp.decisions[out.star_index])) {
      out.star_index = i;
    }
  }
  out.v_star = expected[out.star_index];

  out.candidates = fp.prediction_candidates;
  const Vector mean = fp.mean_scenario();
  if (std::find(out.candidates.begin(), out.candidates.end(), mean) == out.candidates.end()) {
    out.candidates.push_back(mean);
  }
  bool have = false;
  for (const Vector& c_hat : out.candidates) {
    const std::size_t idx = fp.proxy_decision(c_hat);
    if (!have || expected[idx] < out.v_dfl) {
      out.v_dfl = expected[idx];
      out.dfl_index = idx;
      have = true;
    }
  }
  out.pfl_index = fp.proxy_decision(mean);
  out.v_pfl = expected[out.pfl_index];
  return out;
}

std::vector<std::size_t> proxy_image(const FiniteProblem& fp) {
  std::vector<std::size_t> image;
  for (const Vector& c_hat : fp.prediction_candidates) image.push_back(fp.proxy_decision(c_hat));
  std::sort(image.begin(), image.end());
  image.erase(std::unique(image.begin(), image.end()), image.end());
  return image;
}

Dominance is_scenario_wise_dominated(const FiniteProblem& fp, const Vector& x) {
  fp.validate();
  if (std::find(fp.decisions.begin(), fp.decisions.end(), x) == fp.decisions.end()) {
    throw UsageError("decision is not part of the finite problem");
  }
  const std::size_t n_s = fp.scenarios.size();
  Vector own(n_s);
  for (std::size_t s = 0; s < n_s; ++s) own[s] = fp.proxy_value(fp.scenarios[s].c, x);

  // Cheapest decision (in summed proxy cost) beating x in every scenario.
  std::optional<std::size_t> uniform;
  double uniform_total = kInf;
  std::vector<std::optional<std::size_t>> per(n_s);
  Vector per_value(n_s, kInf);
  for (std::size_t i = 0; i < fp.decisions.size(); ++i) {
    if (fp.decisions[i] == x) continue;
    bool beats_all = true;
    double total = 0.0;
    for (std::size_t s = 0; s < n_s; ++s) {
      const double v = fp.proxy_value(fp.scenarios[s].c, fp.decisions[i]);
      total += v;
      if (v < own[s]) {
        if (!per[s] || v < per_value[s] ||
            (v == per_value[s] && fp.decisions[i] < fp.decisions[*per[s]])) {
          per[s] = i;
          per_value[s] = v;
        }
      } else {
        beats_all = false;
      }
    }
    if (beats_all && (!uniform || total < uniform_total ||
                      (total == uniform_total && fp.decisions[i] < fp.decisions[*uniform]))) {
      uniform = i;
      uniform_total = total;
    }
  }
  Dominance out;
  out.dominated = true;
  out.witnesses.resize(n_s);
  for (std::size_t s = 0; s < n_s; ++s) {
    if (!per[s]) {
      out.dominated = false;
      continue;
    }
    out.witnesses[s] = fp.decisions[uniform ? *uniform : *per[s]];
  }
  return out;
}

DominanceReport check_dominance(const FiniteProblem& fp) {
  DominanceReport r;
  r.values = enumerate_values(fp);
  r.x_star = fp.decisions[r.values.star_index];
  r.lhs = is_scenario_wise_dominated(fp, r.x_star).dominated;
  r.rhs = r.values.v_dfl > r.values.v_star + kValueTol;
  return r;
}

json report_to_json(const FiniteProblem& fp) {
  const DominanceReport r = check_dominance(fp);
  json dominated = json::array();
  for (const Vector& x : fp.decisions) {
    if (is_scenario_wise_dominated(fp, x).dominated) dominated.push_back(x);
  }
  return {{"v_star", r.values.v_star},
          {"v_dfl", r.values.v_dfl},
          {"v_pfl", r.values.v_pfl},
          {"x_star", r.x_star},
          {"x_dfl", fp.decisions[r.values.dfl_index]},
          {"x_pfl", fp.decisions[r.values.pfl_index]},
          {"dominated_decisions", std::move(dominated)},
          {"dominance_lhs", r.lhs},
          {"dominance_rhs", r.rhs},
          {"candidates", r.values.candidates}};
}

FiniteProblem wsmc_two_item_problem() {
  const wsmc::WsmcInstance inst = wsmc::two_item_instance();
  FiniteProblem fp;
  for (int a = 0; a <= 2; ++a) {
    for (int b = 0; b <= 2; ++b) {
      for (int c = 0; c <= 2; ++c) fp.decisions.push_back({double(a), double(b), double(c)});
    }
  }
  fp.scenarios = {{{1.0, 1.0}, 0.5}, {{0.0, 0.0}, 0.5}};
  for (int a = 0; a <= 2; ++a) {
    for (int b = 0; b <= 2; ++b) fp.prediction_candidates.push_back({double(a), double(b)});
  }
  fp.prediction_candidates.push_back({0.5, 0.5});
  fp.cost = [inst](std::span<const double> zeta, const Vector& x) {
    double first = 0.0;
    for (int j = 0; j < inst.m_sets; ++j) first += inst.c[j] * x[j];
    return first + wsmc::second_stage_value(inst, x, zeta);
  };
  // With the demand treated as certain the problem never needs recourse:
  // min c.x subject to A x >= zeta.
  fp.proxy_cost = [inst](std::span<const double> zeta, const Vector& x) {
    for (int i = 0; i < inst.n_items; ++i) {
      double covered = 0.0;
      for (int j = 0; j < inst.m_sets; ++j) covered += inst.A[i][j] * x[j];
      if (covered < zeta[i] - 1e-12) return kInf;
    }
    double first = 0.0;
    for (int j = 0; j < inst.m_sets; ++j) first += inst.c[j] * x[j];
    return first;
  };
  return fp;
}

FiniteProblem random_finite_problem(std::uint64_t seed, bool surjective) {
  Rng rng = make_rng(seed, "oracle/random-fp");
  std::uniform_int_distribution<int> n_dec(2, 4);
  std::uniform_int_distribution<int> n_sc(1, 3);
  std::uniform_real_distribution<double> pos(-2.0, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int d = n_dec(rng);
  const int s = n_sc(rng);
  Vector target(d);
  Vector offset(d, 0.0);
  FiniteProblem fp;
  for (int i = 0; i < d; ++i) {
    target[i] = pos(rng);
    if (!surjective) offset[i] = unit(rng);
    fp.decisions.push_back({double(i)});
  }
  Vector weight(s);
  double total = 0.0;
  for (int k = 0; k < s; ++k) {
    weight[k] = 0.1 + unit(rng);
    total += weight[k];
  }
  for (int k = 0; k < s; ++k) fp.scenarios.push_back({{pos(rng)}, weight[k] / total});
  // Renormalize so the sum is 1 to the last bit.
  double sum = 0.0;
  for (int k = 0; k + 1 < s; ++k) sum += fp.scenarios[k].probability;
  fp.scenarios.back().probability = 1.0 - sum;
  if (surjective) {
    for (double t : target) fp.prediction_candidates.push_back({t});
  } else {
    for (const WeightedScenario& sc : fp.scenarios) fp.prediction_candidates.push_back(sc.c);
  }
  fp.cost = [target, offset](std::span<const double> c, const Vector& x) {
    const std::size_t i = static_cast<std::size_t>(x[0]);
    return (c[0] - target[i]) * (c[0] - target[i]) + offset[i];
  };
  return fp;
}

double kelly_expected_log(double beta, double a, double b, double bank_share) {
  const double s = 1.0 - bank_share;
  const double base = 1.0 + beta * bank_share;
  if (b - a <= 0.0 || s * (b - a) < 1e-9) {
    return std::log(base + s * 0.5 * (a + b));
  }
  const double lo = base + a * s;
  const double hi = base + b * s;
  if (lo < 0.0) return -kInf;
  return (log_antiderivative(hi) - log_antiderivative(lo)) / (s * (b - a));
}

KellyResult kelly_optimum(double beta, double a, double b) {
  if (!(a <= b)) throw UsageError("Kelly interval needs a <= b");
  if (a < -1.0) throw UsageError("Kelly returns must stay above -1");
  if (!(beta > -1.0)) throw UsageError("bank return must exceed -1");
  auto f = [&](double x) { return kelly_expected_log(beta, a, b, x); };
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - ratio * (hi - lo);
  double x2 = lo + ratio * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo > 1e-9) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = f(x1);
    }
  }
  KellyResult r;
  r.bank_share = 0.5 * (lo + hi);
  // Concave, so an endpoint optimum shows up as the search collapsing on it.
  for (double edge : {0.0, 1.0}) {
    if (f(edge) > f(r.bank_share)) r.bank_share = edge;
  }
  r.stock_share = 1.0 - r.bank_share;
  r.expected_log_growth = f(r.bank_share);
  r.all_stock_log_growth = kelly_expected_log(beta, a, b, 0.0);
  return r;
}

}  // namespace dfl::oracle
