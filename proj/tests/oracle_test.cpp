#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dfl/oracle.hpp"
#include "support.hpp"

using namespace dfl;
using namespace dfl::oracle;

namespace {

FiniteProblem linear_problem() {
  FiniteProblem fp;
  fp.decisions = {{0.0}, {1.0}};
  fp.scenarios = {{{-1.0}, 0.5}, {{1.0}, 0.5}};
  fp.prediction_candidates = {{-1.0}, {0.0}, {1.0}};
  fp.cost = [](std::span<const double> c, const Vector& x) { return c[0] * x[0]; };
  return fp;
}

bool contains(const std::vector<std::size_t>& v, std::size_t i) {
  return std::find(v.begin(), v.end(), i) != v.end();
}

}  // namespace

TEST_CASE("set-cover example values") {
  const FiniteProblem fp = wsmc_two_item_problem();
  const Values v = enumerate_values(fp);
  CHECK(v.v_star == doctest::Approx(5.0));
  CHECK(v.v_dfl == doctest::Approx(6.0));
  CHECK(v.v_pfl == doctest::Approx(7.0));
  CHECK(fp.decisions[v.star_index] == Vector{1, 1, 0});
}

TEST_CASE("set-cover example dominance") {
  const FiniteProblem fp = wsmc_two_item_problem();
  const Dominance d = is_scenario_wise_dominated(fp, Vector{1, 1, 0});
  CHECK(d.dominated);
  REQUIRE(d.witnesses.size() == 2);
  for (const auto& w : d.witnesses) {
    REQUIRE(w.has_value());
    CHECK(*w == Vector{0, 0, 1});
  }
  const DominanceReport r = check_dominance(fp);
  CHECK(r.lhs);
  CHECK(r.rhs);
  CHECK(r.holds());

  const json report = report_to_json(fp);
  CHECK(report.at("v_star").get<double>() == doctest::Approx(5.0));
  CHECK(report.at("dominance_lhs").get<bool>());
  const auto dominated = report.at("dominated_decisions").get<std::vector<Vector>>();
  CHECK(std::find(dominated.begin(), dominated.end(), Vector{1, 1, 0}) != dominated.end());

  // With the scenario support as candidates, no dominated decision is
  // reachable through the proxy.
  FiniteProblem support_only = fp;
  support_only.prediction_candidates = {{1.0, 1.0}, {0.0, 0.0}};
  const std::vector<std::size_t> image = proxy_image(support_only);
  for (std::size_t i = 0; i < fp.decisions.size(); ++i) {
    if (is_scenario_wise_dominated(fp, fp.decisions[i]).dominated) CHECK_FALSE(contains(image, i));
  }
  CHECK_THROWS_AS(is_scenario_wise_dominated(fp, Vector{5, 5, 5}), UsageError);
}

TEST_CASE("linear cost closes the gap") {
  const FiniteProblem fp = linear_problem();
  const Values v = enumerate_values(fp);
  CHECK(v.v_star == v.v_dfl);
  CHECK(v.v_dfl == v.v_pfl);
  const DominanceReport r = check_dominance(fp);
  CHECK_FALSE(r.lhs);
  CHECK_FALSE(r.rhs);
}

TEST_CASE("single scenario") {
  FiniteProblem fp = linear_problem();
  fp.scenarios = {{{0.7}, 1.0}};
  fp.prediction_candidates = {{0.7}};
  const Values v = enumerate_values(fp);
  CHECK(v.v_star == v.v_dfl);
  CHECK(v.v_dfl == v.v_pfl);
  CHECK(v.v_star == doctest::Approx(0.0));
}

TEST_CASE("dominance needs strict improvement") {
  FiniteProblem fp;
  fp.decisions = {{0.0}, {1.0}, {2.0}};
  fp.scenarios = {{{0.0}, 0.5}, {{1.0}, 0.5}};
  fp.prediction_candidates = {{0.0}, {1.0}};
  // Decisions 0 and 1 cost the same everywhere; 2 is the strict best at c = 1.
  fp.cost = [](std::span<const double> c, const Vector& x) {
    if (x[0] == 2.0) return c[0] == 1.0 ? -1.0 : 5.0;
    return 0.0;
  };
  CHECK_FALSE(is_scenario_wise_dominated(fp, Vector{0.0}).dominated);
  CHECK_FALSE(is_scenario_wise_dominated(fp, Vector{1.0}).dominated);
  CHECK_FALSE(is_scenario_wise_dominated(fp, Vector{2.0}).dominated);
}

TEST_CASE("malformed finite problems") {
  FiniteProblem fp = linear_problem();
  fp.scenarios[0].probability = 0.6;
  CHECK_THROWS_AS(enumerate_values(fp), UsageError);
  FiniteProblem empty = linear_problem();
  empty.decisions.clear();
  CHECK_THROWS_AS(enumerate_values(empty), UsageError);
}

TEST_CASE("random finite problems keep the value chain") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FiniteProblem fp = random_finite_problem(seed, false);
    const Values v = enumerate_values(fp);
    CHECK(v.v_star <= v.v_dfl + 1e-12);
    CHECK(v.v_dfl <= v.v_pfl + 1e-12);
    // Candidates are the scenario support here, so a decision that loses in
    // every scenario is never a proxy answer.
    const std::vector<std::size_t> image = proxy_image(fp);
    for (std::size_t i = 0; i < fp.decisions.size(); ++i) {
      if (is_scenario_wise_dominated(fp, fp.decisions[i]).dominated) CHECK_FALSE(contains(image, i));
    }
  }
}

TEST_CASE("surjective proxies reach the optimum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FiniteProblem fp = random_finite_problem(seed, true);
    CHECK(proxy_image(fp).size() == fp.decisions.size());
    const Values v = enumerate_values(fp);
    CHECK(v.v_dfl == v.v_star);
    CHECK(v.v_dfl <= v.v_pfl);
  }
}

TEST_CASE("Kelly example") {
  const KellyResult r = kelly_optimum(0.05, -1.0, 1.7);
  // x is the share held in the bank, since beta multiplies it.
  CHECK(support::near(r.bank_share, 0.465, 0.005));
  CHECK(support::near(r.stock_share, 0.535, 0.005));
  CHECK(support::near(r.all_stock_log_growth, std::log(2.7) - 1.0, 1e-9));
  CHECK(support::near(r.all_stock_log_growth, -0.00672, 1e-4));
  CHECK(r.all_stock_log_growth < std::log(1.05));
  CHECK(r.expected_log_growth > std::log(1.05));

  // Numerical check of the closed-form integral with a midpoint rule.
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = -1.0 + 2.7 * (i + 0.5) / n;
    sum += std::log(1.0 + 0.05 * r.bank_share + c * r.stock_share);
  }
  CHECK(support::near(sum / n, r.expected_log_growth, 1e-6));

  const KellyResult flat = kelly_optimum(0.05, 0.05, 0.05);
  CHECK(support::near(flat.expected_log_growth, std::log(1.05), 1e-12));

  CHECK_THROWS_AS(kelly_optimum(0.05, 1.0, 0.5), UsageError);
  CHECK_THROWS_AS(kelly_optimum(0.05, -1.5, 0.5), UsageError);
}
