#include "dfl/ptsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dfl/rng.hpp"

namespace dfl::ptsp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_binary(double v) {
  return std::abs(v) <= kIntegralityTol || std::abs(v - 1.0) <= kIntegralityTol;
}

std::vector<int> mask_members(unsigned mask) {
  std::vector<int> out;
  for (int i = 0; mask >> i; ++i) {
    if ((mask >> i) & 1U) out.push_back(i + 1);
  }
  return out;
}

// Picks the subset T minimizing tour(T) + sum of outside costs for customers
// not in T. Near-ties prefer the larger tour, then the lexicographically
// smallest sorted customer list.
unsigned select_subset(const HeldKarp& hk, const Vector& outside_cost) {
  const int k = hk.customers();
  const unsigned full = (1U << k) - 1U;
  std::vector<double> total(full + 1);
  double outside_all = 0.0;
  for (double v : outside_cost) outside_all += v;
  std::vector<double> inside(full + 1, 0.0);
  double best = kInf;
  for (unsigned mask = 0; mask <= full; ++mask) {
    if (mask != 0) {
      const int low = std::countr_zero(mask);
      inside[mask] = inside[mask & (mask - 1)] + outside_cost[low];
    }
    total[mask] = hk.subset_cost(mask) + outside_all - inside[mask];
    best = std::min(best, total[mask]);
  }
  const double tol = 1e-9 * (1.0 + std::abs(best));
  unsigned chosen = 0;
  bool have = false;
  for (unsigned mask = 0; mask <= full; ++mask) {
    if (total[mask] > best + tol) continue;
    if (!have) {
      chosen = mask;
      have = true;
      continue;
    }
    const int size = std::popcount(mask);
    const int chosen_size = std::popcount(chosen);
    if (size > chosen_size ||
        (size == chosen_size && mask_members(mask) < mask_members(chosen))) {
      chosen = mask;
    }
  }
  return chosen;
}

}  // namespace

PtspInstance PtspInstance::FromCoords(std::vector<std::pair<double, double>> coords,
                                      double rho, std::uint64_t seed) {
  if (coords.size() < 2) throw UsageError("PTSP needs a depot and a customer");
  PtspInstance inst;
  inst.k = static_cast<int>(coords.size()) - 1;
  inst.rho = rho;
  inst.seed = seed;
  inst.coords = std::move(coords);
  const int nodes = inst.nodes();
  inst.d.assign(nodes, std::vector<double>(nodes, 0.0));
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      inst.d[i][j] = std::hypot(inst.coords[i].first - inst.coords[j].first,
                                inst.coords[i].second - inst.coords[j].second);
    }
  }
  return inst;
}

int decision_dim(int k) { return (k + 1) * k + k; }

int arc_index(int k, int from, int to) {
  if (from == to || from < 0 || to < 0 || from > k || to > k) {
    throw ShapeError("invalid arc");
  }
  return from * k + (to < from ? to : to - 1);
}

int direct_index(int k, int customer) {
  if (customer < 1 || customer > k) throw ShapeError("invalid customer id");
  return (k + 1) * k + customer - 1;
}

Vector encode(int k, const TourDecision& decision) {
  Vector x(decision_dim(k), 0.0);
  int prev = 0;
  for (int c : decision.tour) {
    x[arc_index(k, prev, c)] = 1.0;
    prev = c;
  }
  if (!decision.tour.empty()) x[arc_index(k, prev, 0)] = 1.0;
  for (int c : decision.direct) x[direct_index(k, c)] = 1.0;
  return x;
}

TourDecision decode(int k, std::span<const double> values) {
  if (static_cast<int>(values.size()) != decision_dim(k)) {
    throw FeasibilityError("PTSP decision has the wrong length");
  }
  for (double v : values) {
    if (!is_binary(v)) throw FeasibilityError("PTSP decision entries must be binary");
  }
  auto on = [&](int idx) { return values[idx] > 0.5; };
  int arcs = 0;
  std::vector<int> succ(k + 1, -1);
  for (int i = 0; i <= k; ++i) {
    for (int j = 0; j <= k; ++j) {
      if (i == j || !on(arc_index(k, i, j))) continue;
      if (succ[i] >= 0) throw FeasibilityError("node has two outgoing arcs");
      succ[i] = j;
      ++arcs;
    }
  }
  TourDecision out;
  if (arcs > 0) {
    if (succ[0] < 0) throw FeasibilityError("tour does not leave the depot");
    std::vector<bool> seen(k + 1, false);
    int node = succ[0];
    int used = 1;
    while (node != 0) {
      if (node < 0 || seen[node]) throw FeasibilityError("arcs do not form a depot cycle");
      seen[node] = true;
      out.tour.push_back(node);
      node = succ[node];
      ++used;
    }
    if (used != arcs) throw FeasibilityError("arcs outside the depot cycle");
  }
  for (int c = 1; c <= k; ++c) {
    if (!on(direct_index(k, c))) continue;
    if (std::find(out.tour.begin(), out.tour.end(), c) != out.tour.end()) {
      throw FeasibilityError("customer both on tour and served directly");
    }
    out.direct.push_back(c);
  }
  return out;
}

double tour_length(const PtspInstance& inst, const TourDecision& decision) {
  double len = 0.0;
  int prev = 0;
  for (int c : decision.tour) {
    len += inst.d[prev][c];
    prev = c;
  }
  if (!decision.tour.empty()) len += inst.d[prev][0];
  return len;
}

double first_stage_cost(const PtspInstance& inst, const TourDecision& decision) {
  double cost = tour_length(inst, decision);
  for (int c : decision.direct) cost += 2.0 * inst.d[0][c];
  return cost;
}

double second_stage_value(const PtspInstance& inst, const TourDecision& decision,
                          std::span<const double> zeta) {
  if (static_cast<int>(zeta.size()) != inst.k) throw ShapeError("service vector length mismatch");
  std::vector<int> status(inst.k + 1, 0);  // 0 unserved, 1 tour, 2 direct
  for (int c : decision.tour) status[c] = 1;
  for (int c : decision.direct) status[c] = 2;
  double q = 0.0;
  for (int c = 1; c <= inst.k; ++c) {
    const double trip = 2.0 * inst.d[0][c];
    if (status[c] == 0) {
      q += trip * inst.rho * zeta[c - 1];
    } else if (status[c] == 2) {
      q -= trip * (1.0 - zeta[c - 1]);
    }
  }
  return q;
}

HeldKarp::HeldKarp(const std::vector<std::vector<double>>& weights) {
  k_ = static_cast<int>(weights.size()) - 1;
  if (k_ < 1) throw ShapeError("Held-Karp needs at least one customer");
  if (k_ > kMaxCustomers) {
    throw UsageError("Held-Karp capacity exceeded: k = " + std::to_string(k_) +
                     " > " + std::to_string(kMaxCustomers));
  }
  for (const auto& row : weights) {
    if (static_cast<int>(row.size()) != k_ + 1) throw ShapeError("weight matrix is not square");
  }
  const unsigned full = (1U << k_) - 1U;
  dp_.assign(static_cast<std::size_t>(full + 1) * k_, kInf);
  parent_.assign(dp_.size(), -1);
  tour_cost_.assign(full + 1, kInf);
  tour_last_.assign(full + 1, -1);
  for (int i = 0; i < k_; ++i) dp(1U << i, i) = weights[0][i + 1];
  for (unsigned mask = 1; mask <= full; ++mask) {
    for (int last = 0; last < k_; ++last) {
      if (!((mask >> last) & 1U)) continue;
      const double base = dp(mask, last);
      if (base == kInf) continue;
      const double closing = base + weights[last + 1][0];
      if (closing < tour_cost_[mask]) {
        tour_cost_[mask] = closing;
        tour_last_[mask] = last;
      }
      for (int next = 0; next < k_; ++next) {
        if ((mask >> next) & 1U) continue;
        const unsigned grown = mask | (1U << next);
        const double v = base + weights[last + 1][next + 1];
        if (v < dp(grown, next)) {
          dp(grown, next) = v;
          parent_[grown * k_ + next] = last;
        }
      }
    }
  }
  tour_cost_[0] = 0.0;
}

std::vector<int> HeldKarp::order(unsigned mask) const {
  std::vector<int> seq;
  if (mask == 0) return seq;
  int last = tour_last_[mask];
  while (mask != 0) {
    seq.push_back(last + 1);
    const int prev = parent_[mask * k_ + last];
    mask &= ~(1U << last);
    last = prev;
  }
  std::reverse(seq.begin(), seq.end());
  return seq;
}

PtspProblem::PtspProblem(PtspInstance instance, int feature_dim)
    : inst_(std::move(instance)), feature_dim_(feature_dim) {
  if (inst_.k < 1 || inst_.k > kMaxCustomers) throw UsageError("unsupported PTSP size");
  if (!(inst_.rho > 1.0)) throw UsageError("PTSP penalty multiplier must exceed 1");
}

Dims PtspProblem::dims() const { return {feature_dim_, inst_.k, decision_dim(inst_.k)}; }

double PtspProblem::objective(std::span<const double> zeta, const DecisionVector& x) const {
  const TourDecision decision = decode(inst_.k, x.values);
  return first_stage_cost(inst_, decision) + second_stage_value(inst_, decision, zeta);
}

TourDecision PtspProblem::solve_mean(std::span<const double> p_hat) const {
  if (static_cast<int>(p_hat.size()) != inst_.k) throw ShapeError("service vector length mismatch");
  const HeldKarp hk(inst_.d);
  Vector outside(inst_.k);
  for (int i = 0; i < inst_.k; ++i) {
    const double trip = 2.0 * inst_.d[0][i + 1];
    // Direct nets 2 d p (trip minus expected refund); skipping costs 2 d rho p.
    outside[i] = p_hat[i] > 0.0 ? trip * p_hat[i] : trip * inst_.rho * p_hat[i];
  }
  const unsigned mask = select_subset(hk, outside);
  TourDecision out;
  out.tour = hk.order(mask);
  for (int i = 0; i < inst_.k; ++i) {
    if (!((mask >> i) & 1U) && p_hat[i] > 0.0) out.direct.push_back(i + 1);
  }
  return out;
}

DecisionVector PtspProblem::solve_deterministic(std::span<const double> zeta) const {
  return {encode(inst_.k, solve_mean(zeta)), std::string(kProblemId)};
}

DecisionVector PtspProblem::solve_scenarios(std::span<const Vector> scenarios) const {
  if (scenarios.empty()) throw UsageError("scenario solve needs at least one scenario");
  // The second stage is linear in zeta, so the scenario average is exact.
  Vector mean(inst_.k, 0.0);
  for (const Vector& s : scenarios) {
    if (static_cast<int>(s.size()) != inst_.k) throw ShapeError("scenario length mismatch");
    for (int i = 0; i < inst_.k; ++i) mean[i] += s[i];
  }
  for (double& v : mean) v /= static_cast<double>(scenarios.size());
  return {encode(inst_.k, solve_mean(mean)), std::string(kProblemId)};
}

DecisionVector PtspProblem::solve_quadratic(std::span<const double> xi) const {
  const int k = inst_.k;
  if (static_cast<int>(xi.size()) != decision_dim(k)) throw ShapeError("quadratic input length mismatch");
  // On binary vectors ||xi - x||^2 = const + sum_e (1 - 2 xi_e) x_e.
  std::vector<std::vector<double>> w(k + 1, std::vector<double>(k + 1, 0.0));
  for (int i = 0; i <= k; ++i) {
    for (int j = 0; j <= k; ++j) {
      if (i != j) w[i][j] = 1.0 - 2.0 * xi[arc_index(k, i, j)];
    }
  }
  const HeldKarp hk(w);
  Vector outside(k);
  for (int c = 1; c <= k; ++c) outside[c - 1] = std::min(0.0, 1.0 - 2.0 * xi[direct_index(k, c)]);
  const unsigned mask = select_subset(hk, outside);
  TourDecision out;
  out.tour = hk.order(mask);
  for (int c = 1; c <= k; ++c) {
    if (!((mask >> (c - 1)) & 1U) && xi[direct_index(k, c)] > 0.5) out.direct.push_back(c);
  }
  return {encode(k, out), std::string(kProblemId)};
}

Vector PtspProblem::project_parameters(std::span<const double> zeta) const {
  Vector out(zeta.size());
  for (std::size_t i = 0; i < zeta.size(); ++i) out[i] = zeta[i] >= 0.5 ? 1.0 : 0.0;
  return out;
}

bool PtspProblem::is_feasible(const DecisionVector& x) const {
  try {
    decode(inst_.k, x.values);
    return true;
  } catch (const FeasibilityError&) {
    return false;
  }
}

PtspInstance generate_instance(int k, std::uint64_t seed, double rho) {
  if (k < 2) throw UsageError("PTSP generator needs k >= 2");
  Rng rng = make_rng(seed, "ptsp/instance");
  std::normal_distribution<double> jitter(0.0, 5.0);
  std::vector<std::pair<double, double>> coords{{0.0, 0.0}};
  for (int i = 0; i < k; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / k;
    const double x = 10.0 * std::cos(angle) + jitter(rng);
    const double y = 10.0 * std::sin(angle) + jitter(rng);
    coords.emplace_back(x, y);
  }
  return PtspInstance::FromCoords(std::move(coords), rho, seed);
}

ContextDataset generate_service(const PtspInstance& inst, const ServiceConfig& config,
                                std::uint64_t seed, std::vector<std::vector<int>>* replaced) {
  if (config.feature_dim < 1) throw UsageError("service generator needs p >= 1");
  const int k = inst.k;
  const int p = config.feature_dim;
  Rng model_rng = make_rng(seed, "ptsp/service-model");
  Rng data_rng = make_rng(seed, "ptsp/service-data");
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution replace(config.bernoulli_fraction);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> noise(1.0 - config.noise_halfwidth,
                                               1.0 + config.noise_halfwidth);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<int>> mask(k, std::vector<int>(p));
  for (auto& row : mask) {
    for (int& b : row) b = coin(model_rng) ? 1 : 0;
  }
  const double denom = std::pow(3.0, config.degree);
  const double root_p = std::sqrt(static_cast<double>(p));

  ContextDataset data;
  data.seed = seed;
  data.p = p;
  data.d_c = k;
  const int total = config.train + config.validation + config.test;
  if (replaced != nullptr) replaced->assign(total, std::vector<int>(k, 0));
  for (int t = 0; t < total; ++t) {
    Instance row;
    row.z.resize(p);
    for (double& v : row.z) v = normal(data_rng);
    row.c.resize(k);
    for (int i = 0; i < k; ++i) {
      double bz = 0.0;
      for (int j = 0; j < p; ++j) bz += mask[i][j] * row.z[j];
      // Polynomial recipe scaled so that z = 0 gives q = 0.5 before noise.
      const double raw = 0.5 * std::pow(bz / root_p + 3.0, config.degree) / denom;
      const double q = std::clamp(raw * noise(data_rng), 0.0, 1.0);
      const bool bernoulli = replace(data_rng);
      const double u = unit(data_rng);
      if (replaced != nullptr) (*replaced)[t][i] = bernoulli ? 1 : 0;
      row.c[i] = bernoulli ? (u < q ? 1.0 : 0.0) : std::round(q);
    }
    row.split = t < config.train                        ? Split::kTrain
                : t < config.train + config.validation ? Split::kValidation
                                                        : Split::kTest;
    data.instances.push_back(std::move(row));
  }
  return data;
}

json instance_to_json(const PtspInstance& inst) {
  json coords = json::array();
  for (const auto& [x, y] : inst.coords) coords.push_back({x, y});
  return {{"k", inst.k}, {"rho", inst.rho}, {"coords", std::move(coords)}, {"seed", inst.seed}};
}

PtspInstance instance_from_json(const json& j) {
  std::vector<std::pair<double, double>> coords;
  for (const json& xy : j.at("coords")) {
    coords.emplace_back(xy.at(0).get<double>(), xy.at(1).get<double>());
  }
  PtspInstance inst = PtspInstance::FromCoords(std::move(coords), j.at("rho").get<double>(),
                                               j.value("seed", std::uint64_t{0}));
  if (inst.k != j.at("k").get<int>()) throw ShapeError("PTSP instance k does not match coords");
  return inst;
}

json decision_to_json(const TourDecision& decision) {
  return {{"tour", decision.tour}, {"direct", decision.direct}};
}

}  // namespace dfl::ptsp
