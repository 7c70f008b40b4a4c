#include "dfl/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dfl/rng.hpp"

namespace dfl::portfolio {
namespace {

constexpr int kMaxIterations = 10'000;
constexpr double kGradientMappingTol = 1e-8;

double clip_return(double r) { return std::clamp(r, kReturnFloor, kReturnCeil); }

}  // namespace

Vector project_simplex(std::span<const double> xi) {
  if (xi.empty()) throw ShapeError("cannot project an empty vector");
  Vector sorted(xi.begin(), xi.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumulative += sorted[i];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - t > 0.0) tau = t;
  }
  Vector x(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) x[i] = std::max(xi[i] - tau, 0.0);
  return x;
}

PortfolioProblem::PortfolioProblem(int securities, double beta, int feature_dim)
    : k_(securities), beta_(beta), feature_dim_(feature_dim) {
  if (securities < 1) throw UsageError("portfolio needs at least one security");
  if (!(beta > -1.0)) throw UsageError("bank return must exceed -1");
}

Dims PortfolioProblem::dims() const { return {feature_dim_, k_, k_ + 1}; }

double PortfolioProblem::objective(std::span<const double> c,
                                   const DecisionVector& x) const {
  if (static_cast<int>(c.size()) != k_ ||
      static_cast<int>(x.values.size()) != k_ + 1) {
    throw ShapeError("portfolio objective dimension mismatch");
  }
  double growth = 1.0 + beta_ * x.values[0];
  for (int i = 0; i < k_; ++i) growth += c[i] * x.values[i + 1];
  if (!(growth > 0.0)) throw NumericError("portfolio log argument is not positive");
  return -std::log(growth);
}

DecisionVector PortfolioProblem::solve_deterministic(std::span<const double> c) const {
  if (static_cast<int>(c.size()) != k_) throw ShapeError("return vector length mismatch");
  int best = 0;
  double best_return = beta_;
  for (int i = 0; i < k_; ++i) {
    if (c[i] > best_return) {
      best_return = c[i];
      best = i + 1;
    }
  }
  DecisionVector x{Vector(k_ + 1, 0.0), std::string(kProblemId)};
  x.values[best] = 1.0;
  return x;
}

DecisionVector PortfolioProblem::solve_scenarios(std::span<const Vector> scenarios) const {
  return solve_scenarios(scenarios, nullptr);
}

DecisionVector PortfolioProblem::solve_scenarios(std::span<const Vector> scenarios,
                                                 ScenarioSolveInfo* info) const {
  if (scenarios.empty()) throw UsageError("scenario solve needs at least one scenario");
  for (const Vector& s : scenarios) {
    if (static_cast<int>(s.size()) != k_) throw ShapeError("scenario length mismatch");
  }
  const int dim = k_ + 1;
  const double inv_n = 1.0 / static_cast<double>(scenarios.size());

  // Mean log growth; -inf outside the domain where every growth factor > 0.
  auto value = [&](const Vector& x) {
    double total = 0.0;
    for (const Vector& s : scenarios) {
      double u = 1.0 + beta_ * x[0];
      for (int i = 0; i < k_; ++i) u += s[i] * x[i + 1];
      if (!(u > 0.0)) return -std::numeric_limits<double>::infinity();
      total += std::log(u);
    }
    return total * inv_n;
  };
  auto gradient = [&](const Vector& x, double& lipschitz) {
    Vector g(dim, 0.0);
    lipschitz = 0.0;
    for (const Vector& s : scenarios) {
      double u = 1.0 + beta_ * x[0];
      double norm_sq = beta_ * beta_;
      for (int i = 0; i < k_; ++i) {
        u += s[i] * x[i + 1];
        norm_sq += s[i] * s[i];
      }
      g[0] += beta_ / u * inv_n;
      for (int i = 0; i < k_; ++i) g[i + 1] += s[i] / u * inv_n;
      lipschitz = std::max(lipschitz, norm_sq / (u * u));
    }
    return g;
  };

  // All-bank start is always inside the domain since beta > -1.
  Vector x(dim, 0.0);
  x[0] = 1.0;
  double fx = value(x);
  double lipschitz = 0.0;
  Vector g = gradient(x, lipschitz);
  double step = 0.1 / std::max(lipschitz, 1e-12);
  ScenarioSolveInfo local;
  for (local.iterations = 0; local.iterations < kMaxIterations; ++local.iterations) {
    Vector trial_point(dim);
    Vector candidate;
    double f_candidate = 0.0;
    bool accepted = false;
    for (int backtrack = 0; backtrack < 200; ++backtrack) {
      for (int i = 0; i < dim; ++i) trial_point[i] = x[i] + step * g[i];
      candidate = project_simplex(trial_point);
      f_candidate = value(candidate);
      double lin = 0.0;
      double dist_sq = 0.0;
      for (int i = 0; i < dim; ++i) {
        lin += g[i] * (candidate[i] - x[i]);
        dist_sq += (candidate[i] - x[i]) * (candidate[i] - x[i]);
      }
      if (std::isfinite(f_candidate) &&
          f_candidate >= fx + lin - dist_sq / (2.0 * step) - 1e-15) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    double mapping_sq = 0.0;
    for (int i = 0; i < dim; ++i) mapping_sq += (candidate[i] - x[i]) * (candidate[i] - x[i]);
    const double mapping = std::sqrt(mapping_sq) / step;
    x = std::move(candidate);
    fx = f_candidate;
    if (mapping < kGradientMappingTol) {
      local.converged = true;
      break;
    }
    g = gradient(x, lipschitz);
    step *= 2.0;
  }
  if (info != nullptr) *info = local;
  return {std::move(x), std::string(kProblemId)};
}

DecisionVector PortfolioProblem::solve_quadratic(std::span<const double> xi) const {
  if (static_cast<int>(xi.size()) != k_ + 1) throw ShapeError("quadratic input length mismatch");
  return {project_simplex(xi), std::string(kProblemId)};
}

Vector PortfolioProblem::project_parameters(std::span<const double> c) const {
  Vector out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = clip_return(c[i]);
  return out;
}

bool PortfolioProblem::is_feasible(const DecisionVector& x) const {
  if (static_cast<int>(x.values.size()) != k_ + 1) return false;
  double sum = 0.0;
  for (double v : x.values) {
    if (!std::isfinite(v) || v < -kContinuousTol) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= kContinuousTol;
}

double compute_beta(std::span<const Instance> train) {
  if (train.empty()) throw UsageError("beta needs a non-empty training split");
  Vector fourth;
  fourth.reserve(train.size());
  for (const Instance& inst : train) {
    Vector r = inst.c;
    std::sort(r.begin(), r.end(), std::greater<>());
    fourth.push_back(r[std::min<std::size_t>(3, r.size() - 1)]);
  }
  std::sort(fourth.begin(), fourth.end());
  const std::size_t m = fourth.size();
  return m % 2 == 1 ? fourth[m / 2] : 0.5 * (fourth[m / 2 - 1] + fourth[m / 2]);
}

ReturnsDataset generate_returns(const ReturnsConfig& config, std::uint64_t seed) {
  if (config.securities < 2) throw UsageError("returns generator needs k >= 2");
  if (config.feature_dim < 1) throw UsageError("returns generator needs p >= 1");
  const int k = config.securities;
  const int p = config.feature_dim;
  Rng model_rng = make_rng(seed, "portfolio/model");
  Rng data_rng = make_rng(seed, "portfolio/data");
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Vector> loading(k, Vector(p));
  for (auto& row : loading) {
    for (double& v : row) v = normal(model_rng) / std::sqrt(static_cast<double>(p));
  }

  ReturnsDataset out;
  out.data.seed = seed;
  out.data.p = p;
  out.data.d_c = k;
  const int total = config.train + config.validation + config.test;
  for (int n = 0; n < total; ++n) {
    Instance inst;
    inst.z.resize(p);
    for (double& v : inst.z) v = normal(data_rng);
    inst.c.resize(k);
    for (int i = 0; i < k; ++i) {
      const double factor = std::inner_product(loading[i].begin(), loading[i].end(),
                                               inst.z.begin(), 0.0);
      const double noise = config.noise_std * normal(data_rng);
      inst.c[i] = clip_return(1.35 * std::tanh(config.factor_scale * factor + noise) + 0.35);
    }
    inst.split = n < config.train                        ? Split::kTrain
                 : n < config.train + config.validation ? Split::kValidation
                                                         : Split::kTest;
    out.data.instances.push_back(std::move(inst));
  }
  out.beta = compute_beta(out.data.split(Split::kTrain));
  return out;
}

ReturnsDataset load_returns_csv(const std::filesystem::path& path, int window) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open returns file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw UsageError("returns file is empty");
  int k = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) ++k;
  }
  if (k < 2) throw UsageError("returns file needs at least two securities");

  std::vector<Vector> rows;
  int row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Vector row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(clip_return(std::stod(cell)));
      } catch (const std::exception&) {
        throw ShapeError("returns file row " + std::to_string(row_number) +
                         ": cannot parse '" + cell + "'");
      }
    }
    if (static_cast<int>(row.size()) != k) {
      throw ShapeError("returns file row " + std::to_string(row_number) + " has " +
                       std::to_string(row.size()) + " columns, expected " +
                       std::to_string(k));
    }
    rows.push_back(std::move(row));
  }
  const int instances = static_cast<int>(rows.size()) - window;
  if (window < 1 || instances < 3) throw UsageError("not enough rows for the feature window");

  ReturnsDataset out;
  out.data.seed = 0;
  out.data.p = window * k;
  out.data.d_c = k;
  const int n_train = instances * 70 / 100;
  const int n_val = instances * 15 / 100;
  for (int t = 0; t < instances; ++t) {
    Instance inst;
    for (int w = 0; w < window; ++w) {
      inst.z.insert(inst.z.end(), rows[t + w].begin(), rows[t + w].end());
    }
    inst.c = rows[t + window];
    inst.split = t < n_train           ? Split::kTrain
                 : t < n_train + n_val ? Split::kValidation
                                       : Split::kTest;
    out.data.instances.push_back(std::move(inst));
  }
  out.beta = compute_beta(out.data.split(Split::kTrain));
  return out;
}

json instance_to_json(const PortfolioProblem& problem) {
  return {{"k", problem.securities()}, {"beta", problem.beta()}};
}

}  // namespace dfl::portfolio
