#include "dfl/core.hpp"

#include <numeric>
#include <string>

namespace dfl {

ProxyConfig ProxyConfig::Scenario(int n) {
  if (n < 1) throw UsageError("scenario proxy needs n >= 1");
  return {ProxyKind::kScenario, n};
}

int ProxyConfig::prediction_dim(const Dims& dims) const {
  switch (kind) {
    case ProxyKind::kDeterministic:
      return dims.params;
    case ProxyKind::kScenario:
      return scenarios * dims.params;
    case ProxyKind::kQuadratic:
      return dims.decision;
  }
  return 0;
}

std::string ProxyConfig::name() const {
  switch (kind) {
    case ProxyKind::kDeterministic:
      return "deterministic";
    case ProxyKind::kScenario:
      return "scenario" + std::to_string(scenarios);
    case ProxyKind::kQuadratic:
      return "quadratic";
  }
  return "unknown";
}

DecisionVector Problem::solve_proxy(const ProxyConfig& proxy,
                                    std::span<const double> prediction) const {
  const Dims d = dims();
  if (static_cast<int>(prediction.size()) != proxy.prediction_dim(d)) {
    throw ShapeError("prediction length " + std::to_string(prediction.size()) +
                     " does not match proxy " + proxy.name());
  }
  switch (proxy.kind) {
    case ProxyKind::kDeterministic:
      return solve_deterministic(project_parameters(prediction));
    case ProxyKind::kScenario: {
      std::vector<Vector> scenarios;
      scenarios.reserve(proxy.scenarios);
      for (int s = 0; s < proxy.scenarios; ++s) {
        auto block = prediction.subspan(static_cast<std::size_t>(s) * d.params,
                                        d.params);
        scenarios.push_back(project_parameters(block));
      }
      return solve_scenarios(scenarios);
    }
    case ProxyKind::kQuadratic:
      return solve_quadratic(prediction);
  }
  throw UsageError("unknown proxy kind");
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw UsageError("unknown split label '" + std::string(name) + "'");
}

void ContextDataset::validate(bool require_all_splits) const {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (static_cast<int>(instances[i].z.size()) != p ||
        static_cast<int>(instances[i].c.size()) != d_c) {
      throw ShapeError("instance " + std::to_string(i) +
                       " has inconsistent feature/parameter length");
    }
  }
  if (require_all_splits) {
    for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
      if (count(s) == 0) {
        throw UsageError("dataset split '" + std::string(split_name(s)) +
                         "' is empty");
      }
    }
  }
}

std::vector<Instance> ContextDataset::split(Split which) const {
  std::vector<Instance> out;
  for (const Instance& inst : instances) {
    if (inst.split == which) out.push_back(inst);
  }
  return out;
}

std::size_t ContextDataset::count(Split which) const {
  std::size_t n = 0;
  for (const Instance& inst : instances) n += inst.split == which;
  return n;
}

json dataset_to_json(const ContextDataset& data) {
  json instances = json::array();
  for (const Instance& inst : data.instances) {
    instances.push_back(
        {{"z", inst.z}, {"c", inst.c}, {"split", split_name(inst.split)}});
  }
  return {{"seed", data.seed},
          {"p", data.p},
          {"d_c", data.d_c},
          {"instances", std::move(instances)}};
}

ContextDataset dataset_from_json(const json& j) {
  ContextDataset data;
  data.seed = j.at("seed").get<std::uint64_t>();
  data.p = j.at("p").get<int>();
  data.d_c = j.at("d_c").get<int>();
  for (const json& inst : j.at("instances")) {
    data.instances.push_back({inst.at("z").get<Vector>(),
                              inst.at("c").get<Vector>(),
                              parse_split(inst.at("split").get<std::string>())});
  }
  data.validate();
  return data;
}

double regret(const Problem& problem, std::span<const double> c,
              const DecisionVector& x) {
  const Dims d = problem.dims();
  if (static_cast<int>(c.size()) != d.params) {
    throw ShapeError("parameter vector has length " + std::to_string(c.size()) +
                     ", expected " + std::to_string(d.params));
  }
  if (static_cast<int>(x.values.size()) != d.decision) {
    throw ShapeError("decision vector has length " +
                     std::to_string(x.values.size()) + ", expected " +
                     std::to_string(d.decision));
  }
  if (!problem.is_feasible(x)) {
    throw FeasibilityError("decision is infeasible for problem " +
                           std::string(problem.id()));
  }
  return problem.objective(c, x) -
         problem.objective(c, problem.solve_deterministic(c));
}

Vector in_data_optimal_costs(const Problem& problem,
                             std::span<const Instance> split) {
  Vector out;
  out.reserve(split.size());
  for (const Instance& inst : split) {
    out.push_back(problem.objective(inst.c, problem.solve_deterministic(inst.c)));
  }
  return out;
}

RegretReport make_regret_report(Vector regrets,
                                std::optional<double> normalization_base,
                                std::uint64_t seed) {
  if (regrets.empty()) throw UsageError("regret report over an empty split");
  RegretReport report;
  report.mean_absolute_regret =
      std::accumulate(regrets.begin(), regrets.end(), 0.0) /
      static_cast<double>(regrets.size());
  report.per_instance_regret = std::move(regrets);
  report.normalization_base = normalization_base;
  report.normalized_mean = normalization_base
                               ? report.mean_absolute_regret / *normalization_base
                               : report.mean_absolute_regret;
  report.seed = seed;
  return report;
}

RegretReport mean_absolute_regret(const Problem& problem,
                                  std::span<const Instance> split,
                                  const Policy& policy,
                                  std::optional<double> normalization_base,
                                  std::uint64_t seed,
                                  const Vector* optimal_costs) {
  if (split.empty()) throw UsageError("mean_absolute_regret on an empty split");
  if (optimal_costs != nullptr && optimal_costs->size() != split.size()) {
    throw ShapeError("optimal cost cache does not match split size");
  }
  Vector regrets;
  regrets.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    const DecisionVector x = policy(split[i].z);
    if (!problem.is_feasible(x)) {
      throw FeasibilityError("policy returned an infeasible decision");
    }
    const double best = optimal_costs != nullptr
                            ? (*optimal_costs)[i]
                            : problem.objective(
                                  split[i].c,
                                  problem.solve_deterministic(split[i].c));
    regrets.push_back(problem.objective(split[i].c, x) - best);
  }
  return make_regret_report(std::move(regrets), normalization_base, seed);
}

}  // namespace dfl
