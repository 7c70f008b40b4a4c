#include "dfl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace dfl::training {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Vector> column(std::span<const Instance> rows, bool features) {
  std::vector<Vector> out;
  out.reserve(rows.size());
  for (const Instance& r : rows) out.push_back(features ? r.z : r.c);
  return out;
}

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

// Population standard deviation per column, zero replaced by one.
Vector column_std(std::span<const Vector> rows) {
  const std::size_t d = rows.front().size();
  Vector mean(d, 0.0);
  Vector var(d, 0.0);
  for (const Vector& r : rows) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  for (double& m : mean) m /= static_cast<double>(rows.size());
  for (const Vector& r : rows) {
    for (std::size_t j = 0; j < d; ++j) var[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  }
  Vector out(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double s = std::sqrt(var[j] / static_cast<double>(rows.size()));
    out[j] = s > 0.0 ? s : 1.0;
  }
  return out;
}

ProxyConfig canonical(const ProxyConfig& proxy) {
  // x^S_1 and x^D are the same proxy; train them identically.
  if (proxy.kind == ProxyKind::kScenario && proxy.scenarios == 1) {
    return ProxyConfig::Deterministic();
  }
  return proxy;
}

double validation_regret(const Problem& problem, const GaussianPredictor& predictor,
                         std::span<const Instance> val, const Vector& optimal) {
  double total = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const DecisionVector x = predictor.decide(problem, val[i].z);
    total += problem.objective(val[i].c, x) - optimal[i];
  }
  return total / static_cast<double>(val.size());
}

double validation_mse(const GaussianPredictor& predictor, std::span<const Instance> val) {
  double total = 0.0;
  for (const Instance& row : val) {
    const Vector o = predictor.standardized_mean(row.z);
    const Vector t = predictor.standardizer.standardize_output(row.c);
    double sq = 0.0;
    for (std::size_t j = 0; j < o.size(); ++j) sq += (o[j] - t[j]) * (o[j] - t[j]);
    total += sq / static_cast<double>(o.size());
  }
  return total / static_cast<double>(val.size());
}

// One Adam step on the concatenation (mlp params, log_sigma).
void apply_update(GaussianPredictor& predictor, nn::AdamState& adam, Vector& grads,
                  double clip_norm, bool update_sigma) {
  const std::size_t n_mlp = predictor.mlp.params.size();
  nn::clip_global_norm(grads, clip_norm);
  Vector params(predictor.mlp.params);
  params.insert(params.end(), predictor.log_sigma.begin(), predictor.log_sigma.end());
  nn::adam_step(params, adam, grads);
  std::copy(params.begin(), params.begin() + static_cast<long>(n_mlp),
            predictor.mlp.params.begin());
  if (update_sigma) {
    std::copy(params.begin() + static_cast<long>(n_mlp), params.end(),
              predictor.log_sigma.begin());
    predictor.clamp_sigma();
  }
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw UsageError("epochs must be non-negative");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (samples_per_point < 1) throw UsageError("samples_per_point must be >= 1");
  if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
  if (!(sigma_floor > 0.0)) throw UsageError("sigma_floor must be positive");
  if (!(clip_norm > 0.0)) throw UsageError("clip_norm must be positive");
}

json config_to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"samples_per_point", c.samples_per_point},
          {"baseline_subtraction", c.baseline_subtraction},
          {"sigma_floor", c.sigma_floor},
          {"clip_norm", c.clip_norm},
          {"hidden", c.hidden},
          {"leaky_alpha", c.leaky_alpha},
          {"standardize_outputs", c.standardize_outputs},
          {"record_timing", c.record_timing},
          {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.samples_per_point = j.value("samples_per_point", c.samples_per_point);
  c.baseline_subtraction = j.value("baseline_subtraction", c.baseline_subtraction);
  c.sigma_floor = j.value("sigma_floor", c.sigma_floor);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.hidden = j.value("hidden", c.hidden);
  c.leaky_alpha = j.value("leaky_alpha", c.leaky_alpha);
  c.standardize_outputs = j.value("standardize_outputs", c.standardize_outputs);
  c.record_timing = j.value("record_timing", c.record_timing);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Vector GaussianPredictor::standardized_mean(std::span<const double> z,
                                            nn::ForwardCache* cache) const {
  return nn::forward(mlp, standardizer.standardize_input(z), cache);
}

Vector GaussianPredictor::mean(std::span<const double> z) const {
  return standardizer.destandardize_output(standardized_mean(z));
}

Vector GaussianPredictor::sigma() const {
  Vector s(log_sigma.size());
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = std::max(std::exp(log_sigma[j]), sigma_floor);
  return s;
}

double GaussianPredictor::sigma_mean() const {
  const Vector s = sigma();
  if (s.empty()) return 0.0;
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

void GaussianPredictor::clamp_sigma() {
  const double floor = std::log(sigma_floor);
  for (double& v : log_sigma) v = std::max(v, floor);
}

DecisionVector GaussianPredictor::decide(const Problem& problem,
                                         std::span<const double> z) const {
  return problem.solve_proxy(proxy, mean(z));
}

json predictor_to_json(const GaussianPredictor& p) {
  return {{"proxy", {{"name", p.proxy.name()},
                     {"kind", static_cast<int>(p.proxy.kind)},
                     {"scenarios", p.proxy.scenarios}}},
          {"mlp", nn::mlp_to_json(p.mlp)},
          {"standardizer", p.standardizer.to_json()},
          {"log_sigma", p.log_sigma},
          {"sigma_floor", p.sigma_floor}};
}

GaussianPredictor predictor_from_json(const json& j) {
  GaussianPredictor p;
  const json& proxy = j.at("proxy");
  const int kind = proxy.at("kind").get<int>();
  if (kind < 0 || kind > 2) throw UsageError("unknown proxy kind in checkpoint");
  p.proxy = {static_cast<ProxyKind>(kind), proxy.at("scenarios").get<int>()};
  p.mlp = nn::mlp_from_json(j.at("mlp"));
  p.standardizer = nn::Standardizer::FromJson(j.at("standardizer"));
  p.log_sigma = j.at("log_sigma").get<Vector>();
  p.sigma_floor = j.at("sigma_floor").get<double>();
  if (static_cast<int>(p.log_sigma.size()) != p.mlp.output_dim() ||
      p.standardizer.output_dim() != p.mlp.output_dim()) {
    throw ShapeError("checkpoint output dimensions disagree");
  }
  return p;
}

SfgeSample sfge_sample(const Problem& problem, const GaussianPredictor& predictor,
                       std::span<const double> z, std::span<const double> c_true,
                       double optimal_cost, Rng& rng) {
  SfgeSample s;
  const Vector o = predictor.standardized_mean(z, &s.cache);
  const Vector sigma = predictor.sigma();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector drawn(o.size());
  s.score_mean.resize(o.size());
  s.score_log_sigma.resize(o.size());
  for (std::size_t j = 0; j < o.size(); ++j) {
    const double eps = normal(rng);
    drawn[j] = o[j] + sigma[j] * eps;
    s.score_mean[j] = eps / sigma[j];
    s.score_log_sigma[j] = eps * eps - 1.0;
  }
  s.decision = problem.solve_proxy(predictor.proxy, predictor.standardizer.destandardize_output(drawn));
  s.loss = problem.objective(c_true, s.decision) - optimal_cost;
  return s;
}

SfgeGradient sfge_gradient(const Problem& problem, const GaussianPredictor& predictor,
                           std::span<const double> z, std::span<const double> c_true,
                           Rng& rng, double baseline) {
  const double optimal = problem.objective(c_true, problem.solve_deterministic(c_true));
  SfgeSample s = sfge_sample(problem, predictor, z, c_true, optimal, rng);
  SfgeGradient g;
  g.loss = s.loss;
  const double weight = s.loss - baseline;
  Vector out_grad(s.score_mean.size());
  g.log_sigma_grad.resize(s.score_mean.size());
  for (std::size_t j = 0; j < out_grad.size(); ++j) {
    out_grad[j] = weight * s.score_mean[j];
    g.log_sigma_grad[j] = weight * s.score_log_sigma[j];
  }
  g.mlp_grad = nn::backward(predictor.mlp, s.cache, out_grad);
  return g;
}

ToyEstimate sfge_toy_gradient(const std::function<double(double)>& loss, double mu,
                              double sigma, int samples, std::uint64_t seed,
                              double baseline) {
  if (samples < 2) throw UsageError("toy estimate needs at least two samples");
  if (!(sigma > 0.0)) throw UsageError("toy sigma must be positive");
  Rng rng = make_rng(seed, "sfge-toy");
  std::normal_distribution<double> normal(mu, sigma);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double c = normal(rng);
    const double g = (loss(c) - baseline) * (c - mu) / (sigma * sigma);
    sum += g;
    sum_sq += g * g;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(sum_sq / n - mean * mean, 0.0) * n / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

TrainResult train_dfl(const Problem& problem, const ContextDataset& data,
                      const ProxyConfig& proxy_in, const TrainConfig& config) {
  config.validate();
  data.validate(true);
  const ProxyConfig proxy = canonical(proxy_in);
  const Dims dims = problem.dims();
  const std::vector<Instance> train = data.split(Split::kTrain);
  const std::vector<Instance> val = data.split(Split::kValidation);
  const Vector train_opt = in_data_optimal_costs(problem, train);
  const Vector val_opt = in_data_optimal_costs(problem, val);

  GaussianPredictor predictor;
  predictor.proxy = proxy;
  predictor.sigma_floor = config.sigma_floor;
  predictor.standardizer.fit_inputs(column(train, true));
  const int out_dim = proxy.prediction_dim(dims);
  std::vector<Vector> targets = column(train, false);
  if (proxy.kind == ProxyKind::kQuadratic) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      targets[i] = problem.solve_deterministic(train[i].c).values;
    }
  }
  const Vector target_std = column_std(targets);
  if (!config.standardize_outputs) {
    predictor.standardizer.fit_outputs_identity(static_cast<int>(target_std.size()),
                                                out_dim / static_cast<int>(target_std.size()));
    // Identity units: sigma starts at the raw target deviation.
    predictor.log_sigma.clear();
    for (int b = 0; b < out_dim / static_cast<int>(target_std.size()); ++b) {
      for (double s : target_std) predictor.log_sigma.push_back(std::log(s));
    }
  } else {
    if (proxy.kind == ProxyKind::kScenario) {
      predictor.standardizer.fit_outputs_quantile(targets, proxy.scenarios);
    } else {
      predictor.standardizer.fit_outputs_mean(targets);
    }
    // The target deviation is one standardized unit.
    predictor.log_sigma.assign(out_dim, 0.0);
  }
  predictor.clamp_sigma();
  predictor.mlp = nn::Mlp::Init(layer_sizes(dims.features, config.hidden, out_dim),
                                config.leaky_alpha, derive_seed(config.seed, "init"));

  TrainResult result;
  result.predictor = predictor;
  result.best_epoch = 0;
  result.best_validation = validation_regret(problem, predictor, val, val_opt);

  Rng shuffle_rng = make_rng(config.seed, "shuffle");
  Rng sample_rng = make_rng(config.seed, "sfge");
  const std::size_t n_mlp = predictor.mlp.params.size();
  nn::AdamState adam = nn::AdamState::ForSize(n_mlp + predictor.log_sigma.size(), config.lr);
  const auto start = Clock::now();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled(train.size(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<SfgeSample> samples;
      for (std::size_t b = begin; b < end; ++b) {
        const Instance& row = train[order[b]];
        for (int s = 0; s < config.samples_per_point; ++s) {
          samples.push_back(sfge_sample(problem, predictor, row.z, row.c,
                                        train_opt[order[b]], sample_rng));
        }
      }
      double baseline = 0.0;
      if (config.baseline_subtraction) {
        for (const SfgeSample& s : samples) baseline += s.loss;
        baseline /= static_cast<double>(samples.size());
      }
      Vector grads(n_mlp + predictor.log_sigma.size(), 0.0);
      std::span<double> mlp_grad(grads.data(), n_mlp);
      const double inv = 1.0 / static_cast<double>(samples.size());
      Vector out_grad(out_dim);
      for (const SfgeSample& s : samples) {
        if (!std::isfinite(s.loss)) {
          throw NumericError("DFL training diverged at epoch " + std::to_string(epoch));
        }
        const double w = (s.loss - baseline) * inv;
        for (int j = 0; j < out_dim; ++j) {
          out_grad[j] = w * s.score_mean[j];
          grads[n_mlp + j] += w * s.score_log_sigma[j];
        }
        nn::backward(predictor.mlp, s.cache, out_grad, mlp_grad);
        epoch_loss += s.loss;
        ++epoch_count;
      }
      try {
        apply_update(predictor, adam, grads, config.clip_norm, true);
      } catch (const NumericError&) {
        throw NumericError("DFL training diverged at epoch " + std::to_string(epoch));
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(epoch_count, 1));
    rec.val_mean_abs_regret = validation_regret(problem, predictor, val, val_opt);
    rec.sigma_mean = predictor.sigma_mean();
    rec.wall_time_s = config.record_timing ? seconds_since(start) : 0.0;
    if (!std::isfinite(rec.val_mean_abs_regret)) {
      throw NumericError("DFL training diverged at epoch " + std::to_string(epoch));
    }
    if (rec.val_mean_abs_regret < result.best_validation) {
      result.best_validation = rec.val_mean_abs_regret;
      result.best_epoch = epoch;
      result.predictor = predictor;
    }
    result.history.push_back(rec);
  }
  return result;
}

TrainResult train_pfl(const Problem& problem, const ContextDataset& data,
                      const TrainConfig& config) {
  config.validate();
  data.validate(true);
  const Dims dims = problem.dims();
  const std::vector<Instance> train = data.split(Split::kTrain);
  const std::vector<Instance> val = data.split(Split::kValidation);
  const Vector val_opt = in_data_optimal_costs(problem, val);

  GaussianPredictor predictor;
  predictor.proxy = ProxyConfig::Deterministic();
  predictor.sigma_floor = config.sigma_floor;
  predictor.standardizer.fit_inputs(column(train, true));
  predictor.standardizer.fit_outputs_mean(column(train, false));
  predictor.log_sigma.assign(dims.params, 0.0);
  predictor.mlp = nn::Mlp::Init(layer_sizes(dims.features, config.hidden, dims.params),
                                config.leaky_alpha, derive_seed(config.seed, "init"));

  std::vector<Vector> inputs;
  std::vector<Vector> targets;
  for (const Instance& row : train) {
    inputs.push_back(predictor.standardizer.standardize_input(row.z));
    targets.push_back(predictor.standardizer.standardize_output(row.c));
  }

  TrainResult result;
  result.predictor = predictor;
  result.best_epoch = 0;
  result.best_validation = validation_mse(predictor, val);

  Rng shuffle_rng = make_rng(config.seed, "shuffle");
  const std::size_t n_mlp = predictor.mlp.params.size();
  nn::AdamState adam = nn::AdamState::ForSize(n_mlp + predictor.log_sigma.size(), config.lr);
  const auto start = Clock::now();
  const double d = static_cast<double>(dims.params);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled(train.size(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - begin);
      Vector grads(n_mlp + predictor.log_sigma.size(), 0.0);
      std::span<double> mlp_grad(grads.data(), n_mlp);
      for (std::size_t b = begin; b < end; ++b) {
        nn::ForwardCache cache;
        const Vector o = nn::forward(predictor.mlp, inputs[order[b]], &cache);
        const Vector& t = targets[order[b]];
        Vector out_grad(o.size());
        double sq = 0.0;
        for (std::size_t j = 0; j < o.size(); ++j) {
          sq += (o[j] - t[j]) * (o[j] - t[j]);
          out_grad[j] = 2.0 * (o[j] - t[j]) / d * inv;
        }
        if (!std::isfinite(sq)) {
          throw NumericError("PFL loss is not finite at epoch " + std::to_string(epoch));
        }
        epoch_loss += sq / d;
        nn::backward(predictor.mlp, cache, out_grad, mlp_grad);
      }
      try {
        apply_update(predictor, adam, grads, config.clip_norm, false);
      } catch (const NumericError&) {
        throw NumericError("PFL loss is not finite at epoch " + std::to_string(epoch));
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(train.size());
    rec.val_mse = validation_mse(predictor, val);
    rec.val_mean_abs_regret = validation_regret(problem, predictor, val, val_opt);
    rec.sigma_mean = predictor.sigma_mean();
    rec.wall_time_s = config.record_timing ? seconds_since(start) : 0.0;
    if (!std::isfinite(rec.val_mse)) {
      throw NumericError("PFL loss is not finite at epoch " + std::to_string(epoch));
    }
    if (rec.val_mse < result.best_validation) {
      result.best_validation = rec.val_mse;
      result.best_epoch = epoch;
      result.predictor = predictor;
    }
    result.history.push_back(rec);
  }
  return result;
}

ResidualSaaPolicy::ResidualSaaPolicy(const Problem& problem, GaussianPredictor model,
                                     std::span<const Instance> validation, int n,
                                     std::uint64_t seed)
    : problem_(problem), model_(std::move(model)), n_(n), seed_(seed) {
  if (n < 1) throw UsageError("residual SAA needs n > 0");
  if (validation.empty()) throw UsageError("residual SAA needs validation data");
  if (model_.proxy.kind != ProxyKind::kDeterministic) {
    throw UsageError("residual SAA expects a PFL (deterministic) model");
  }
  for (const Instance& row : validation) {
    const Vector mu = model_.mean(row.z);
    Vector r(mu.size());
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = row.c[j] - mu[j];
    residuals_.push_back(std::move(r));
  }
}

DecisionVector ResidualSaaPolicy::operator()(std::span<const double> z) const {
  // Seeded from the query itself so each decision is reproducible in isolation.
  const std::string_view bytes(reinterpret_cast<const char*>(z.data()),
                               z.size() * sizeof(double));
  Rng rng(derive_seed(seed_, bytes));
  std::uniform_int_distribution<std::size_t> pick(0, residuals_.size() - 1);
  const Vector mu = model_.mean(z);
  Vector stacked;
  stacked.reserve(mu.size() * n_);
  for (int s = 0; s < n_; ++s) {
    const Vector& r = residuals_[pick(rng)];
    for (std::size_t j = 0; j < mu.size(); ++j) stacked.push_back(mu[j] + r[j]);
  }
  // Scenarios are predictions too, so they pass through the same projection.
  return problem_.solve_proxy(ProxyConfig::Scenario(n_), stacked);
}

}  // namespace dfl::training
