#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dfl/core.hpp"
#include "dfl/nn.hpp"
#include "dfl/rng.hpp"

namespace dfl::training {

struct TrainConfig {
  double lr = 5e-4;
  int batch_size = 32;
  int epochs = 50;
  int samples_per_point = 1;
  bool baseline_subtraction = true;
  double sigma_floor = 1e-3;
  double clip_norm = 10.0;
  std::vector<int> hidden{256, 256};
  double leaky_alpha = 0.01;
  // false: outputs are not shifted or scaled (portfolio scenario proxy).
  bool standardize_outputs = true;
  // When off, wall-clock columns are written as 0 so logs are reproducible.
  bool record_timing = false;
  std::uint64_t seed = 0;

  void validate() const;
};

json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const json& j);

// Diagonal Gaussian over proxy inputs. The network and log_sigma both live in
// standardized output units; mean() and sample outputs are destandardized.
struct GaussianPredictor {
  ProxyConfig proxy;
  nn::Mlp mlp;
  nn::Standardizer standardizer;
  Vector log_sigma;
  double sigma_floor = 1e-3;

  int output_dim() const { return mlp.output_dim(); }
  Vector standardized_mean(std::span<const double> z, nn::ForwardCache* cache = nullptr) const;
  Vector mean(std::span<const double> z) const;
  Vector sigma() const;
  double sigma_mean() const;
  // Raises every log_sigma entry to at least log(sigma_floor).
  void clamp_sigma();
  // Proxy decision at the mean prediction.
  DecisionVector decide(const Problem& problem, std::span<const double> z) const;
};

json predictor_to_json(const GaussianPredictor& predictor);
GaussianPredictor predictor_from_json(const json& j);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mean_abs_regret = 0.0;
  double val_mse = 0.0;  // PFL only
  double sigma_mean = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  GaussianPredictor predictor;
  std::vector<EpochRecord> history;  // epochs 1..E
  int best_epoch = 0;                // 0 means the initialization was kept
  double best_validation = 0.0;      // regret (DFL) or MSE (PFL)
};

// MSE training of the deterministic-proxy predictor; selection by
// validation MSE. Validation regret of the deterministic proxy is logged too.
TrainResult train_pfl(const Problem& problem, const ContextDataset& data,
                      const TrainConfig& config);

// Score-function training for any proxy; selection by validation regret of
// the proxy decision at the mean prediction.
TrainResult train_dfl(const Problem& problem, const ContextDataset& data,
                      const ProxyConfig& proxy, const TrainConfig& config);

// One Gaussian draw through the proxy. `score_mean` and `score_log_sigma` are
// the gradients of log p(sample) with respect to the standardized mean and
// log_sigma; `loss` is the realized regret at c_true.
struct SfgeSample {
  double loss = 0.0;
  Vector score_mean;
  Vector score_log_sigma;
  nn::ForwardCache cache;
  DecisionVector decision;
};

SfgeSample sfge_sample(const Problem& problem, const GaussianPredictor& predictor,
                       std::span<const double> z, std::span<const double> c_true,
                       double optimal_cost, Rng& rng);

struct SfgeGradient {
  double loss = 0.0;
  Vector mlp_grad;
  Vector log_sigma_grad;
};

// Single-sample estimate (L - baseline) * grad log p, propagated through the
// network.
SfgeGradient sfge_gradient(const Problem& problem, const GaussianPredictor& predictor,
                           std::span<const double> z, std::span<const double> c_true,
                           Rng& rng, double baseline = 0.0);

// Scalar toy: c ~ N(mu, sigma^2), estimate d/dmu E[L(c)] from `samples`
// draws of (L(c) - baseline) * (c - mu) / sigma^2.
struct ToyEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};
ToyEstimate sfge_toy_gradient(const std::function<double(double)>& loss, double mu,
                              double sigma, int samples, std::uint64_t seed,
                              double baseline = 0.0);

// PFL model evaluated through an SAA proxy whose scenarios are mu(z) plus
// validation residuals drawn with replacement.
class ResidualSaaPolicy {
 public:
  ResidualSaaPolicy(const Problem& problem, GaussianPredictor model,
                    std::span<const Instance> validation, int n, std::uint64_t seed);

  DecisionVector operator()(std::span<const double> z) const;
  const std::vector<Vector>& residuals() const { return residuals_; }

 private:
  const Problem& problem_;
  GaussianPredictor model_;
  std::vector<Vector> residuals_;
  int n_;
  std::uint64_t seed_;
};

}  // namespace dfl::training
