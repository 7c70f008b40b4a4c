#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dfl/core.hpp"

namespace dfl::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

// Fully connected network with LeakyReLU on every hidden layer and a linear
// output layer. All weights and biases live in one flat buffer (layer by
// layer: row-major weight matrix, then bias) so that optimizers, gradient
// clipping and checkpoints can treat them as a single vector.
struct Mlp {
  std::vector<int> layer_sizes;
  double alpha = 0.01;
  Vector params;

  // Glorot-uniform weights, zero biases.
  static Mlp Init(std::vector<int> layer_sizes, double alpha, std::uint64_t seed);

  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t weight_offset(int layer) const;
  std::size_t bias_offset(int layer) const;

  ConstMatrixMap weight(int layer) const;
  MatrixMap weight(int layer);
  ConstVectorMap bias(int layer) const;
  VectorMap bias(int layer);
};

std::size_t parameter_count(const std::vector<int>& layer_sizes);

// Inputs to each layer and the pre-activations each layer produced.
struct ForwardCache {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> pre_activations;
};

Vector forward(const Mlp& mlp, std::span<const double> z,
               ForwardCache* cache = nullptr);

// Adds d(output_grad . output)/d(params) into `grad` (same layout as params).
void backward(const Mlp& mlp, const ForwardCache& cache,
              std::span<const double> output_grad, std::span<double> grad);
Vector backward(const Mlp& mlp, const ForwardCache& cache,
                std::span<const double> output_grad);

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  long step_count = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState ForSize(std::size_t n, double lr = 5e-4);
};

// Bias-corrected Adam update. Throws NumericError on non-finite gradients.
void adam_step(std::span<double> params, AdamState& state,
               std::span<const double> grads);

// Rescales `grads` to at most `max_norm`; returns the norm before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

enum class ShiftMode { kMean, kQuantile, kIdentity };

// Input standardization (mean/std of training features) and output
// de-standardization. Outputs are organized in blocks of `block_dim`; every
// block shares `output_scale` and has its own row of `output_shift`.
class Standardizer {
 public:
  void fit_inputs(std::span<const Vector> features);
  // One block shifted by the target mean and scaled by the target std.
  void fit_outputs_mean(std::span<const Vector> targets);
  // `blocks` blocks; block i is shifted by the in-data quantile i/(blocks+1).
  void fit_outputs_quantile(std::span<const Vector> targets, int blocks);
  void fit_outputs_identity(int block_dim, int blocks);

  bool fitted() const { return inputs_fitted_ && outputs_fitted_; }
  ShiftMode mode() const { return mode_; }
  int output_dim() const;
  const Vector& output_scale() const { return output_scale_; }
  const std::vector<Vector>& output_shift() const { return output_shift_; }

  Vector standardize_input(std::span<const double> z) const;
  Vector destandardize_input(std::span<const double> u) const;
  Vector standardize_output(std::span<const double> y) const;
  Vector destandardize_output(std::span<const double> o) const;

  json to_json() const;
  static Standardizer FromJson(const json& j);

 private:
  void require_inputs() const;
  void require_outputs() const;

  bool inputs_fitted_ = false;
  bool outputs_fitted_ = false;
  ShiftMode mode_ = ShiftMode::kIdentity;
  Vector input_mean_;
  Vector input_std_;
  std::vector<Vector> output_shift_;
  Vector output_scale_;
};

// In-data quantile used by the scenario standardization: sorted[floor(m*q)].
double empirical_quantile(Vector values, double q);

json mlp_to_json(const Mlp& mlp);
Mlp mlp_from_json(const json& j);

}  // namespace dfl::nn
