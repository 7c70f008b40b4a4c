#include "dfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dfl/rng.hpp"

namespace dfl::nn {

std::size_t parameter_count(const std::vector<int>& layer_sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] +
         layer_sizes[l + 1];
  }
  return n;
}

Mlp Mlp::Init(std::vector<int> layer_sizes, double alpha, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ShapeError("an MLP needs at least two layers");
  for (int s : layer_sizes) {
    if (s <= 0) throw ShapeError("layer sizes must be positive");
  }
  if (!(alpha > 0.0)) throw UsageError("LeakyReLU slope must be positive");
  Mlp mlp;
  mlp.layer_sizes = std::move(layer_sizes);
  mlp.alpha = alpha;
  mlp.params.assign(parameter_count(mlp.layer_sizes), 0.0);
  Rng rng(seed);
  for (int l = 0; l < mlp.num_layers(); ++l) {
    const int fan_in = mlp.layer_sizes[l];
    const int fan_out = mlp.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    MatrixMap w = mlp.weight(l);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    }
  }
  return mlp;
}

std::size_t Mlp::weight_offset(int layer) const {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] +
           layer_sizes[l + 1];
  }
  return off;
}

std::size_t Mlp::bias_offset(int layer) const {
  return weight_offset(layer) +
         static_cast<std::size_t>(layer_sizes[layer]) * layer_sizes[layer + 1];
}

ConstMatrixMap Mlp::weight(int layer) const {
  return ConstMatrixMap(params.data() + weight_offset(layer),
                        layer_sizes[layer + 1], layer_sizes[layer]);
}

MatrixMap Mlp::weight(int layer) {
  return MatrixMap(params.data() + weight_offset(layer), layer_sizes[layer + 1],
                   layer_sizes[layer]);
}

ConstVectorMap Mlp::bias(int layer) const {
  return ConstVectorMap(params.data() + bias_offset(layer), layer_sizes[layer + 1]);
}

VectorMap Mlp::bias(int layer) {
  return VectorMap(params.data() + bias_offset(layer), layer_sizes[layer + 1]);
}

Vector forward(const Mlp& mlp, std::span<const double> z, ForwardCache* cache) {
  if (static_cast<int>(z.size()) != mlp.input_dim()) {
    throw ShapeError("MLP input has length " + std::to_string(z.size()) +
                     ", expected " + std::to_string(mlp.input_dim()));
  }
  if (mlp.params.size() != parameter_count(mlp.layer_sizes)) {
    throw ShapeError("MLP parameter buffer does not match its layer sizes");
  }
  Eigen::VectorXd h = ConstVectorMap(z.data(), static_cast<Eigen::Index>(z.size()));
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre_activations.clear();
  }
  const int layers = mlp.num_layers();
  for (int l = 0; l < layers; ++l) {
    Eigen::VectorXd pre = mlp.weight(l) * h + mlp.bias(l);
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(h));
      cache->pre_activations.push_back(pre);
    }
    if (l + 1 < layers) {
      h = pre.unaryExpr([a = mlp.alpha](double v) { return v > 0.0 ? v : a * v; });
    } else {
      h = std::move(pre);
    }
  }
  return Vector(h.data(), h.data() + h.size());
}

void backward(const Mlp& mlp, const ForwardCache& cache,
              std::span<const double> output_grad, std::span<double> grad) {
  const int layers = mlp.num_layers();
  if (static_cast<int>(cache.inputs.size()) != layers ||
      static_cast<int>(cache.pre_activations.size()) != layers) {
    throw ShapeError("forward cache does not match the network depth");
  }
  for (int l = 0; l < layers; ++l) {
    if (cache.inputs[l].size() != mlp.layer_sizes[l] ||
        cache.pre_activations[l].size() != mlp.layer_sizes[l + 1]) {
      throw ShapeError("stale forward cache");
    }
  }
  if (static_cast<int>(output_grad.size()) != mlp.output_dim()) {
    throw ShapeError("output gradient length mismatch");
  }
  if (grad.size() != mlp.params.size()) throw ShapeError("gradient buffer mismatch");

  Eigen::VectorXd delta = ConstVectorMap(output_grad.data(), mlp.output_dim());
  for (int l = layers - 1; l >= 0; --l) {
    if (l + 1 < layers) {
      const Eigen::VectorXd& pre = cache.pre_activations[l];
      for (Eigen::Index i = 0; i < delta.size(); ++i) {
        if (pre[i] <= 0.0) delta[i] *= mlp.alpha;
      }
    }
    MatrixMap gw(grad.data() + mlp.weight_offset(l), mlp.layer_sizes[l + 1],
                 mlp.layer_sizes[l]);
    VectorMap gb(grad.data() + mlp.bias_offset(l), mlp.layer_sizes[l + 1]);
    gw.noalias() += delta * cache.inputs[l].transpose();
    gb += delta;
    if (l > 0) delta = mlp.weight(l).transpose() * delta;
  }
}

Vector backward(const Mlp& mlp, const ForwardCache& cache,
                std::span<const double> output_grad) {
  Vector grad(mlp.params.size(), 0.0);
  backward(mlp, cache, output_grad, grad);
  return grad;
}

AdamState AdamState::ForSize(std::size_t n, double lr) {
  AdamState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(std::span<double> params, AdamState& state,
               std::span<const double> grads) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("Adam state does not match the parameter vector");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient in Adam step");
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    params[i] -= state.lr * (m / bc1) / (std::sqrt(v / bc2) + state.epsilon);
  }
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& g : grads) g *= s;
  }
  return norm;
}

double empirical_quantile(Vector values, double q) {
  if (values.empty()) throw UsageError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto m = values.size();
  auto idx = static_cast<std::size_t>(std::floor(static_cast<double>(m) * q));
  return values[std::min(idx, m - 1)];
}

namespace {

void column_moments(std::span<const Vector> rows, Vector& mean, Vector& stddev) {
  if (rows.empty()) throw UsageError("cannot fit a standardizer on no data");
  const std::size_t d = rows.front().size();
  mean.assign(d, 0.0);
  stddev.assign(d, 0.0);
  for (const Vector& r : rows) {
    if (r.size() != d) throw ShapeError("ragged standardizer data");
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  for (double& m : mean) m /= static_cast<double>(rows.size());
  for (const Vector& r : rows) {
    for (std::size_t j = 0; j < d; ++j) stddev[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  }
  for (double& s : stddev) {
    s = std::sqrt(s / static_cast<double>(rows.size()));
    if (!(s > 1e-12)) s = 1.0;  // constant column
  }
}

}  // namespace

void Standardizer::fit_inputs(std::span<const Vector> features) {
  column_moments(features, input_mean_, input_std_);
  inputs_fitted_ = true;
}

void Standardizer::fit_outputs_mean(std::span<const Vector> targets) {
  Vector mean;
  column_moments(targets, mean, output_scale_);
  output_shift_ = {std::move(mean)};
  mode_ = ShiftMode::kMean;
  outputs_fitted_ = true;
}

void Standardizer::fit_outputs_quantile(std::span<const Vector> targets, int blocks) {
  if (blocks < 1) throw UsageError("quantile standardization needs blocks >= 1");
  Vector mean;
  column_moments(targets, mean, output_scale_);
  const std::size_t d = mean.size();
  output_shift_.assign(blocks, Vector(d, 0.0));
  for (std::size_t j = 0; j < d; ++j) {
    Vector column;
    column.reserve(targets.size());
    for (const Vector& t : targets) column.push_back(t[j]);
    std::sort(column.begin(), column.end());
    for (int i = 0; i < blocks; ++i) {
      output_shift_[i][j] =
          empirical_quantile(column, static_cast<double>(i + 1) / (blocks + 1));
    }
  }
  mode_ = ShiftMode::kQuantile;
  outputs_fitted_ = true;
}

void Standardizer::fit_outputs_identity(int block_dim, int blocks) {
  output_scale_.assign(block_dim, 1.0);
  output_shift_.assign(blocks, Vector(block_dim, 0.0));
  mode_ = ShiftMode::kIdentity;
  outputs_fitted_ = true;
}

int Standardizer::output_dim() const {
  return static_cast<int>(output_shift_.size() * output_scale_.size());
}

void Standardizer::require_inputs() const {
  if (!inputs_fitted_) throw UsageError("standardizer inputs are not fitted");
}

void Standardizer::require_outputs() const {
  if (!outputs_fitted_) throw UsageError("standardizer outputs are not fitted");
}

Vector Standardizer::standardize_input(std::span<const double> z) const {
  require_inputs();
  if (z.size() != input_mean_.size()) throw ShapeError("input length mismatch");
  Vector out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = (z[j] - input_mean_[j]) / input_std_[j];
  return out;
}

Vector Standardizer::destandardize_input(std::span<const double> u) const {
  require_inputs();
  if (u.size() != input_mean_.size()) throw ShapeError("input length mismatch");
  Vector out(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) out[j] = u[j] * input_std_[j] + input_mean_[j];
  return out;
}

Vector Standardizer::standardize_output(std::span<const double> y) const {
  require_outputs();
  if (static_cast<int>(y.size()) != output_dim()) throw ShapeError("output length mismatch");
  const std::size_t d = output_scale_.size();
  Vector out(y.size());
  for (std::size_t b = 0; b < output_shift_.size(); ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      out[b * d + j] = (y[b * d + j] - output_shift_[b][j]) / output_scale_[j];
    }
  }
  return out;
}

Vector Standardizer::destandardize_output(std::span<const double> o) const {
  require_outputs();
  if (static_cast<int>(o.size()) != output_dim()) throw ShapeError("output length mismatch");
  const std::size_t d = output_scale_.size();
  Vector out(o.size());
  for (std::size_t b = 0; b < output_shift_.size(); ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      out[b * d + j] = o[b * d + j] * output_scale_[j] + output_shift_[b][j];
    }
  }
  return out;
}

json Standardizer::to_json() const {
  const char* mode = mode_ == ShiftMode::kMean       ? "mean"
                     : mode_ == ShiftMode::kQuantile ? "quantile"
                                                     : "identity";
  return {{"mode", mode},
          {"input_mean", input_mean_},
          {"input_std", input_std_},
          {"output_shift", output_shift_},
          {"output_scale", output_scale_}};
}

Standardizer Standardizer::FromJson(const json& j) {
  Standardizer s;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "mean") {
    s.mode_ = ShiftMode::kMean;
  } else if (mode == "quantile") {
    s.mode_ = ShiftMode::kQuantile;
  } else if (mode == "identity") {
    s.mode_ = ShiftMode::kIdentity;
  } else {
    throw UsageError("unknown standardizer mode '" + mode + "'");
  }
  s.input_mean_ = j.at("input_mean").get<Vector>();
  s.input_std_ = j.at("input_std").get<Vector>();
  s.output_shift_ = j.at("output_shift").get<std::vector<Vector>>();
  s.output_scale_ = j.at("output_scale").get<Vector>();
  s.inputs_fitted_ = !s.input_mean_.empty();
  s.outputs_fitted_ = !s.output_scale_.empty();
  return s;
}

json mlp_to_json(const Mlp& mlp) {
  json weights = json::array();
  json biases = json::array();
  for (int l = 0; l < mlp.num_layers(); ++l) {
    const double* w = mlp.params.data() + mlp.weight_offset(l);
    weights.push_back(Vector(w, w + static_cast<std::size_t>(mlp.layer_sizes[l]) *
                                        mlp.layer_sizes[l + 1]));
    const double* b = mlp.params.data() + mlp.bias_offset(l);
    biases.push_back(Vector(b, b + mlp.layer_sizes[l + 1]));
  }
  return {{"layer_sizes", mlp.layer_sizes},
          {"alpha", mlp.alpha},
          {"weights", std::move(weights)},
          {"biases", std::move(biases)}};
}

Mlp mlp_from_json(const json& j) {
  Mlp mlp;
  mlp.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  mlp.alpha = j.at("alpha").get<double>();
  mlp.params.assign(parameter_count(mlp.layer_sizes), 0.0);
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (static_cast<int>(weights.size()) != mlp.num_layers() ||
      static_cast<int>(biases.size()) != mlp.num_layers()) {
    throw ShapeError("checkpoint layer count mismatch");
  }
  for (int l = 0; l < mlp.num_layers(); ++l) {
    const Vector w = weights[l].get<Vector>();
    const Vector b = biases[l].get<Vector>();
    if (w.size() != static_cast<std::size_t>(mlp.layer_sizes[l]) * mlp.layer_sizes[l + 1] ||
        static_cast<int>(b.size()) != mlp.layer_sizes[l + 1]) {
      throw ShapeError("checkpoint layer shape mismatch");
    }
    std::copy(w.begin(), w.end(), mlp.params.begin() + mlp.weight_offset(l));
    std::copy(b.begin(), b.end(), mlp.params.begin() + mlp.bias_offset(l));
  }
  return mlp;
}

}  // namespace dfl::nn
