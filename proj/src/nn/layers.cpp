// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/nn/layers.hpp"

#include <cmath>
#include <numbers>

namespace metamem::nn {

Tensor randn(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) t(i, j) = dist(rng);
  }
  return t;
}

Tensor uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) t(i, j) = dist(rng);
  }
  return t;
}

Linear::Linear(int in, int out, Rng& rng, double init_scale) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = parameter(uniform(in, out, bound, rng) * init_scale);
  bias_ = parameter(uniform(1, out, bound, rng) * init_scale);
}

Var Linear::operator()(const Var& x) const { return matmul(x, weight_) + bias_; }

void Linear::register_params(ParamSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight_);
  params.add(prefix + ".bias", bias_);
}

Mlp::Mlp(int in, const std::vector<int>& hidden, int out, Rng& rng,
         double last_layer_scale) {
  int prev = in;
  for (int width : hidden) {
    layers_.emplace_back(prev, width, rng);
    prev = width;
  }
  layers_.emplace_back(prev, out, rng, last_layer_scale);
}

Var Mlp::operator()(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = relu(layers_[i](h));
  return layers_.back()(h);
}

void Mlp::register_params(ParamSet& params, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].register_params(params, prefix + "." + std::to_string(i));
  }
}

GruCell::GruCell(int input_size, int hidden_size, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  w_input_ = parameter(uniform(input_size, 3 * hidden_size, bound, rng));
  w_hidden_ = parameter(uniform(hidden_size, 3 * hidden_size, bound, rng));
  bias_ = parameter(uniform(1, 3 * hidden_size, bound, rng));
}

Var GruCell::step(const Var& x, const Var& h) const {
  const Eigen::Index hs = w_hidden_.rows();
  if (x.cols() != w_input_.rows() || h.cols() != hs || x.rows() != h.rows()) {
    throw ContractError("GruCell::step: input or hidden dimension mismatch");
  }
  Var gx = matmul(x, w_input_) + bias_;
  Var gh = matmul(h, w_hidden_);
  Var r = sigmoid(slice_cols(gx, 0, hs) + slice_cols(gh, 0, hs));
  Var z = sigmoid(slice_cols(gx, hs, hs) + slice_cols(gh, hs, hs));
  Var n = tanh(slice_cols(gx, 2 * hs, hs) + cmul(r, slice_cols(gh, 2 * hs, hs)));
  return n - cmul(z, n) + cmul(z, h);
}

void GruCell::register_params(ParamSet& params, const std::string& prefix) const {
  params.add(prefix + ".w_input", w_input_);
  params.add(prefix + ".w_hidden", w_hidden_);
  params.add(prefix + ".bias", bias_);
}

SquashedSample tanh_gaussian(const Var& mean, const Var& log_std, const Tensor& noise) {
  if (noise.rows() != mean.rows() || noise.cols() != mean.cols() ||
      log_std.rows() != mean.rows() || log_std.cols() != mean.cols()) {
    throw ContractError("tanh_gaussian: mean, log_std and noise shapes differ");
  }
  static const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Var ls = clamp(log_std, kLogStdMin, kLogStdMax);
  Var u = mean + cmul(exp(ls), constant(noise));
  Var action = tanh(u);
  // log N(u; mean, std) = -noise^2 / 2 - log std - log(2 pi) / 2
  Tensor base = -0.5 * noise.array().square() - kHalfLog2Pi;
  Var log_normal = constant(base) - ls;
  Var correction = log(add_scalar(neg(square(action)), 1.0 + kSquashEps));
  return {action, rowwise_sum(log_normal - correction)};
}

}  // namespace metamem::nn
