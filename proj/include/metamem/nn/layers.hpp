// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "metamem/nn/autodiff.hpp"
#include "metamem/nn/optim.hpp"

namespace metamem::nn {

using Rng = std::mt19937_64;

Tensor randn(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Tensor uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

// y = x W + b with x stacked as rows. Weights start uniform in +-1/sqrt(fan_in),
// multiplied by `init_scale`.
class Linear {
 public:
  Linear(int in, int out, Rng& rng, double init_scale = 1.0);

  Var operator()(const Var& x) const;
  void register_params(ParamSet& params, const std::string& prefix) const;

  int in_features() const { return static_cast<int>(weight_.rows()); }
  int out_features() const { return static_cast<int>(weight_.cols()); }

 private:
  Var weight_;
  Var bias_;
};

// Hidden layers use ReLU; the output layer is affine.
class Mlp {
 public:
  Mlp(int in, const std::vector<int>& hidden, int out, Rng& rng,
      double last_layer_scale = 1.0);

  Var operator()(const Var& x) const;
  void register_params(ParamSet& params, const std::string& prefix) const;

  int in_features() const { return layers_.front().in_features(); }
  int out_features() const { return layers_.back().out_features(); }

 private:
  std::vector<Linear> layers_;
};

// Single-layer gated recurrent unit:
//   r  = sigmoid(x Wr + h Ur + br)
//   z  = sigmoid(x Wz + h Uz + bz)
//   n  = tanh(x Wn + r * (h Un) + bn)
//   h' = (1 - z) * n + z * h
// The three gates live side by side in the input, hidden and bias blocks as
// [r | z | n] column groups.
class GruCell {
 public:
  GruCell(int input_size, int hidden_size, Rng& rng);

  Var step(const Var& x, const Var& h) const;
  void register_params(ParamSet& params, const std::string& prefix) const;

  int input_size() const { return static_cast<int>(w_input_.rows()); }
  int hidden_size() const { return static_cast<int>(w_hidden_.rows()); }

  Var& w_input() { return w_input_; }
  Var& w_hidden() { return w_hidden_; }
  Var& bias() { return bias_; }

 private:
  Var w_input_;
  Var w_hidden_;
  Var bias_;
};

struct SquashedSample {
  Var action;    // n x d, in (-1, 1)
  Var log_prob;  // n x 1
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEps = 1e-6;

// Reparameterized tanh-squashed diagonal Gaussian. `noise` is a standard
// normal draw with the shape of `mean`; zero noise gives tanh(mean).
SquashedSample tanh_gaussian(const Var& mean, const Var& log_std, const Tensor& noise);

}  // namespace metamem::nn
