// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference oracle. Lives in test code only and never touches
// the backward pass it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "metamem/nn/autodiff.hpp"

namespace metamem::testing {

struct GradCheck {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool ok = true;
  std::string worst;
};

inline nn::Tensor numeric_gradient(nn::Var& param, const std::function<double()>& loss,
                                   double h = 1e-5) {
  nn::Tensor& value = param.mutable_value();
  nn::Tensor g(value.rows(), value.cols());
  for (Eigen::Index i = 0; i < value.rows(); ++i) {
    for (Eigen::Index j = 0; j < value.cols(); ++j) {
      const double saved = value(i, j);
      value(i, j) = saved + h;
      const double up = loss();
      value(i, j) = saved - h;
      const double down = loss();
      value(i, j) = saved;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// Relative error below `rel_tol`, or absolute error below `abs_tol` where the
// analytic gradient itself is below `abs_tol`.
inline GradCheck compare_gradients(const nn::Tensor& analytic, const nn::Tensor& numeric,
                                   double rel_tol = 1e-4, double abs_tol = 1e-6) {
  GradCheck out;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double a = analytic(i, j);
      const double n = numeric(i, j);
      const double abs_err = std::abs(a - n);
      const double denom = std::max(std::abs(a), std::abs(n));
      const double rel = denom > 0.0 ? abs_err / denom : 0.0;
      out.max_abs_err = std::max(out.max_abs_err, abs_err);
      bool entry_ok = rel < rel_tol || (std::abs(a) < abs_tol && abs_err < abs_tol);
      if (!entry_ok) {
        out.ok = false;
        if (rel > out.max_rel_err) {
          out.worst = "(" + std::to_string(i) + "," + std::to_string(j) + ") analytic " +
                      std::to_string(a) + " numeric " + std::to_string(n);
        }
      }
      if (entry_ok && denom >= abs_tol) out.max_rel_err = std::max(out.max_rel_err, rel);
      if (!entry_ok) out.max_rel_err = std::max(out.max_rel_err, rel);
    }
  }
  return out;
}

// Checks d loss / d param where `build` constructs the loss graph from the
// current parameter values.
inline GradCheck check_param_gradient(nn::Var& param, const std::function<nn::Var()>& build,
                                      double h = 1e-5) {
  nn::Var loss = build();
  auto grads = nn::backward(loss);
  auto it = grads.find(param.node());
  nn::Tensor analytic = it != grads.end()
                            ? it->second
                            : nn::Tensor::Zero(param.rows(), param.cols());
  nn::Tensor numeric = numeric_gradient(param, [&] { return build().scalar(); }, h);
  return compare_gradients(analytic, numeric);
}

}  // namespace metamem::testing
