// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "metamem/nn/autodiff.hpp"

namespace metamem::nn {

using GradMap = std::map<std::string, Tensor>;

// Named parameters plus the Adam moments of the optimizer that owns them.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Var param;
    Tensor m;
    Tensor v;
  };

  void add(const std::string& name, Var param);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const Entry& at(const std::string& name) const;
  Entry& at(const std::string& name);

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t t) { step_ = t; }

  // Gradients for every entry; parameters the loss never reached get zeros.
  GradMap collect(const Gradients& grads) const;

  // Copies parameter values (not optimizer state) by name.
  void copy_values_from(const ParamSet& other);

  std::size_t num_scalars() const;

  // {"step": t, "params": {name: {"shape": [r, c], "data": [...], "m": [...],
  // "v": [...]}}} with row-major data.
  nlohmann::json to_json(bool with_optimizer_state = true) const;
  void load_json(const nlohmann::json& j);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

// backward() followed by collect().
GradMap gradients(const Var& loss, const ParamSet& params);

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update. Throws ContractError when `grads` misses a
// parameter.
void adam_step(ParamSet& params, const GradMap& grads, const AdamOptions& opt);

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace metamem::nn
