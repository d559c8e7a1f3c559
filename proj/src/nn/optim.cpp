// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/nn/optim.hpp"

#include <cmath>

namespace metamem::nn {

void ParamSet::add(const std::string& name, Var param) {
  if (index_.count(name) != 0) {
    throw ContractError("duplicate parameter name '" + name + "'");
  }
  Tensor zeros = Tensor::Zero(param.rows(), param.cols());
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, std::move(param), zeros, zeros});
}

const ParamSet::Entry& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

ParamSet::Entry& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

GradMap ParamSet::collect(const Gradients& grads) const {
  GradMap out;
  for (const auto& e : entries_) {
    auto it = grads.find(e.param.node());
    out[e.name] = it != grads.end() ? it->second
                                    : Tensor::Zero(e.param.rows(), e.param.cols());
  }
  return out;
}

void ParamSet::copy_values_from(const ParamSet& other) {
  for (auto& e : entries_) {
    e.param.mutable_value() = other.at(e.name).param.value();
  }
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.param.value().size());
  return n;
}

nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) data.push_back(t(i, j));
  }
  return {{"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  const auto rows = j.at("shape").at(0).get<Eigen::Index>();
  const auto cols = j.at("shape").at(1).get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ContractError("tensor json: data length does not match shape");
  }
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) t(i, k) = data[i * cols + k].get<double>();
  }
  return t;
}

nlohmann::json ParamSet::to_json(bool with_optimizer_state) const {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& e : entries_) {
    nlohmann::json item = tensor_to_json(e.param.value());
    if (with_optimizer_state) {
      item["m"] = tensor_to_json(e.m)["data"];
      item["v"] = tensor_to_json(e.v)["data"];
    }
    params[e.name] = std::move(item);
  }
  return {{"step", step_}, {"params", std::move(params)}};
}

void ParamSet::load_json(const nlohmann::json& j) {
  const auto& params = j.at("params");
  for (auto& e : entries_) {
    if (!params.contains(e.name)) {
      throw ContractError("checkpoint lacks parameter '" + e.name + "'");
    }
    const auto& item = params.at(e.name);
    Tensor value = tensor_from_json(item);
    if (value.rows() != e.param.rows() || value.cols() != e.param.cols()) {
      throw ContractError("checkpoint shape mismatch for '" + e.name + "'");
    }
    e.param.mutable_value() = value;
    if (item.contains("m")) {
      nlohmann::json shaped = {{"shape", item.at("shape")}, {"data", item.at("m")}};
      e.m = tensor_from_json(shaped);
      shaped["data"] = item.at("v");
      e.v = tensor_from_json(shaped);
    } else {
      e.m.setZero();
      e.v.setZero();
    }
  }
  step_ = j.value("step", std::int64_t{0});
}

GradMap gradients(const Var& loss, const ParamSet& params) {
  return params.collect(backward(loss));
}

void adam_step(ParamSet& params, const GradMap& grads, const AdamOptions& opt) {
  if (opt.lr < 0.0 || opt.beta1 < 0.0 || opt.beta1 >= 1.0 || opt.beta2 < 0.0 ||
      opt.beta2 >= 1.0) {
    throw ContractError("adam_step: hyperparameters out of range");
  }
  for (const auto& e : params.entries()) {
    if (grads.find(e.name) == grads.end()) {
      throw ContractError("adam_step: missing gradient for '" + e.name + "'");
    }
  }
  const std::int64_t t = params.step_count() + 1;
  params.set_step_count(t);
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (auto& e : params.entries()) {
    const Tensor& g = grads.at(e.name);
    e.m = opt.beta1 * e.m + (1.0 - opt.beta1) * g;
    e.v = opt.beta2 * e.v + (1.0 - opt.beta2) * g.cwiseAbs2();
    const auto m_hat = e.m.array() / c1;
    const auto v_hat = e.v.array() / c2;
    e.param.mutable_value().array() -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
  }
}

}  // namespace metamem::nn
