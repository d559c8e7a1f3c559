// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "json.hpp"
#include "metamem/nn/layers.hpp"
#include "metamem/nn/optim.hpp"

namespace metamem::sac {

using nn::Rng;
using nn::Tensor;
using nn::Var;

struct SacHyper {
  double gamma = 0.99;
  double tau = 0.005;
  double lr = 3e-4;
  double alpha = 0.2;
  int batch_size = 256;
  std::vector<int> hidden{128, 128};
  bool auto_alpha = false;
  double target_entropy = 0.0;  // 0 selects -act_dim
};

struct PolicyOutput {
  Var action;
  Var log_prob;
  Var mean;
};

struct ActorStats {
  double loss = 0.0;
  double entropy = 0.0;  // -mean log pi
};

// Twin-critic soft actor-critic where actor and critics also read a
// conditioning vector (the task latent or belief).
//   actor:  [s, c]    -> (mean, log_std)
//   critic: [s, a, c] -> Q
class SacNets {
 public:
  SacNets(int obs_dim, int cond_dim, int act_dim, SacHyper hyper, Rng& rng);

  PolicyOutput policy(const Var& obs, const Var& cond, const Tensor& noise) const;
  Var q1(const Var& obs, const Var& act, const Var& cond) const;
  Var q2(const Var& obs, const Var& act, const Var& cond) const;
  Var q1_target(const Var& obs, const Var& act, const Var& cond) const;
  Var q2_target(const Var& obs, const Var& act, const Var& cond) const;

  // y = r + gamma (1 - done) (min target Q(s', a', c') - alpha log pi(a'|s', c'))
  // with a' freshly sampled. No gradient flows through the result.
  Tensor critic_target(const Tensor& r, const Tensor& s2, const Tensor& cond2,
                       const Tensor& done, Rng& rng) const;
  // Same, with the policy noise supplied by the caller.
  Tensor critic_target(const Tensor& r, const Tensor& s2, const Tensor& cond2,
                       const Tensor& done, const Tensor& noise) const;

  // Sum of both critics' mean squared errors. `cond` may carry a gradient
  // path into an encoder.
  Var critic_loss(const Tensor& s, const Tensor& a, const Var& cond, const Tensor& target) const;
  Var actor_loss(const Tensor& s, const Tensor& cond, const Tensor& noise,
                 double* entropy = nullptr) const;

  double update_critics(const Tensor& s, const Tensor& a, const Tensor& cond,
                        const Tensor& target);
  ActorStats update_actor(const Tensor& s, const Tensor& cond, Rng& rng);
  // Adam step on the critics with already-computed gradients.
  void apply_critic_grads(const nn::GradMap& grads);
  void apply_actor_grads(const nn::GradMap& grads);
  void update_alpha(double mean_log_prob);

  void soft_update_targets(double tau);

  // Single-row action without graph construction.
  Eigen::VectorXd act(const Eigen::VectorXd& obs, const Eigen::VectorXd& cond,
                      bool deterministic, Rng& rng) const;

  double alpha() const;
  const SacHyper& hyper() const { return hyper_; }
  SacHyper& hyper() { return hyper_; }
  int obs_dim() const { return obs_dim_; }
  int cond_dim() const { return cond_dim_; }
  int act_dim() const { return act_dim_; }

  nn::ParamSet& actor_params() { return actor_params_; }
  nn::ParamSet& critic_params() { return critic_params_; }
  const nn::ParamSet& actor_params() const { return actor_params_; }
  const nn::ParamSet& critic_params() const { return critic_params_; }
  const nn::ParamSet& target_params() const { return target_params_; }
  nn::ParamSet& target_params() { return target_params_; }

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  int obs_dim_;
  int cond_dim_;
  int act_dim_;
  SacHyper hyper_;
  nn::Mlp actor_;
  nn::Mlp critic1_;
  nn::Mlp critic2_;
  nn::Mlp target1_;
  nn::Mlp target2_;
  Var log_alpha_;
  nn::ParamSet actor_params_;
  nn::ParamSet critic_params_;
  nn::ParamSet target_params_;
  nn::ParamSet alpha_params_;
};

}  // namespace metamem::sac
