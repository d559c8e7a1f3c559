// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/sac.hpp"

#include <cmath>

namespace metamem::sac {

using nn::constant;

SacNets::SacNets(int obs_dim, int cond_dim, int act_dim, SacHyper hyper, Rng& rng)
    : obs_dim_(obs_dim),
      cond_dim_(cond_dim),
      act_dim_(act_dim),
      hyper_(std::move(hyper)),
      actor_(obs_dim + cond_dim, hyper_.hidden, 2 * act_dim, rng, 0.01),
      critic1_(obs_dim + act_dim + cond_dim, hyper_.hidden, 1, rng),
      critic2_(obs_dim + act_dim + cond_dim, hyper_.hidden, 1, rng),
      target1_(obs_dim + act_dim + cond_dim, hyper_.hidden, 1, rng),
      target2_(obs_dim + act_dim + cond_dim, hyper_.hidden, 1, rng) {
  if (!(hyper_.gamma > 0.0 && hyper_.gamma < 1.0) || !(hyper_.tau > 0.0 && hyper_.tau <= 1.0)) {
    throw nn::ContractError("SacHyper: need 0 < gamma < 1 and 0 < tau <= 1");
  }
  actor_.register_params(actor_params_, "actor");
  critic1_.register_params(critic_params_, "q1");
  critic2_.register_params(critic_params_, "q2");
  target1_.register_params(target_params_, "q1");
  target2_.register_params(target_params_, "q2");
  target_params_.copy_values_from(critic_params_);
  log_alpha_ = nn::parameter(Tensor::Constant(1, 1, std::log(hyper_.alpha)));
  alpha_params_.add("log_alpha", log_alpha_);
  if (hyper_.target_entropy == 0.0) hyper_.target_entropy = -static_cast<double>(act_dim);
}

double SacNets::alpha() const {
  return hyper_.auto_alpha ? std::exp(log_alpha_.value()(0, 0)) : hyper_.alpha;
}

PolicyOutput SacNets::policy(const Var& obs, const Var& cond, const Tensor& noise) const {
  Var out = actor_(nn::concat_cols({obs, cond}));
  Var mean = nn::slice_cols(out, 0, act_dim_);
  Var log_std = nn::slice_cols(out, act_dim_, act_dim_);
  auto sample = nn::tanh_gaussian(mean, log_std, noise);
  return {sample.action, sample.log_prob, mean};
}

Var SacNets::q1(const Var& obs, const Var& act, const Var& cond) const {
  return critic1_(nn::concat_cols({obs, act, cond}));
}
Var SacNets::q2(const Var& obs, const Var& act, const Var& cond) const {
  return critic2_(nn::concat_cols({obs, act, cond}));
}
Var SacNets::q1_target(const Var& obs, const Var& act, const Var& cond) const {
  return target1_(nn::concat_cols({obs, act, cond}));
}
Var SacNets::q2_target(const Var& obs, const Var& act, const Var& cond) const {
  return target2_(nn::concat_cols({obs, act, cond}));
}

Tensor SacNets::critic_target(const Tensor& r, const Tensor& s2, const Tensor& cond2,
                              const Tensor& done, Rng& rng) const {
  return critic_target(r, s2, cond2, done, nn::randn(s2.rows(), act_dim_, rng));
}

Tensor SacNets::critic_target(const Tensor& r, const Tensor& s2, const Tensor& cond2,
                              const Tensor& done, const Tensor& noise) const {
  nn::NoGradGuard guard;
  Var obs = constant(s2);
  Var cond = constant(cond2);
  auto next = policy(obs, cond, noise);
  Tensor q = q1_target(obs, next.action, cond)
                 .value()
                 .cwiseMin(q2_target(obs, next.action, cond).value());
  Tensor soft = q - alpha() * next.log_prob.value();
  return r.array() + hyper_.gamma * (1.0 - done.array()) * soft.array();
}

Var SacNets::critic_loss(const Tensor& s, const Tensor& a, const Var& cond,
                         const Tensor& target) const {
  Var obs = constant(s);
  Var act = constant(a);
  Var y = constant(target);
  return nn::mean(nn::square(q1(obs, act, cond) - y)) +
         nn::mean(nn::square(q2(obs, act, cond) - y));
}

Var SacNets::actor_loss(const Tensor& s, const Tensor& cond, const Tensor& noise,
                        double* entropy) const {
  Var obs = constant(s);
  Var c = constant(cond);
  auto pi = policy(obs, c, noise);
  Var q = nn::cmin(q1(obs, pi.action, c), q2(obs, pi.action, c));
  if (entropy != nullptr) *entropy = -pi.log_prob.value().mean();
  return nn::mean(alpha() * pi.log_prob - q);
}

void SacNets::apply_critic_grads(const nn::GradMap& grads) {
  nn::adam_step(critic_params_, grads, {hyper_.lr});
}

void SacNets::apply_actor_grads(const nn::GradMap& grads) {
  nn::adam_step(actor_params_, grads, {hyper_.lr});
}

double SacNets::update_critics(const Tensor& s, const Tensor& a, const Tensor& cond,
                               const Tensor& target) {
  Var loss = critic_loss(s, a, constant(cond), target);
  apply_critic_grads(nn::gradients(loss, critic_params_));
  return loss.scalar();
}

ActorStats SacNets::update_actor(const Tensor& s, const Tensor& cond, Rng& rng) {
  ActorStats stats;
  Var loss = actor_loss(s, cond, nn::randn(s.rows(), act_dim_, rng), &stats.entropy);
  // Critic parameters are reachable from the actor loss but only the actor
  // set is stepped.
  apply_actor_grads(nn::gradients(loss, actor_params_));
  stats.loss = loss.scalar();
  if (hyper_.auto_alpha) update_alpha(-stats.entropy);
  return stats;
}

void SacNets::update_alpha(double mean_log_prob) {
  // d/d log_alpha of -log_alpha (log pi + target_entropy)
  const double g = -(mean_log_prob + hyper_.target_entropy);
  nn::adam_step(alpha_params_, {{"log_alpha", Tensor::Constant(1, 1, g)}}, {hyper_.lr});
}

void SacNets::soft_update_targets(double tau) {
  for (auto& e : target_params_.entries()) {
    const Tensor& online = critic_params_.at(e.name).param.value();
    e.param.mutable_value() = tau * online + (1.0 - tau) * e.param.value();
  }
}

Eigen::VectorXd SacNets::act(const Eigen::VectorXd& obs, const Eigen::VectorXd& cond,
                             bool deterministic, Rng& rng) const {
  nn::NoGradGuard guard;
  Tensor noise = deterministic ? Tensor::Zero(1, act_dim_) : nn::randn(1, act_dim_, rng);
  auto out = policy(constant(obs.transpose()), constant(cond.transpose()), noise);
  return out.action.value().row(0).transpose();
}

nlohmann::json SacNets::to_json() const {
  return {{"actor", actor_params_.to_json()},
          {"critic", critic_params_.to_json()},
          {"target", target_params_.to_json(false)},
          {"alpha", alpha_params_.to_json()}};
}

void SacNets::load_json(const nlohmann::json& j) {
  actor_params_.load_json(j.at("actor"));
  critic_params_.load_json(j.at("critic"));
  target_params_.load_json(j.at("target"));
  alpha_params_.load_json(j.at("alpha"));
}

}  // namespace metamem::sac
