// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "metamem/agent.hpp"
#include "metamem/nn/layers.hpp"
#include "metamem/sac.hpp"

namespace metamem::varibad {

using nn::Tensor;
using nn::Var;

struct BeliefState {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  Eigen::VectorXd hidden;

  Eigen::VectorXd stacked() const;  // mean then variance
};

// Reconstruction terms are negative log-likelihoods under unit-variance
// Gaussians, so every term and the total are minimized by training.
struct ElboComponents {
  double reward = 0.0;
  double transition = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct VaribadHyper {
  int latent_dim = 5;
  double kl_weight = 0.05;
  int embed_dim = 32;
  int gru_hidden = 64;
  std::vector<int> decoder_hidden{64, 64};
  double vae_lr = 1e-3;
  int vae_batch = 8;
  int vae_updates = 20;
  int anchors = 4;
  int z_samples = 1;
  // After the encoder updates of each iteration, recompute the stored beliefs
  // of every replayed trajectory with the current encoder instead of keeping
  // the ones logged at collection time.
  bool reencode_beliefs = false;
  // Value targets run through episode boundaries and stop only at the end of
  // the meta-episode. The stored successor of an episode's last step is then
  // the next episode's reset observation.
  bool bamdp_bootstrap = false;
  bool deterministic_eval = true;
};

class VaribadAgent : public MetaAgent {
 public:
  VaribadAgent(int obs_dim, int act_dim, VaribadHyper hyper, sac::SacHyper sac_hyper,
               TrainSchedule schedule, Rng& rng);

  std::string name() const override { return "varibad"; }
  int latent_dim() const override { return hyper_.latent_dim; }

  BeliefState prior_belief() const;
  BeliefState step_belief(const BeliefState& belief, const replay::Transition& tr) const;

  // Beliefs after each prefix of `context` rows (s, a, r, s'); rows + 1
  // entries, the first being the prior.
  std::vector<BeliefState> encode_history(const Tensor& context) const;

  struct BeliefGraph {
    Var mean;  // B x K
    Var var;   // B x K
  };
  // Batched recurrence over equally long contexts, one per row of the batch.
  std::vector<BeliefGraph> encode_graph(const std::vector<Tensor>& contexts) const;

  struct ElboGraph {
    Var reward, transition, kl, total;
  };
  // Averages over trajectories, anchors and latent samples. `noise` holds one
  // (B * samples) x K standard normal block per anchor, sample-major within
  // each block; the sample count is read off its height.
  ElboGraph elbo_graph(const std::vector<const replay::Trajectory*>& batch,
                       const std::vector<int>& anchors, const std::vector<Tensor>& noise) const;

  ElboComponents elbo(const replay::Trajectory& traj, int t, int z_samples, Rng& rng) const;

  double predict_reward(const Eigen::VectorXd& z, const Eigen::VectorXd& s,
                        const Eigen::VectorXd& a) const;
  Eigen::VectorXd predict_transition(const Eigen::VectorXd& z, const Eigen::VectorXd& s,
                                     const Eigen::VectorXd& a) const;
  Var reward_graph(const Var& s, const Var& a, const Var& z) const;
  Var transition_graph(const Var& s, const Var& a, const Var& z) const;

  // Critic loss on a replayed batch with beliefs as constant inputs.
  Var rl_critic_loss(const replay::RLBatch& batch, const Tensor& policy_noise) const;

  double vae_update(const std::vector<const replay::Trajectory*>& batch, Rng& rng);

  IterationMetrics train_iteration(AgentMemory& memory, const std::vector<envs::Task>& tasks,
                                   const envs::EnvConfig& env_cfg, Rng& rng) override;

  AdaptResult adapt(const envs::Task& task, const envs::EnvConfig& env_cfg, int n_episodes,
                    Rng& rng) const override;

  nlohmann::json checkpoint() const override;
  void restore(const nlohmann::json& j) override;

  sac::SacNets& sac() { return sac_; }
  const sac::SacNets& sac() const { return sac_; }
  nn::ParamSet& vae_params() { return vae_params_; }
  VaribadHyper& hyper() { return hyper_; }
  TrainSchedule& schedule() { return schedule_; }

  // Public for tests that hand-set decoder outputs.
  nn::ParamSet& reward_decoder_params() { return reward_params_; }
  nn::ParamSet& transition_decoder_params() { return transition_params_; }

 private:
  Var belief_head(const Var& h, Var* var_out) const;
  // Runs one meta-episode of `n_episodes` with a persistent belief.
  replay::Trajectory rollout(const envs::Task& task, const envs::EnvConfig& env_cfg,
                             int n_episodes, bool deterministic, std::vector<double>* returns,
                             std::vector<Eigen::VectorXd>* episode_end_beliefs,
                             std::vector<replay::Trajectory>* episodes, Rng& rng) const;
  void reencode_beliefs(replay::ReplayBuffer& buffer) const;

  int obs_dim_;
  int act_dim_;
  VaribadHyper hyper_;
  TrainSchedule schedule_;
  nn::Linear embed_;
  nn::GruCell gru_;
  nn::Linear head_;
  nn::Mlp reward_decoder_;
  nn::Mlp transition_decoder_;
  nn::ParamSet vae_params_;
  nn::ParamSet reward_params_;
  nn::ParamSet transition_params_;
  sac::SacNets sac_;
};

}  // namespace metamem::varibad
