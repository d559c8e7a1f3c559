// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "metamem/agent.hpp"
#include "metamem/nn/layers.hpp"
#include "metamem/sac.hpp"

namespace metamem::pearl {

using nn::Tensor;
using nn::Var;

// Diagonal Gaussian over the task latent.
struct TaskPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;

  static TaskPosterior prior(int k) {
    return {Eigen::VectorXd::Zero(k), Eigen::VectorXd::Ones(k)};
  }
  // mean followed by variance
  Eigen::VectorXd stacked() const;
};

// Normalized product of the unit prior and one Gaussian factor per row:
// precision = 1 + sum 1/var_i, mean = (sum mean_i/var_i) / precision.
template <typename DerivedM, typename DerivedV>
TaskPosterior product_of_gaussians(const Eigen::MatrixBase<DerivedM>& means,
                                   const Eigen::MatrixBase<DerivedV>& vars) {
  using Scalar = typename DerivedM::Scalar;
  const auto k = means.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> precision =
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(k);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weighted =
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(k);
  if (means.rows() > 0) {
    precision += vars.cwiseInverse().colwise().sum().transpose();
    weighted = means.cwiseQuotient(vars).colwise().sum().transpose();
  }
  return {weighted.cwiseQuotient(precision), precision.cwiseInverse()};
}

// KL(N(mean, var) || N(0, I)).
template <typename Scalar = double>
Scalar kl_to_prior(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& mean,
                   const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& var) {
  return Scalar(0.5) *
         (var.array() + mean.array().square() - Scalar(1) - var.array().log()).sum();
}
inline double kl_to_prior(const TaskPosterior& p) { return kl_to_prior<double>(p.mean, p.var); }

struct PearlHyper {
  int latent_dim = 5;
  double kl_weight = 0.1;
  int context_len = 100;
  int meta_batch = 4;
  std::vector<int> encoder_hidden{64, 64};
  // Re-encode and resample the latent after every adaptation step instead of
  // once per episode.
  bool per_step_posterior = false;
  bool deterministic_eval = true;
};

class PearlAgent : public MetaAgent {
 public:
  PearlAgent(int obs_dim, int act_dim, PearlHyper hyper, sac::SacHyper sac_hyper,
             TrainSchedule schedule, Rng& rng);

  std::string name() const override { return "pearl"; }
  int latent_dim() const override { return hyper_.latent_dim; }

  // Posterior for a context of (s, a, r, s') rows; empty gives the prior.
  TaskPosterior encode_context(const Tensor& context) const;

  struct PosteriorGraph {
    Var mean;  // 1 x K
    Var var;   // 1 x K
  };
  PosteriorGraph encode_graph(const Tensor& context) const;
  static Var kl_graph(const PosteriorGraph& p);

  // Training objective for the critics and encoder on a single task group:
  // critic MSE with latents sampled from the encoded posterior, plus the
  // weighted KL.
  struct TaskSample {
    Tensor context;
    replay::RLBatch batch;
  };
  Var encoder_objective(const std::vector<TaskSample>& tasks,
                        const std::vector<Tensor>& latent_noise,
                        const Tensor& policy_noise, double* kl_out = nullptr) const;

  IterationMetrics train_iteration(AgentMemory& memory, const std::vector<envs::Task>& tasks,
                                   const envs::EnvConfig& env_cfg, Rng& rng) override;

  AdaptResult adapt(const envs::Task& task, const envs::EnvConfig& env_cfg, int n_episodes,
                    Rng& rng) const override;

  nlohmann::json checkpoint() const override;
  void restore(const nlohmann::json& j) override;

  sac::SacNets& sac() { return sac_; }
  const sac::SacNets& sac() const { return sac_; }
  nn::ParamSet& encoder_params() { return encoder_params_; }
  const PearlHyper& hyper() const { return hyper_; }
  TrainSchedule& schedule() { return schedule_; }

 private:
  Eigen::VectorXd sample_latent(const TaskPosterior& p, Rng& rng) const;
  replay::Trajectory rollout(const envs::Task& task, const envs::EnvConfig& env_cfg,
                             const TaskPosterior& posterior, bool deterministic,
                             std::vector<replay::Transition>* live_context, Rng& rng) const;

  int obs_dim_;
  int act_dim_;
  PearlHyper hyper_;
  TrainSchedule schedule_;
  nn::Mlp encoder_;
  nn::ParamSet encoder_params_;
  sac::SacNets sac_;
};

}  // namespace metamem::pearl
