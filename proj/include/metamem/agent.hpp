// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "metamem/envs.hpp"
#include "metamem/replay.hpp"

namespace metamem {

using Rng = std::mt19937_64;

// Policy and encoder replay pair. ShortMemory clears both at iteration start
// unless `clear_encoder_only` is set, in which case the policy side keeps
// everything.
class AgentMemory {
 public:
  AgentMemory(replay::MemoryStrategy strategy, std::size_t capacity,
              bool clear_encoder_only = false, bool stratified = false);

  void begin_iteration();
  void insert(int task_id, const replay::Trajectory& trajectory);

  replay::ReplayBuffer& policy() { return policy_; }
  replay::ReplayBuffer& encoder() { return encoder_; }
  const replay::ReplayBuffer& policy() const { return policy_; }
  const replay::ReplayBuffer& encoder() const { return encoder_; }
  replay::MemoryStrategy strategy() const { return strategy_; }

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  replay::MemoryStrategy strategy_;
  replay::ReplayBuffer policy_;
  replay::ReplayBuffer encoder_;
};

// Reward seen by the SAC critic on SparsePointRobot. Contexts, beliefs and
// every reported return keep the environment's sparse reward.
enum class CriticReward {
  kEnv,
  kGoalDistance,  // -||position' - goal|| of the training task
  kArcDistance,   // sparse reward minus the distance to the goal semicircle
};

std::string to_string(CriticReward r);
CriticReward critic_reward_from_string(const std::string& s);

struct TrainSchedule {
  int tasks_per_iter = 4;
  int episodes_per_task = 2;
  int grad_steps = 200;
  CriticReward critic_reward = CriticReward::kEnv;
};

// Rewrites batch rewards for the critic per `schedule.critic_reward`; other
// families are left untouched.
void shape_critic_rewards(replay::RLBatch& batch, const std::vector<envs::Task>& tasks,
                          const TrainSchedule& schedule);

struct IterationMetrics {
  int iteration = 0;
  long env_steps = 0;
  double train_return = 0.0;  // mean undiscounted return per collected episode
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double entropy = 0.0;
  double encoder_loss = 0.0;  // PEARL: KL term; VariBAD: negative ELBO
  std::size_t buffer_at_start = 0;
  std::size_t buffer_after_collect = 0;
  double eval_return = std::numeric_limits<double>::quiet_NaN();
};

struct AdaptResult {
  std::vector<double> returns;                // one per episode
  std::vector<Eigen::VectorXd> embeddings;    // latent mean (+) variance at each episode end
  std::vector<replay::Trajectory> trajectories;
};

// `n` training-task indices for one collection round: distinct when
// n <= n_tasks, otherwise drawn with replacement.
std::vector<int> pick_task_ids(int n_tasks, int n, Rng& rng);

class MetaAgent {
 public:
  virtual ~MetaAgent() = default;

  virtual std::string name() const = 0;
  virtual int latent_dim() const = 0;

  // Collect on training tasks, then update. The caller has already applied
  // begin_iteration to `memory`.
  virtual IterationMetrics train_iteration(AgentMemory& memory,
                                           const std::vector<envs::Task>& tasks,
                                           const envs::EnvConfig& env_cfg, Rng& rng) = 0;

  virtual AdaptResult adapt(const envs::Task& task, const envs::EnvConfig& env_cfg,
                            int n_episodes, Rng& rng) const = 0;

  virtual nlohmann::json checkpoint() const = 0;
  virtual void restore(const nlohmann::json& j) = 0;
};

}  // namespace metamem
