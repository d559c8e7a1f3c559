// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace metamem::envs {

using Rng = std::mt19937_64;

enum class Family { kSparsePointRobot, kSemiCircleNav, kVelMatch1D };

std::string to_string(Family f);
// Accepts the CLI spellings ("point", "semicircle", "velmatch") and the
// family names.
Family family_from_string(const std::string& s);

// One MDP of a family. `params` is the 2-D goal for the navigation families
// and the 1-D target velocity for VelMatch1D.
struct Task {
  Family family = Family::kSparsePointRobot;
  Eigen::VectorXd params;
};

struct TaskSplit {
  std::vector<Task> train;
  std::vector<Task> test;
};

struct EnvConfig {
  double goal_radius = 0.2;      // SparsePointRobot success radius
  double start_radius = 0.1;     // navigation start disk around the origin
  double sparse_eps = 0.1;       // VelMatch1D bonus band
  double point_step = 0.1;       // SparsePointRobot displacement per unit action
  double momentum = 0.8;         // SemiCircleNav velocity retention
  double v_max = 0.15;           // SemiCircleNav velocity scale
  double vel_gain = 0.3;         // VelMatch1D acceleration per unit action
  double vel_dt = 0.1;           // VelMatch1D position integration step
  int horizon = 0;               // 0 selects the family default
};

int default_horizon(Family f);
int horizon(Family f, const EnvConfig& cfg);
int obs_dim(Family f);
int act_dim(Family f);

// Full observable state. Navigation: position (and velocity for
// SemiCircleNav). VelMatch1D: (position, velocity).
struct EnvState {
  Eigen::VectorXd obs;
  int t = 0;
  bool done = false;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
};

// Reward rules, evaluated on the post-step quantities and the clipped action.
template <typename Scalar>
Scalar sparse_point_reward(const Eigen::Matrix<Scalar, 2, 1>& position,
                           const Eigen::Matrix<Scalar, 2, 1>& goal, Scalar goal_radius) {
  return (position - goal).norm() <= goal_radius ? Scalar(1) : Scalar(0);
}

template <typename Scalar>
Scalar semicircle_reward(const Eigen::Matrix<Scalar, 2, 1>& position,
                         const Eigen::Matrix<Scalar, 2, 1>& goal,
                         const Eigen::Matrix<Scalar, 2, 1>& action) {
  return -(position - goal).template lpNorm<1>() - Scalar(0.1) * action.squaredNorm();
}

template <typename Scalar>
Scalar velmatch_reward(Scalar velocity, Scalar v_goal, Scalar action, Scalar sparse_eps) {
  using std::abs;
  const Scalar gap = abs(velocity - v_goal);
  const Scalar bonus = gap <= sparse_eps ? Scalar(1) : Scalar(0);
  return -gap - Scalar(0.05) * action * action + bonus;
}

Eigen::VectorXd clip_action(const Eigen::VectorXd& action);

StepResult step_sparse_point_robot(const EnvState& state, const Eigen::VectorXd& action,
                                   const Task& task, const EnvConfig& cfg);
StepResult step_semicircle_nav(const EnvState& state, const Eigen::VectorXd& action,
                               const Task& task, const EnvConfig& cfg);
StepResult step_velmatch(const EnvState& state, const Eigen::VectorXd& action,
                         const Task& task, const EnvConfig& cfg);
StepResult step(const EnvState& state, const Eigen::VectorXd& action, const Task& task,
                const EnvConfig& cfg);

EnvState reset(const Task& task, const EnvConfig& cfg, Rng& rng);
EnvState reset(const Task& task, const EnvConfig& cfg, std::uint64_t seed);

// The reward `task` would have paid for the observed transition. Dynamics do
// not depend on the task, so this is the model reward of any hypothesis.
double reward_for(const Task& task, const Eigen::VectorXd& obs, const Eigen::VectorXd& action,
                  const Eigen::VectorXd& next_obs, const EnvConfig& cfg);

// Position part of an observation for the navigation families.
Eigen::Vector2d position_of(Family f, const Eigen::VectorXd& obs);

TaskSplit sample_tasks(Family family, int n_train, int n_test, std::uint64_t seed);

// n goals at equally spaced angles pi * k / (n - 1) on the unit semicircle.
std::vector<Task> semicircle_goals(Family family, int n);

// Stateful convenience wrapper around the free step functions.
class MetaEnv {
 public:
  MetaEnv(Task task, EnvConfig cfg) : task_(std::move(task)), cfg_(cfg) {}

  const EnvState& reset(Rng& rng);
  StepResult step(const Eigen::VectorXd& action);

  const Task& task() const { return task_; }
  const EnvConfig& config() const { return cfg_; }
  const EnvState& state() const { return state_; }
  int horizon() const { return envs::horizon(task_.family, cfg_); }

 private:
  Task task_;
  EnvConfig cfg_;
  EnvState state_;
};

}  // namespace metamem::envs
