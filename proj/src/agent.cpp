// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace metamem {

using replay::MemoryStrategy;

AgentMemory::AgentMemory(MemoryStrategy strategy, std::size_t capacity, bool clear_encoder_only,
                         bool stratified)
    : strategy_(strategy),
      policy_({clear_encoder_only ? MemoryStrategy::kLong : strategy, capacity, stratified}),
      encoder_({strategy, capacity, stratified}) {}

void AgentMemory::begin_iteration() {
  policy_.begin_iteration();
  encoder_.begin_iteration();
}

void AgentMemory::insert(int task_id, const replay::Trajectory& trajectory) {
  policy_.insert(task_id, trajectory);
  encoder_.insert(task_id, trajectory);
}

nlohmann::json AgentMemory::to_json() const {
  return {{"policy", policy_.to_json()}, {"encoder", encoder_.to_json()}};
}

void AgentMemory::load_json(const nlohmann::json& j) {
  policy_.load_json(j.at("policy"));
  encoder_.load_json(j.at("encoder"));
}

std::vector<int> pick_task_ids(int n_tasks, int n, Rng& rng) {
  std::vector<int> ids(static_cast<std::size_t>(n_tasks));
  std::iota(ids.begin(), ids.end(), 0);
  if (n <= n_tasks) {
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(static_cast<std::size_t>(std::max(n, 0)));
    return ids;
  }
  std::uniform_int_distribution<int> pick(0, n_tasks - 1);
  std::vector<int> out;
  for (int i = 0; i < n; ++i) out.push_back(pick(rng));
  return out;
}

std::string to_string(CriticReward r) {
  switch (r) {
    case CriticReward::kEnv: return "env";
    case CriticReward::kGoalDistance: return "goal_distance";
    case CriticReward::kArcDistance: return "arc_distance";
  }
  return "env";
}

CriticReward critic_reward_from_string(const std::string& s) {
  if (s == "env") return CriticReward::kEnv;
  if (s == "goal_distance") return CriticReward::kGoalDistance;
  if (s == "arc_distance") return CriticReward::kArcDistance;
  throw std::invalid_argument("unknown critic reward '" + s + "'");
}

namespace {

// Distance from `p` to the upper semicircle of radius `radius`.
double arc_distance(const Eigen::Vector2d& p, double radius) {
  if (p.y() >= 0.0) return std::abs(p.norm() - radius);
  return std::min((p - Eigen::Vector2d(radius, 0.0)).norm(),
                  (p - Eigen::Vector2d(-radius, 0.0)).norm());
}

}  // namespace

void shape_critic_rewards(replay::RLBatch& batch, const std::vector<envs::Task>& tasks,
                          const TrainSchedule& schedule) {
  if (schedule.critic_reward == CriticReward::kEnv) return;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto& task = tasks.at(static_cast<std::size_t>(batch.task_ids[static_cast<std::size_t>(i)]));
    if (task.family != envs::Family::kSparsePointRobot) continue;
    const Eigen::Vector2d pos = envs::position_of(task.family, batch.s2.row(i).transpose());
    const Eigen::Vector2d goal = task.params.head<2>();
    if (schedule.critic_reward == CriticReward::kGoalDistance) {
      batch.r(i, 0) = -(pos - goal).norm();
    } else {
      batch.r(i, 0) -= arc_distance(pos, goal.norm());
    }
  }
}

}  // namespace metamem
