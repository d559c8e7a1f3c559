// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/envs.hpp"

#include <algorithm>
#include <numbers>
#include <set>
#include <stdexcept>

namespace metamem::envs {

std::string to_string(Family f) {
  switch (f) {
    case Family::kSparsePointRobot: return "point";
    case Family::kSemiCircleNav: return "semicircle";
    case Family::kVelMatch1D: return "velmatch";
  }
  return "unknown";
}

Family family_from_string(const std::string& s) {
  if (s == "point" || s == "SparsePointRobot") return Family::kSparsePointRobot;
  if (s == "semicircle" || s == "SemiCircleNav") return Family::kSemiCircleNav;
  if (s == "velmatch" || s == "VelMatch1D") return Family::kVelMatch1D;
  throw std::invalid_argument("unknown environment family '" + s + "'");
}

int default_horizon(Family f) {
  switch (f) {
    case Family::kSparsePointRobot: return 60;
    case Family::kSemiCircleNav: return 100;
    case Family::kVelMatch1D: return 60;
  }
  return 60;
}

int horizon(Family f, const EnvConfig& cfg) {
  return cfg.horizon > 0 ? cfg.horizon : default_horizon(f);
}

int obs_dim(Family f) {
  switch (f) {
    case Family::kSparsePointRobot: return 2;
    case Family::kSemiCircleNav: return 4;
    case Family::kVelMatch1D: return 2;
  }
  return 0;
}

int act_dim(Family f) { return f == Family::kVelMatch1D ? 1 : 2; }

Eigen::VectorXd clip_action(const Eigen::VectorXd& action) {
  return action.cwiseMax(-1.0).cwiseMin(1.0);
}

namespace {

void check_action(const Eigen::VectorXd& action, Family f) {
  if (action.size() != act_dim(f)) {
    throw std::invalid_argument("action has " + std::to_string(action.size()) +
                                " components, expected " + std::to_string(act_dim(f)));
  }
}

EnvState advance(const EnvState& state, Eigen::VectorXd obs, const Task& task,
                 const EnvConfig& cfg) {
  EnvState next;
  next.obs = std::move(obs);
  next.t = state.t + 1;
  next.done = next.t >= horizon(task.family, cfg);
  return next;
}

}  // namespace

StepResult step_sparse_point_robot(const EnvState& state, const Eigen::VectorXd& action,
                                   const Task& task, const EnvConfig& cfg) {
  check_action(action, task.family);
  const Eigen::Vector2d a = clip_action(action);
  const Eigen::Vector2d pos = state.obs.head<2>() + cfg.point_step * a;
  const Eigen::Vector2d goal = task.params.head<2>();
  StepResult out;
  out.next = advance(state, pos, task, cfg);
  out.reward = sparse_point_reward<double>(pos, goal, cfg.goal_radius);
  out.done = out.next.done;
  return out;
}

StepResult step_semicircle_nav(const EnvState& state, const Eigen::VectorXd& action,
                               const Task& task, const EnvConfig& cfg) {
  check_action(action, task.family);
  const Eigen::Vector2d a = clip_action(action);
  const Eigen::Vector2d vel =
      cfg.momentum * state.obs.segment<2>(2) + (1.0 - cfg.momentum) * cfg.v_max * a;
  const Eigen::Vector2d pos = state.obs.head<2>() + vel;
  Eigen::VectorXd obs(4);
  obs << pos, vel;
  StepResult out;
  out.next = advance(state, obs, task, cfg);
  out.reward = semicircle_reward<double>(pos, task.params.head<2>(), a);
  out.done = out.next.done;
  return out;
}

StepResult step_velmatch(const EnvState& state, const Eigen::VectorXd& action,
                         const Task& task, const EnvConfig& cfg) {
  check_action(action, task.family);
  const double a = std::clamp(action(0), -1.0, 1.0);
  const double v = std::clamp(state.obs(1) + cfg.vel_gain * a, -1.0, 4.0);
  Eigen::VectorXd obs(2);
  obs << state.obs(0) + cfg.vel_dt * v, v;
  StepResult out;
  out.next = advance(state, obs, task, cfg);
  out.reward = velmatch_reward<double>(v, task.params(0), a, cfg.sparse_eps);
  out.done = out.next.done;
  return out;
}

StepResult step(const EnvState& state, const Eigen::VectorXd& action, const Task& task,
                const EnvConfig& cfg) {
  switch (task.family) {
    case Family::kSparsePointRobot: return step_sparse_point_robot(state, action, task, cfg);
    case Family::kSemiCircleNav: return step_semicircle_nav(state, action, task, cfg);
    case Family::kVelMatch1D: return step_velmatch(state, action, task, cfg);
  }
  throw std::logic_error("unreachable family");
}

EnvState reset(const Task& task, const EnvConfig& cfg, Rng& rng) {
  EnvState s;
  s.obs = Eigen::VectorXd::Zero(obs_dim(task.family));
  if (task.family != Family::kVelMatch1D) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    // Uniform on the disk: radius ~ R sqrt(U).
    const double r = cfg.start_radius * std::sqrt(u01(rng));
    const double phi = 2.0 * std::numbers::pi * u01(rng);
    s.obs(0) = r * std::cos(phi);
    s.obs(1) = r * std::sin(phi);
  }
  return s;
}

EnvState reset(const Task& task, const EnvConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return reset(task, cfg, rng);
}

double reward_for(const Task& task, const Eigen::VectorXd& obs, const Eigen::VectorXd& action,
                  const Eigen::VectorXd& next_obs, const EnvConfig& cfg) {
  switch (task.family) {
    case Family::kSparsePointRobot:
      return sparse_point_reward<double>(next_obs.head<2>(), task.params.head<2>(),
                                         cfg.goal_radius);
    case Family::kSemiCircleNav:
      return semicircle_reward<double>(next_obs.head<2>(), task.params.head<2>(),
                                       clip_action(action).head<2>());
    case Family::kVelMatch1D:
      (void)obs;
      return velmatch_reward<double>(next_obs(1), task.params(0),
                                     std::clamp(action(0), -1.0, 1.0), cfg.sparse_eps);
  }
  throw std::logic_error("unreachable family");
}

Eigen::Vector2d position_of(Family f, const Eigen::VectorXd& obs) {
  if (f == Family::kVelMatch1D) {
    throw std::invalid_argument("VelMatch1D has no planar position");
  }
  return obs.head<2>();
}

namespace {

Task make_task(Family family, Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> vel(0.0, 3.0);
  Task t;
  t.family = family;
  if (family == Family::kVelMatch1D) {
    t.params = Eigen::VectorXd::Constant(1, vel(rng));
  } else {
    const double theta = angle(rng);
    t.params = Eigen::Vector2d(std::cos(theta), std::sin(theta));
  }
  return t;
}

}  // namespace

TaskSplit sample_tasks(Family family, int n_train, int n_test, std::uint64_t seed) {
  if (n_train <= 0 || n_test <= 0) {
    throw std::invalid_argument("sample_tasks: split sizes must be positive");
  }
  Rng rng(seed);
  TaskSplit split;
  std::set<std::vector<double>> seen;
  auto draw = [&] {
    while (true) {
      Task t = make_task(family, rng);
      std::vector<double> key(t.params.data(), t.params.data() + t.params.size());
      if (seen.insert(key).second) return t;
    }
  };
  for (int i = 0; i < n_train; ++i) split.train.push_back(draw());
  for (int i = 0; i < n_test; ++i) split.test.push_back(draw());
  return split;
}

std::vector<Task> semicircle_goals(Family family, int n) {
  if (family == Family::kVelMatch1D) {
    throw std::invalid_argument("semicircle_goals: navigation families only");
  }
  std::vector<Task> out;
  for (int k = 0; k < n; ++k) {
    const double theta = n == 1 ? std::numbers::pi / 2
                                : std::numbers::pi * static_cast<double>(k) / (n - 1);
    out.push_back(Task{family, Eigen::Vector2d(std::cos(theta), std::sin(theta))});
  }
  return out;
}

const EnvState& MetaEnv::reset(Rng& rng) {
  state_ = envs::reset(task_, cfg_, rng);
  return state_;
}

StepResult MetaEnv::step(const Eigen::VectorXd& action) {
  if (state_.done) throw std::logic_error("MetaEnv::step after episode end");
  StepResult r = envs::step(state_, action, task_, cfg_);
  state_ = r.next;
  return r;
}

}  // namespace metamem::envs
