// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/belief_oracle.hpp"

#include <cmath>
#include <limits>

#include "metamem/varibad.hpp"

namespace metamem::oracle {

using envs::Family;

FiniteTaskSet FiniteTaskSet::uniform(std::vector<envs::Task> tasks) {
  FiniteTaskSet s;
  const auto n = static_cast<Eigen::Index>(tasks.size());
  s.tasks = std::move(tasks);
  s.prior = Eigen::VectorXd::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  return s;
}

void FiniteTaskSet::validate() const {
  if (tasks.empty()) throw std::invalid_argument("FiniteTaskSet: no tasks");
  if (prior.size() != static_cast<Eigen::Index>(tasks.size())) {
    throw std::invalid_argument("FiniteTaskSet: prior size differs from task count");
  }
  for (const auto& t : tasks) {
    if (t.family != tasks.front().family) {
      throw std::invalid_argument("FiniteTaskSet: tasks from different families");
    }
  }
  if ((prior.array() < 0.0).any() || std::abs(prior.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("FiniteTaskSet: prior is not a probability vector");
  }
}

int ExactBelief::argmax() const {
  int best = 0;
  for (Eigen::Index k = 1; k < probs.size(); ++k) {
    if (probs(k) > probs(best)) best = static_cast<int>(k);
  }
  return best;
}

double ExactBelief::entropy() const {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

ExactBelief posterior_from_rewards(const Eigen::VectorXd& prior, const Eigen::VectorXd& observed,
                                   const Eigen::MatrixXd& model, double noise) {
  if (!(noise > 0.0)) throw std::invalid_argument("exact_posterior: noise must be positive");
  if (model.rows() != observed.size() || model.cols() != prior.size()) {
    throw std::invalid_argument("exact_posterior: model table shape mismatch");
  }
  const double inv_var = 1.0 / (noise * noise);
  Eigen::VectorXd log_post(prior.size());
  for (Eigen::Index k = 0; k < prior.size(); ++k) {
    double lp = prior(k) > 0.0 ? std::log(prior(k)) : -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < observed.size(); ++i) {
      const double d = observed(i) - model(i, k);
      lp -= 0.5 * d * d * inv_var;
    }
    log_post(k) = lp;
  }
  const double shift = log_post.maxCoeff();
  if (!std::isfinite(shift)) {
    throw DegeneratePosteriorError("exact_posterior: every hypothesis has zero probability");
  }
  Eigen::VectorXd p = (log_post.array() - shift).exp();
  const double z = p.sum();
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw DegeneratePosteriorError("exact_posterior: normalizer is not positive");
  }
  return {p / z};
}

namespace {

Eigen::MatrixXd model_rewards(const FiniteTaskSet& set,
                              const std::vector<replay::Transition>& traj,
                              const envs::EnvConfig& cfg) {
  Eigen::MatrixXd model(static_cast<Eigen::Index>(traj.size()),
                        static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < traj.size(); ++i) {
    for (std::size_t k = 0; k < set.size(); ++k) {
      const auto& t = traj[i];
      model(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          envs::reward_for(set.tasks[k], t.s, envs::clip_action(t.a), t.s2, cfg);
    }
  }
  return model;
}

Eigen::VectorXd observed_rewards(const std::vector<replay::Transition>& traj) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(traj.size()));
  for (std::size_t i = 0; i < traj.size(); ++i) r(static_cast<Eigen::Index>(i)) = traj[i].r;
  return r;
}

Eigen::Vector2d goal_of(const envs::Task& t) { return t.params.head<2>(); }

// Action that heads for `target` as fast as the dynamics allow.
Eigen::VectorXd steer(Family family, const Eigen::VectorXd& obs, const Eigen::Vector2d& target,
                      const envs::EnvConfig& cfg) {
  const Eigen::Vector2d pos = obs.head<2>();
  const Eigen::Vector2d d = target - pos;
  Eigen::Vector2d a;
  if (family == Family::kSparsePointRobot) {
    a = d / cfg.point_step;
  } else {
    const Eigen::Vector2d vel = obs.segment<2>(2);
    Eigen::Vector2d want = d;
    if (want.norm() > cfg.v_max) want *= cfg.v_max / want.norm();
    a = (want - cfg.momentum * vel) / ((1.0 - cfg.momentum) * cfg.v_max);
  }
  if (a.norm() > 1.0) a /= a.norm();
  return a;
}

}  // namespace

ExactBelief exact_posterior(const FiniteTaskSet& set, const std::vector<replay::Transition>& traj,
                            double noise, const envs::EnvConfig& cfg) {
  set.validate();
  return posterior_from_rewards(set.prior, observed_rewards(traj), model_rewards(set, traj, cfg),
                                noise);
}

ExactBelief update_posterior(const FiniteTaskSet& set, const ExactBelief& belief,
                             const std::vector<replay::Transition>& traj, double noise,
                             const envs::EnvConfig& cfg) {
  return posterior_from_rewards(belief.probs, observed_rewards(traj),
                                model_rewards(set, traj, cfg), noise);
}

int straight_line_steps(const Eigen::Vector2d& start, const Eigen::Vector2d& goal,
                        const envs::EnvConfig& cfg) {
  const double gap = (goal - start).norm() - cfg.goal_radius;
  return gap <= 0.0 ? 0 : static_cast<int>(std::ceil(gap / cfg.point_step - 1e-12));
}

GreedyEpisode posterior_greedy_episode(const FiniteTaskSet& set, ExactBelief& belief,
                                       const envs::Task& true_task, const envs::EnvConfig& cfg,
                                       const GreedyOptions& opt, Rng& rng) {
  set.validate();
  const Family family = true_task.family;
  if (family == Family::kVelMatch1D || set.tasks.front().family != family) {
    throw std::invalid_argument("posterior_greedy_episode: navigation families only");
  }
  envs::MetaEnv env(true_task, cfg);
  envs::EnvState state = env.reset(rng);
  const double reach = family == Family::kSparsePointRobot ? cfg.point_step : cfg.v_max;
  bool committed = false;
  GreedyEpisode out;
  while (!state.done) {
    const Eigen::Vector2d pos = state.obs.head<2>();
    Eigen::Vector2d mean_goal = Eigen::Vector2d::Zero();
    for (std::size_t k = 0; k < set.size(); ++k) {
      mean_goal += belief.probs(static_cast<Eigen::Index>(k)) * goal_of(set.tasks[k]);
    }
    if ((mean_goal - pos).norm() <= reach) committed = true;
    Eigen::Vector2d target = mean_goal;
    if (committed) {
      const double top = belief.probs.maxCoeff();
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < set.size(); ++k) {
        if (belief.probs(static_cast<Eigen::Index>(k)) < top) continue;
        const double d = (goal_of(set.tasks[k]) - pos).norm();
        if (d < best_dist) {
          best_dist = d;
          target = goal_of(set.tasks[k]);
        }
      }
    }
    Eigen::VectorXd action = steer(family, state.obs, target, cfg);
    auto res = env.step(action);
    replay::Transition tr{state.obs, envs::clip_action(action), res.reward, res.next.obs,
                          res.done};
    if (opt.update_belief) belief = update_posterior(set, belief, {tr}, opt.noise, cfg);
    out.ret += res.reward;
    out.trajectory.steps.push_back(std::move(tr));
    state = res.next;
  }
  return out;
}

std::vector<GreedyEpisode> posterior_greedy_rollout(const FiniteTaskSet& set, ExactBelief belief,
                                                    const envs::Task& true_task,
                                                    const envs::EnvConfig& cfg, int n_episodes,
                                                    const GreedyOptions& opt, Rng& rng) {
  std::vector<GreedyEpisode> out;
  for (int e = 0; e < n_episodes; ++e) {
    out.push_back(posterior_greedy_episode(set, belief, true_task, cfg, opt, rng));
    out.back().trajectory.episode = e;
  }
  return out;
}

double belief_agreement(const std::vector<ExactBelief>& exact, const std::vector<int>& probes) {
  if (exact.size() != probes.size()) {
    throw std::invalid_argument("belief_agreement: one probe per exact belief required");
  }
  if (exact.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < exact.size(); ++i) hits += exact[i].argmax() == probes[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(exact.size());
}

int decoded_reward_probe(const varibad::VaribadAgent& agent, const Eigen::VectorXd& z,
                         const std::vector<envs::Task>& goals) {
  int best = 0;
  double best_r = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < goals.size(); ++k) {
    const auto& g = goals[k];
    Eigen::VectorXd s = Eigen::VectorXd::Zero(envs::obs_dim(g.family));
    s.head<2>() = g.params.head<2>();
    const double r =
        agent.predict_reward(z, s, Eigen::VectorXd::Zero(envs::act_dim(g.family)));
    if (r > best_r) {
      best_r = r;
      best = static_cast<int>(k);
    }
  }
  return best;
}

int nearest_latent_probe(const Eigen::VectorXd& z, const std::vector<Eigen::VectorXd>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    const double d = (centroids[k] - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace metamem::oracle
