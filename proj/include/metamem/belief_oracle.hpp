// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

// Exact Bayesian task inference over a finite hypothesis set, plus a greedy
// posterior-pursuit policy used as a benchmark for the learned agents.

#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "metamem/envs.hpp"
#include "metamem/replay.hpp"

namespace metamem::varibad {
class VaribadAgent;
}

namespace metamem::oracle {

using Rng = std::mt19937_64;

class DegeneratePosteriorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FiniteTaskSet {
  std::vector<envs::Task> tasks;
  Eigen::VectorXd prior;

  static FiniteTaskSet uniform(std::vector<envs::Task> tasks);
  // Throws std::invalid_argument on mixed families, size mismatch, negative
  // entries or a prior that does not sum to one within 1e-12.
  void validate() const;
  std::size_t size() const { return tasks.size(); }
};

struct ExactBelief {
  Eigen::VectorXd probs;

  // Lowest index among ties.
  int argmax() const;
  double entropy() const;
};

// Posterior from a prior and a table of model rewards: model(i, k) is the
// reward hypothesis k predicts for observation i.
ExactBelief posterior_from_rewards(const Eigen::VectorXd& prior,
                                   const Eigen::VectorXd& observed,
                                   const Eigen::MatrixXd& model, double noise);

// Gaussian reward likelihood with std `noise`. Dynamics are deterministic and
// identical across tasks, so their factors cancel.
ExactBelief exact_posterior(const FiniteTaskSet& set, const std::vector<replay::Transition>& traj,
                            double noise, const envs::EnvConfig& cfg);

// Same update starting from an existing belief instead of the set prior.
ExactBelief update_posterior(const FiniteTaskSet& set, const ExactBelief& belief,
                             const std::vector<replay::Transition>& traj, double noise,
                             const envs::EnvConfig& cfg);

struct GreedyOptions {
  double noise = 0.1;
  bool update_belief = true;  // false pursues the prior mean only
};

struct GreedyEpisode {
  double ret = 0.0;
  replay::Trajectory trajectory;
};

// One episode on `true_task` that pursues the belief-weighted mean goal
// until it is within one step of it, then the most probable goal (ties go to
// the goal nearest the current position). `belief` is updated in place after
// every step. Navigation families only.
GreedyEpisode posterior_greedy_episode(const FiniteTaskSet& set, ExactBelief& belief,
                                       const envs::Task& true_task, const envs::EnvConfig& cfg,
                                       const GreedyOptions& opt, Rng& rng);

// Consecutive episodes with the belief carried over.
std::vector<GreedyEpisode> posterior_greedy_rollout(const FiniteTaskSet& set,
                                                    ExactBelief belief,
                                                    const envs::Task& true_task,
                                                    const envs::EnvConfig& cfg, int n_episodes,
                                                    const GreedyOptions& opt, Rng& rng);

// Steps needed by a unit-speed straight-line approach to get inside the goal
// radius from `start`.
int straight_line_steps(const Eigen::Vector2d& start, const Eigen::Vector2d& goal,
                        const envs::EnvConfig& cfg);

// Fraction of runs whose probe index equals the exact-posterior argmax.
double belief_agreement(const std::vector<ExactBelief>& exact, const std::vector<int>& probes);

// Index of the goal where the decoded reward of a standing-still step is
// largest (lowest index among ties).
int decoded_reward_probe(const varibad::VaribadAgent& agent, const Eigen::VectorXd& z,
                         const std::vector<envs::Task>& goals);

// Index of the nearest centroid in latent space (lowest index among ties).
int nearest_latent_probe(const Eigen::VectorXd& z, const std::vector<Eigen::VectorXd>& centroids);

}  // namespace metamem::oracle
