// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/pearl.hpp"

#include <algorithm>

namespace metamem::pearl {

namespace {

constexpr double kMinFactorVar = 1e-7;
constexpr double kMaxFactorVar = 1e7;

int context_dim(int obs_dim, int act_dim) { return 2 * obs_dim + act_dim + 1; }

}  // namespace

Eigen::VectorXd TaskPosterior::stacked() const {
  Eigen::VectorXd out(mean.size() + var.size());
  out << mean, var;
  return out;
}

PearlAgent::PearlAgent(int obs_dim, int act_dim, PearlHyper hyper, sac::SacHyper sac_hyper,
                       TrainSchedule schedule, Rng& rng)
    : obs_dim_(obs_dim),
      act_dim_(act_dim),
      hyper_(std::move(hyper)),
      schedule_(schedule),
      encoder_(context_dim(obs_dim, act_dim), hyper_.encoder_hidden, 2 * hyper_.latent_dim, rng),
      sac_(obs_dim, hyper_.latent_dim, act_dim, std::move(sac_hyper), rng) {
  if (hyper_.latent_dim <= 0 || hyper_.context_len <= 0 || hyper_.meta_batch <= 0 ||
      hyper_.kl_weight < 0.0) {
    throw nn::ContractError("PearlHyper: latent_dim, context_len, meta_batch must be positive");
  }
  encoder_.register_params(encoder_params_, "encoder");
}

PearlAgent::PosteriorGraph PearlAgent::encode_graph(const Tensor& context) const {
  const int k = hyper_.latent_dim;
  if (context.rows() == 0) {
    return {nn::constant(Tensor::Zero(1, k)), nn::constant(Tensor::Ones(1, k))};
  }
  Var out = encoder_(nn::constant(context));
  Var mu = nn::slice_cols(out, 0, k);
  Var var = nn::clamp(nn::softplus(nn::slice_cols(out, k, k)), kMinFactorVar, kMaxFactorVar);
  Var precision = 1.0 + nn::colwise_sum(nn::reciprocal(var));
  Var mean = nn::cdiv(nn::colwise_sum(nn::cdiv(mu, var)), precision);
  return {mean, nn::reciprocal(precision)};
}

TaskPosterior PearlAgent::encode_context(const Tensor& context) const {
  if (context.rows() == 0) return TaskPosterior::prior(hyper_.latent_dim);
  nn::NoGradGuard guard;
  const int k = hyper_.latent_dim;
  Tensor out = encoder_(nn::constant(context)).value();
  Tensor mu = out.leftCols(k);
  Tensor var = out.rightCols(k)
                   .unaryExpr([](double x) {
                     const double sp = x > 30.0 ? x : std::log1p(std::exp(x));
                     return std::clamp(sp, kMinFactorVar, kMaxFactorVar);
                   });
  return product_of_gaussians(mu, var);
}

Var PearlAgent::kl_graph(const PosteriorGraph& p) {
  return 0.5 * nn::sum(p.var + nn::square(p.mean) - 1.0 - nn::log(p.var));
}

Var PearlAgent::encoder_objective(const std::vector<TaskSample>& tasks,
                                  const std::vector<Tensor>& latent_noise,
                                  const Tensor& policy_noise, double* kl_out) const {
  if (tasks.empty() || latent_noise.size() != tasks.size()) {
    throw nn::ContractError("encoder_objective: need one latent noise row per task");
  }
  std::vector<Var> conds;
  std::vector<Var> kls;
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& b = tasks[i].batch;
    auto post = encode_graph(tasks[i].context);
    Var z = post.mean + nn::cmul(nn::exp(0.5 * nn::log(post.var)), nn::constant(latent_noise[i]));
    conds.push_back(nn::repeat_rows(z, b.size()));
    kls.push_back(kl_graph(post));
    rows += b.size();
  }
  Tensor cat_s(rows, obs_dim_), cat_a(rows, act_dim_), cat_r(rows, 1), cat_s2(rows, obs_dim_),
      cat_done(rows, 1);
  Eigen::Index at = 0;
  for (const auto& t : tasks) {
    const auto n = t.batch.size();
    cat_s.middleRows(at, n) = t.batch.s;
    cat_a.middleRows(at, n) = t.batch.a;
    cat_r.middleRows(at, n) = t.batch.r;
    cat_s2.middleRows(at, n) = t.batch.s2;
    cat_done.middleRows(at, n) = t.batch.done;
    at += n;
  }
  Var cond = nn::concat_rows(conds);
  Tensor target = sac_.critic_target(cat_r, cat_s2, cond.value(), cat_done, policy_noise);
  Var kl = nn::concat_rows(kls);
  Var mean_kl = nn::mean(kl);
  if (kl_out != nullptr) *kl_out = mean_kl.scalar();
  return sac_.critic_loss(cat_s, cat_a, cond, target) + hyper_.kl_weight * mean_kl;
}

Eigen::VectorXd PearlAgent::sample_latent(const TaskPosterior& p, Rng& rng) const {
  Tensor eps = nn::randn(hyper_.latent_dim, 1, rng);
  return p.mean + (p.var.array().sqrt() * eps.col(0).array()).matrix();
}

replay::Trajectory PearlAgent::rollout(const envs::Task& task, const envs::EnvConfig& env_cfg,
                                       const TaskPosterior& posterior, bool deterministic,
                                       std::vector<replay::Transition>* live_context,
                                       Rng& rng) const {
  envs::MetaEnv env(task, env_cfg);
  envs::EnvState state = env.reset(rng);
  Eigen::VectorXd z = sample_latent(posterior, rng);
  replay::Trajectory traj;
  while (!state.done) {
    Eigen::VectorXd action = sac_.act(state.obs, z, deterministic, rng);
    auto res = env.step(action);
    replay::Transition tr{state.obs, envs::clip_action(action), res.reward, res.next.obs,
                          res.done};
    traj.steps.push_back(tr);
    if (live_context != nullptr && hyper_.per_step_posterior) {
      live_context->push_back(tr);
      z = sample_latent(encode_context(replay::context_matrix(*live_context)), rng);
    }
    state = res.next;
  }
  return traj;
}

IterationMetrics PearlAgent::train_iteration(AgentMemory& memory,
                                             const std::vector<envs::Task>& tasks,
                                             const envs::EnvConfig& env_cfg, Rng& rng) {
  if (tasks.empty()) throw nn::ContractError("train_iteration: no training tasks");
  IterationMetrics m;

  // Collection.
  double return_sum = 0.0;
  int episodes = 0;
  for (int id : pick_task_ids(static_cast<int>(tasks.size()), schedule_.tasks_per_iter, rng)) {
    for (int e = 0; e < schedule_.episodes_per_task; ++e) {
      TaskPosterior post = TaskPosterior::prior(hyper_.latent_dim);
      if (memory.encoder().has_task(id)) {
        auto ctx = memory.encoder().sample_context(
            id, static_cast<std::size_t>(hyper_.context_len), replay::ContextMode::kRecent, rng);
        post = encode_context(replay::context_matrix(ctx));
      }
      auto traj = rollout(tasks[static_cast<std::size_t>(id)], env_cfg, post, false, nullptr, rng);
      traj.task_id = id;
      traj.episode = e;
      for (const auto& t : traj.steps) return_sum += t.r;
      m.env_steps += static_cast<long>(traj.size());
      ++episodes;
      memory.insert(id, std::move(traj));
    }
  }
  m.train_return = episodes > 0 ? return_sum / episodes : 0.0;
  m.buffer_after_collect = memory.policy().size();
  if (memory.policy().size() == 0 || memory.encoder().size() == 0) {
    throw replay::EmptyBufferError("train_iteration: buffer empty after collection");
  }

  // Updates.
  const auto task_ids = memory.encoder().task_ids();
  std::uniform_int_distribution<std::size_t> pick(0, task_ids.size() - 1);
  const auto per_task =
      static_cast<std::size_t>(std::max(1, sac_.hyper().batch_size / hyper_.meta_batch));
  const nn::AdamOptions enc_opt{sac_.hyper().lr};
  for (int step = 0; step < schedule_.grad_steps; ++step) {
    std::vector<TaskSample> group;
    std::vector<Tensor> noise;
    for (int i = 0; i < hyper_.meta_batch; ++i) {
      const int id = task_ids[pick(rng)];
      auto ctx = memory.encoder().sample_context(
          id, static_cast<std::size_t>(hyper_.context_len), replay::ContextMode::kRecent, rng);
      group.push_back({replay::context_matrix(ctx), memory.policy().sample_task_batch(id, per_task, rng)});
      shape_critic_rewards(group.back().batch, tasks, schedule_);
      noise.push_back(nn::randn(1, hyper_.latent_dim, rng));
    }
    Eigen::Index rows = 0;
    for (const auto& g : group) rows += g.batch.size();
    double kl = 0.0;
    Var objective = encoder_objective(group, noise, nn::randn(rows, act_dim_, rng), &kl);
    auto grads = nn::backward(objective);
    sac_.apply_critic_grads(sac_.critic_params().collect(grads));
    nn::adam_step(encoder_params_, encoder_params_.collect(grads), enc_opt);

    // The actor sees the latent as a constant input.
    Tensor s(rows, obs_dim_), cond(rows, hyper_.latent_dim);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto n = group[i].batch.size();
      auto post = encode_context(group[i].context);
      Eigen::RowVectorXd z =
          post.mean.transpose() + (post.var.array().sqrt().transpose() * noise[i].array()).matrix();
      s.middleRows(at, n) = group[i].batch.s;
      cond.middleRows(at, n) = z.replicate(n, 1);
      at += n;
    }
    auto stats = sac_.update_actor(s, cond, rng);
    sac_.soft_update_targets(sac_.hyper().tau);

    m.critic_loss += objective.scalar() - hyper_.kl_weight * kl;
    m.actor_loss += stats.loss;
    m.entropy += stats.entropy;
    m.encoder_loss += kl;
  }
  if (schedule_.grad_steps > 0) {
    const double n = schedule_.grad_steps;
    m.critic_loss /= n;
    m.actor_loss /= n;
    m.entropy /= n;
    m.encoder_loss /= n;
  }
  return m;
}

AdaptResult PearlAgent::adapt(const envs::Task& task, const envs::EnvConfig& env_cfg,
                              int n_episodes, Rng& rng) const {
  AdaptResult out;
  std::vector<replay::Transition> context;
  TaskPosterior post = TaskPosterior::prior(hyper_.latent_dim);
  for (int e = 0; e < n_episodes; ++e) {
    std::vector<replay::Transition> live = context;
    auto traj = rollout(task, env_cfg, post, hyper_.deterministic_eval, &live, rng);
    traj.episode = e;
    double ret = 0.0;
    for (const auto& t : traj.steps) ret += t.r;
    context.insert(context.end(), traj.steps.begin(), traj.steps.end());
    post = encode_context(replay::context_matrix(context));
    out.returns.push_back(ret);
    out.embeddings.push_back(post.stacked());
    out.trajectories.push_back(std::move(traj));
  }
  return out;
}

nlohmann::json PearlAgent::checkpoint() const {
  return {{"algo", "pearl"}, {"sac", sac_.to_json()}, {"encoder", encoder_params_.to_json()}};
}

void PearlAgent::restore(const nlohmann::json& j) {
  if (j.at("algo").get<std::string>() != "pearl") {
    throw nn::ContractError("checkpoint is not a pearl agent");
  }
  sac_.load_json(j.at("sac"));
  encoder_params_.load_json(j.at("encoder"));
}

}  // namespace metamem::pearl
