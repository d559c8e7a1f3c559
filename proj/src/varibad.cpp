// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/varibad.hpp"

#include <functional>
#include <map>
#include <numbers>
#include <unordered_map>

namespace metamem::varibad {

namespace {

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 5.0;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

int context_dim(int obs_dim, int act_dim) { return 2 * obs_dim + act_dim + 1; }

Tensor stack_rows(const std::vector<const replay::Trajectory*>& batch,
                  const std::function<Eigen::RowVectorXd(const replay::Transition&)>& pick,
                  Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto* t : batch) rows += static_cast<Eigen::Index>(t->size());
  Tensor out(rows, cols);
  Eigen::Index at = 0;
  for (const auto* t : batch) {
    for (const auto& tr : t->steps) out.row(at++) = pick(tr);
  }
  return out;
}

}  // namespace

Eigen::VectorXd BeliefState::stacked() const {
  Eigen::VectorXd out(mean.size() + var.size());
  out << mean, var;
  return out;
}

VaribadAgent::VaribadAgent(int obs_dim, int act_dim, VaribadHyper hyper,
                           sac::SacHyper sac_hyper, TrainSchedule schedule, Rng& rng)
    : obs_dim_(obs_dim),
      act_dim_(act_dim),
      hyper_(std::move(hyper)),
      schedule_(schedule),
      embed_(context_dim(obs_dim, act_dim), hyper_.embed_dim, rng),
      gru_(hyper_.embed_dim, hyper_.gru_hidden, rng),
      head_(hyper_.gru_hidden, 2 * hyper_.latent_dim, rng),
      reward_decoder_(obs_dim + act_dim + hyper_.latent_dim, hyper_.decoder_hidden, 1, rng, 0.01),
      transition_decoder_(obs_dim + act_dim + hyper_.latent_dim, hyper_.decoder_hidden, obs_dim,
                          rng, 0.01),
      sac_(obs_dim, 2 * hyper_.latent_dim, act_dim, std::move(sac_hyper), rng) {
  if (hyper_.latent_dim <= 0 || hyper_.anchors <= 0 || hyper_.z_samples <= 0 ||
      hyper_.vae_batch <= 0 || hyper_.kl_weight < 0.0) {
    throw nn::ContractError("VaribadHyper: dimensions and counts must be positive");
  }
  embed_.register_params(vae_params_, "vae.embed");
  gru_.register_params(vae_params_, "vae.gru");
  head_.register_params(vae_params_, "vae.head");
  reward_decoder_.register_params(vae_params_, "vae.reward");
  transition_decoder_.register_params(vae_params_, "vae.transition");
  reward_decoder_.register_params(reward_params_, "vae.reward");
  transition_decoder_.register_params(transition_params_, "vae.transition");
}

BeliefState VaribadAgent::prior_belief() const {
  return {Eigen::VectorXd::Zero(hyper_.latent_dim), Eigen::VectorXd::Ones(hyper_.latent_dim),
          Eigen::VectorXd::Zero(hyper_.gru_hidden)};
}

Var VaribadAgent::belief_head(const Var& h, Var* var_out) const {
  const int k = hyper_.latent_dim;
  Var out = head_(h);
  *var_out = nn::exp(nn::clamp(nn::slice_cols(out, k, k), kLogVarMin, kLogVarMax));
  return nn::slice_cols(out, 0, k);
}

BeliefState VaribadAgent::step_belief(const BeliefState& belief,
                                      const replay::Transition& tr) const {
  nn::NoGradGuard guard;
  Var x = nn::constant(replay::context_row(tr));
  Var h = gru_.step(nn::relu(embed_(x)), nn::constant(belief.hidden.transpose()));
  Var var;
  Var mean = belief_head(h, &var);
  return {mean.value().row(0).transpose(), var.value().row(0).transpose(),
          h.value().row(0).transpose()};
}

std::vector<BeliefState> VaribadAgent::encode_history(const Tensor& context) const {
  std::vector<BeliefState> out{prior_belief()};
  for (Eigen::Index u = 0; u < context.rows(); ++u) {
    nn::NoGradGuard guard;
    Var x = nn::constant(context.row(u));
    Var h = gru_.step(nn::relu(embed_(x)), nn::constant(out.back().hidden.transpose()));
    Var var;
    Var mean = belief_head(h, &var);
    out.push_back({mean.value().row(0).transpose(), var.value().row(0).transpose(),
                   h.value().row(0).transpose()});
  }
  return out;
}

std::vector<VaribadAgent::BeliefGraph> VaribadAgent::encode_graph(
    const std::vector<Tensor>& contexts) const {
  const auto b = static_cast<Eigen::Index>(contexts.size());
  const int k = hyper_.latent_dim;
  std::vector<BeliefGraph> out{
      {nn::constant(Tensor::Zero(b, k)), nn::constant(Tensor::Ones(b, k))}};
  if (contexts.empty()) return out;
  const Eigen::Index steps = contexts.front().rows();
  for (const auto& c : contexts) {
    if (c.rows() != steps) throw nn::ContractError("encode_graph: contexts differ in length");
  }
  Var h = nn::constant(Tensor::Zero(b, hyper_.gru_hidden));
  Tensor x(b, contexts.front().cols());
  for (Eigen::Index u = 0; u < steps; ++u) {
    for (Eigen::Index i = 0; i < b; ++i) x.row(i) = contexts[static_cast<std::size_t>(i)].row(u);
    h = gru_.step(nn::relu(embed_(nn::constant(x))), h);
    Var var;
    Var mean = belief_head(h, &var);
    out.push_back({mean, var});
  }
  return out;
}

Var VaribadAgent::reward_graph(const Var& s, const Var& a, const Var& z) const {
  return reward_decoder_(nn::concat_cols({s, a, z}));
}

Var VaribadAgent::transition_graph(const Var& s, const Var& a, const Var& z) const {
  return transition_decoder_(nn::concat_cols({s, a, z}));
}

double VaribadAgent::predict_reward(const Eigen::VectorXd& z, const Eigen::VectorXd& s,
                                    const Eigen::VectorXd& a) const {
  nn::NoGradGuard guard;
  return reward_graph(nn::constant(s.transpose()), nn::constant(a.transpose()),
                      nn::constant(z.transpose()))
      .value()(0, 0);
}

Eigen::VectorXd VaribadAgent::predict_transition(const Eigen::VectorXd& z,
                                                 const Eigen::VectorXd& s,
                                                 const Eigen::VectorXd& a) const {
  nn::NoGradGuard guard;
  return transition_graph(nn::constant(s.transpose()), nn::constant(a.transpose()),
                          nn::constant(z.transpose()))
      .value()
      .row(0)
      .transpose();
}

VaribadAgent::ElboGraph VaribadAgent::elbo_graph(
    const std::vector<const replay::Trajectory*>& batch, const std::vector<int>& anchors,
    const std::vector<Tensor>& noise) const {
  if (batch.empty() || anchors.empty() || noise.size() != anchors.size()) {
    throw nn::ContractError("elbo_graph: need a batch, anchors and one noise block per anchor");
  }
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto t_len = static_cast<int>(batch.front()->size());
  int max_anchor = 0;
  for (int t : anchors) {
    if (t < 0 || t > t_len) throw nn::ContractError("elbo_graph: anchor outside [0, T]");
    max_anchor = std::max(max_anchor, t);
  }
  std::vector<Tensor> contexts;
  for (const auto* traj : batch) {
    if (static_cast<int>(traj->size()) != t_len) {
      throw nn::ContractError("elbo_graph: trajectories differ in length");
    }
    contexts.push_back(replay::context_matrix(traj->steps).topRows(max_anchor));
  }
  const auto beliefs = encode_graph(contexts);

  Var s = nn::constant(stack_rows(batch, [](const auto& tr) { return tr.s.transpose(); }, obs_dim_));
  Var a = nn::constant(stack_rows(batch, [](const auto& tr) { return tr.a.transpose(); }, act_dim_));
  Tensor r = stack_rows(
      batch, [](const auto& tr) { return Eigen::RowVectorXd::Constant(1, tr.r); }, 1);
  Tensor s2 = stack_rows(batch, [](const auto& tr) { return tr.s2.transpose(); }, obs_dim_);
  Var r_target = nn::constant(r);
  Var s2_target = nn::constant(s2);

  const double rows = static_cast<double>(b) * t_len;
  const auto zs = static_cast<int>(noise.front().rows() / b);
  for (const auto& n : noise) {
    if (n.rows() != zs * b || zs == 0) throw nn::ContractError("elbo_graph: bad noise shape");
  }
  std::vector<Var> reward_terms, transition_terms, kl_terms;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& belief = beliefs[static_cast<std::size_t>(anchors[i])];
    Var std = nn::exp(0.5 * nn::log(belief.var));
    for (int j = 0; j < zs; ++j) {
      Var eps = nn::constant(noise[i].middleRows(j * b, b));
      Var z = nn::repeat_rows(belief.mean + nn::cmul(std, eps), t_len);
      reward_terms.push_back(0.5 * nn::sum(nn::square(reward_graph(s, a, z) - r_target)) +
                             rows * kHalfLog2Pi);
      transition_terms.push_back(
          0.5 * nn::sum(nn::square(transition_graph(s, a, z) - s2_target)) +
          rows * obs_dim_ * kHalfLog2Pi);
    }
    kl_terms.push_back(
        0.5 * nn::sum(belief.var + nn::square(belief.mean) - 1.0 - nn::log(belief.var)));
  }
  auto average = [](const std::vector<Var>& terms, double denom) {
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
    return acc * (1.0 / denom);
  };
  const double n_anchor = static_cast<double>(anchors.size());
  ElboGraph g;
  g.reward = average(reward_terms, static_cast<double>(b) * n_anchor * zs);
  g.transition = average(transition_terms, static_cast<double>(b) * n_anchor * zs);
  g.kl = average(kl_terms, static_cast<double>(b) * n_anchor);
  g.total = g.reward + g.transition + hyper_.kl_weight * g.kl;
  return g;
}

ElboComponents VaribadAgent::elbo(const replay::Trajectory& traj, int t, int z_samples,
                                  Rng& rng) const {
  if (t < 0 || t > static_cast<int>(traj.size()) || z_samples <= 0) {
    throw nn::ContractError("elbo: need 0 <= t <= T and z_samples > 0");
  }
  nn::NoGradGuard guard;
  auto g = elbo_graph({&traj}, {t}, {nn::randn(z_samples, hyper_.latent_dim, rng)});
  return {g.reward.scalar(), g.transition.scalar(), g.kl.scalar(), g.total.scalar()};
}

Var VaribadAgent::rl_critic_loss(const replay::RLBatch& batch, const Tensor& policy_noise) const {
  Tensor target =
      sac_.critic_target(batch.r, batch.s2, batch.next_belief, batch.done, policy_noise);
  return sac_.critic_loss(batch.s, batch.a, nn::constant(batch.belief), target);
}

double VaribadAgent::vae_update(const std::vector<const replay::Trajectory*>& batch, Rng& rng) {
  std::map<std::size_t, std::vector<const replay::Trajectory*>> by_length;
  for (const auto* t : batch) {
    if (t->size() > 0) by_length[t->size()].push_back(t);
  }
  if (by_length.empty()) return 0.0;
  std::vector<Var> losses;
  std::vector<double> weights;
  for (const auto& [len, group] : by_length) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(len));
    std::vector<int> anchors;
    std::vector<Tensor> noise;
    for (int i = 0; i < hyper_.anchors; ++i) {
      anchors.push_back(pick(rng));
      noise.push_back(nn::randn(static_cast<Eigen::Index>(group.size()) * hyper_.z_samples,
                                hyper_.latent_dim, rng));
    }
    losses.push_back(elbo_graph(group, anchors, noise).total);
    weights.push_back(static_cast<double>(group.size()) / static_cast<double>(batch.size()));
  }
  Var loss = losses.front() * weights.front();
  for (std::size_t i = 1; i < losses.size(); ++i) loss = loss + losses[i] * weights[i];
  nn::adam_step(vae_params_, vae_params_.collect(nn::backward(loss)), {hyper_.vae_lr});
  return loss.scalar();
}

replay::Trajectory VaribadAgent::rollout(const envs::Task& task, const envs::EnvConfig& env_cfg,
                                         int n_episodes, bool deterministic,
                                         std::vector<double>* returns,
                                         std::vector<Eigen::VectorXd>* episode_end_beliefs,
                                         std::vector<replay::Trajectory>* episodes,
                                         Rng& rng) const {
  envs::MetaEnv env(task, env_cfg);
  BeliefState belief = prior_belief();
  replay::Trajectory meta;
  meta.beliefs.push_back(belief.stacked());
  envs::EnvState state = env.reset(rng);
  for (int e = 0; e < n_episodes; ++e) {
    replay::Trajectory episode;
    episode.episode = e;
    double ret = 0.0;
    while (!state.done) {
      Eigen::VectorXd action = sac_.act(state.obs, belief.stacked(), deterministic, rng);
      auto res = env.step(action);
      replay::Transition tr{state.obs, envs::clip_action(action), res.reward, res.next.obs,
                            res.done};
      if (episodes != nullptr) episode.steps.push_back(tr);
      ret += res.reward;
      state = res.next;
      if (res.done && e + 1 < n_episodes) {
        state = env.reset(rng);
        if (hyper_.bamdp_bootstrap) {
          tr.s2 = state.obs;
          tr.done = false;
        }
      }
      belief = step_belief(belief, tr);
      meta.steps.push_back(tr);
      meta.beliefs.push_back(belief.stacked());
      if (res.done) break;
    }
    if (returns != nullptr) returns->push_back(ret);
    if (episode_end_beliefs != nullptr) episode_end_beliefs->push_back(belief.stacked());
    if (episodes != nullptr) episodes->push_back(std::move(episode));
  }
  return meta;
}

void VaribadAgent::reencode_beliefs(replay::ReplayBuffer& buffer) const {
  std::map<std::size_t, std::vector<replay::Trajectory*>> by_length;
  for (auto* t : buffer.mutable_trajectories()) {
    if (t->size() > 0) by_length[t->size()].push_back(t);
  }
  nn::NoGradGuard guard;
  const int k = hyper_.latent_dim;
  for (const auto& [len, group] : by_length) {
    std::vector<Tensor> contexts;
    contexts.reserve(group.size());
    for (const auto* t : group) contexts.push_back(replay::context_matrix(t->steps));
    const auto beliefs = encode_graph(contexts);
    for (std::size_t i = 0; i < group.size(); ++i) {
      auto& stored = group[i]->beliefs;
      stored.resize(len + 1);
      for (std::size_t u = 0; u <= len; ++u) {
        stored[u].resize(2 * k);
        stored[u].head(k) = beliefs[u].mean.value().row(static_cast<Eigen::Index>(i)).transpose();
        stored[u].tail(k) = beliefs[u].var.value().row(static_cast<Eigen::Index>(i)).transpose();
      }
    }
  }
}

IterationMetrics VaribadAgent::train_iteration(AgentMemory& memory,
                                               const std::vector<envs::Task>& tasks,
                                               const envs::EnvConfig& env_cfg, Rng& rng) {
  if (tasks.empty()) throw nn::ContractError("train_iteration: no training tasks");
  IterationMetrics m;

  double return_sum = 0.0;
  int episodes = 0;
  for (int id : pick_task_ids(static_cast<int>(tasks.size()), schedule_.tasks_per_iter, rng)) {
    std::vector<double> returns;
    auto traj = rollout(tasks[static_cast<std::size_t>(id)], env_cfg, schedule_.episodes_per_task,
                        false, &returns, nullptr, nullptr, rng);
    traj.task_id = id;
    for (double r : returns) return_sum += r;
    episodes += static_cast<int>(returns.size());
    m.env_steps += static_cast<long>(traj.size());
    memory.insert(id, std::move(traj));
  }
  m.train_return = episodes > 0 ? return_sum / episodes : 0.0;
  m.buffer_after_collect = memory.policy().size();
  if (memory.policy().size() == 0 || memory.encoder().size() == 0) {
    throw replay::EmptyBufferError("train_iteration: buffer empty after collection");
  }

  for (int u = 0; u < hyper_.vae_updates; ++u) {
    m.encoder_loss += vae_update(
        memory.encoder().sample_trajectories(static_cast<std::size_t>(hyper_.vae_batch), rng),
        rng);
  }
  if (hyper_.vae_updates > 0) m.encoder_loss /= hyper_.vae_updates;

  if (hyper_.reencode_beliefs) reencode_beliefs(memory.policy());
  const auto batch_size = static_cast<std::size_t>(sac_.hyper().batch_size);
  for (int step = 0; step < schedule_.grad_steps; ++step) {
    replay::RLBatch batch = memory.policy().sample_rl_batch(batch_size, rng);
    shape_critic_rewards(batch, tasks, schedule_);
    Var critic = rl_critic_loss(batch, nn::randn(batch.size(), act_dim_, rng));
    sac_.apply_critic_grads(nn::gradients(critic, sac_.critic_params()));
    auto stats = sac_.update_actor(batch.s, batch.belief, rng);
    sac_.soft_update_targets(sac_.hyper().tau);
    m.critic_loss += critic.scalar();
    m.actor_loss += stats.loss;
    m.entropy += stats.entropy;
  }
  if (schedule_.grad_steps > 0) {
    const double n = schedule_.grad_steps;
    m.critic_loss /= n;
    m.actor_loss /= n;
    m.entropy /= n;
  }
  return m;
}

AdaptResult VaribadAgent::adapt(const envs::Task& task, const envs::EnvConfig& env_cfg,
                                int n_episodes, Rng& rng) const {
  AdaptResult out;
  rollout(task, env_cfg, n_episodes, hyper_.deterministic_eval, &out.returns, &out.embeddings,
          &out.trajectories, rng);
  return out;
}

nlohmann::json VaribadAgent::checkpoint() const {
  return {{"algo", "varibad"}, {"sac", sac_.to_json()}, {"vae", vae_params_.to_json()}};
}

void VaribadAgent::restore(const nlohmann::json& j) {
  if (j.at("algo").get<std::string>() != "varibad") {
    throw nn::ContractError("checkpoint is not a varibad agent");
  }
  sac_.load_json(j.at("sac"));
  vae_params_.load_json(j.at("vae"));
}

}  // namespace metamem::varibad
