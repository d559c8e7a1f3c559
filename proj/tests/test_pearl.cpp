// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "metamem/pearl.hpp"
#include "support/finite_diff.hpp"

using namespace metamem;
using namespace metamem::pearl;
using nn::Tensor;

namespace {

// Sequential two-Gaussian fusion starting from the unit prior. Independent
// of the precision-sum implementation under test.
TaskPosterior fuse_sequentially(const Tensor& means, const Tensor& vars) {
  const auto k = means.cols();
  TaskPosterior p = TaskPosterior::prior(static_cast<int>(k));
  for (Eigen::Index i = 0; i < means.rows(); ++i) {
    for (Eigen::Index d = 0; d < k; ++d) {
      const double v1 = p.var(d), v2 = vars(i, d);
      p.mean(d) = (p.mean(d) * v2 + means(i, d) * v1) / (v1 + v2);
      p.var(d) = v1 * v2 / (v1 + v2);
    }
  }
  return p;
}

struct Fixture {
  envs::Family family = envs::Family::kSparsePointRobot;
  envs::EnvConfig env;
  PearlHyper hyper;
  sac::SacHyper sac;
  TrainSchedule schedule;

  Fixture() {
    env.horizon = 8;
    hyper.latent_dim = 3;
    hyper.encoder_hidden = {8, 8};
    hyper.context_len = 16;
    hyper.meta_batch = 2;
    sac.hidden = {8, 8};
    sac.batch_size = 16;
    sac.lr = 1e-3;
    schedule.tasks_per_iter = 2;
    schedule.episodes_per_task = 1;
    schedule.grad_steps = 3;
  }

  PearlAgent make(Rng& rng) const {
    return PearlAgent(envs::obs_dim(family), envs::act_dim(family), hyper, sac, schedule, rng);
  }
};

Tensor random_context(int rows, int cols, Rng& rng) { return nn::randn(rows, cols, rng); }

// Parameter values only, without optimizer moments.
nlohmann::json values_of(const nlohmann::json& param_set) {
  nlohmann::json out;
  for (const auto& [name, p] : param_set.at("params").items()) out[name] = p.at("data");
  return out;
}

}  // namespace

TEST_CASE("empty context gives the prior exactly") {
  Rng rng(1);
  Fixture f;
  auto agent = f.make(rng);
  auto p = agent.encode_context(Tensor(0, 5));
  CHECK(p.mean == Eigen::VectorXd::Zero(3));
  CHECK(p.var == Eigen::VectorXd::Ones(3));
  auto empty = product_of_gaussians(Tensor(0, 2), Tensor(0, 2));
  CHECK(empty.mean.isZero(0.0));
  CHECK((empty.var.array() == 1.0).all());
}

TEST_CASE("two unit factors at 0 and 2") {
  Tensor mu(2, 1), var(2, 1);
  mu << 0.0, 2.0;
  var << 1.0, 1.0;
  auto p = product_of_gaussians(mu, var);
  CHECK(std::abs(p.mean(0) - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(p.var(0) - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("precision sum agrees with sequential fusion on random factor sets") {
  Rng rng(2);
  std::uniform_int_distribution<int> count(0, 20);
  std::uniform_real_distribution<double> v(0.05, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = count(rng);
    Tensor mu = nn::randn(n, 4, rng) * 2.0;
    Tensor var = Tensor::NullaryExpr(n, 4, [&] { return v(rng); });
    auto fast = product_of_gaussians(mu, var);
    auto slow = fuse_sequentially(mu, var);
    CHECK((fast.mean - slow.mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fast.var - slow.var).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("kl to prior closed-form values") {
  using V = Eigen::VectorXd;
  CHECK(kl_to_prior(TaskPosterior::prior(4)) == 0.0);
  CHECK(std::abs(kl_to_prior<double>(V::Constant(1, 1.0), V::Constant(1, 1.0)) - 0.5) < 1e-15);
  const double expect = 0.5 * (0.25 - 1.0 - std::log(0.25));
  CHECK(std::abs(kl_to_prior<double>(V::Zero(1), V::Constant(1, 0.25)) - expect) < 1e-12);
  CHECK(std::abs(expect - 0.3181) < 1e-4);
}

TEST_CASE("kl to prior is non-negative and zero only at the prior") {
  Rng rng(3);
  std::uniform_real_distribution<double> v(0.01, 10.0);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd mu = nn::randn(3, 1, rng).col(0);
    Eigen::VectorXd var = Eigen::VectorXd::NullaryExpr(3, [&] { return v(rng); });
    CHECK(kl_to_prior<double>(mu, var) > 0.0);
  }
}

TEST_CASE("graph posterior and kl agree with the plain versions") {
  Rng rng(4);
  Fixture f;
  auto agent = f.make(rng);
  Tensor ctx = random_context(7, 7, rng);
  auto plain = agent.encode_context(ctx);
  auto graph = agent.encode_graph(ctx);
  CHECK((graph.mean.value().row(0).transpose() - plain.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((graph.var.value().row(0).transpose() - plain.var).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(PearlAgent::kl_graph(graph).scalar() - kl_to_prior(plain)) < 1e-12);
}

TEST_CASE("encoder is permutation invariant over context rows") {
  Rng rng(5);
  Fixture f;
  auto agent = f.make(rng);
  Tensor ctx = random_context(30, 7, rng);
  auto base = agent.encode_context(ctx);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(30);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 30, rng);
    auto p = agent.encode_context(perm * ctx);
    CHECK((p.mean - base.mean).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((p.var - base.var).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("posterior variance never grows as context is appended") {
  Rng rng(6);
  Fixture f;
  auto agent = f.make(rng);
  Tensor ctx = random_context(25, 7, rng);
  Eigen::VectorXd prev = Eigen::VectorXd::Ones(3);
  for (int n = 1; n <= 25; ++n) {
    auto p = agent.encode_context(ctx.topRows(n));
    CHECK((p.var.array() <= prev.array()).all());
    prev = p.var;
  }
}

TEST_CASE("reparameterized latent has unit mean gradient and noise scale gradient") {
  Rng rng(7);
  nn::Var mu = nn::parameter(nn::randn(1, 4, rng));
  nn::Var sigma = nn::parameter(Tensor::Constant(1, 4, 0.7));
  Tensor eps = nn::randn(1, 4, rng);
  nn::Var z = mu + nn::cmul(sigma, nn::constant(eps));
  auto g = nn::backward(nn::sum(z));
  CHECK(g.at(mu.node()).isOnes(0.0));
  CHECK((g.at(sigma.node()) - eps).isZero(0.0));
  auto build = [&] { return nn::sum(nn::square(mu + nn::cmul(sigma, nn::constant(eps)))); };
  CHECK(testing::check_param_gradient(sigma, build).ok);
  CHECK(testing::check_param_gradient(mu, build).ok);
}

TEST_CASE("encoder objective gradient matches finite differences on a 2-transition context") {
  Rng rng(8);
  Fixture f;
  f.hyper.kl_weight = 0.1;
  for (int trial = 0; trial < 3; ++trial) {
    auto agent = f.make(rng);
    std::vector<PearlAgent::TaskSample> tasks(2);
    std::vector<Tensor> noise;
    for (auto& t : tasks) {
      t.context = random_context(2, 7, rng);
      auto& b = t.batch;
      b.s = nn::randn(4, 2, rng);
      b.a = nn::uniform(4, 2, 1.0, rng);
      b.r = nn::randn(4, 1, rng);
      b.s2 = nn::randn(4, 2, rng);
      // Terminal rows keep the bootstrap target independent of the latent,
      // so the finite difference sees the same stop-gradient the update uses.
      b.done = Tensor::Ones(4, 1);
      noise.push_back(nn::randn(1, 3, rng));
    }
    Tensor pnoise = nn::randn(8, 2, rng);
    auto build = [&] { return agent.encoder_objective(tasks, noise, pnoise); };
    for (auto& e : agent.encoder_params().entries()) {
      auto res = testing::check_param_gradient(e.param, build);
      CHECK_MESSAGE(res.ok, e.name << " " << res.worst);
    }
  }
}

TEST_CASE("zero learning rate leaves every parameter unchanged") {
  Rng rng(9);
  Fixture f;
  f.sac.lr = 0.0;
  auto agent = f.make(rng);
  auto split = envs::sample_tasks(f.family, 4, 2, 1);
  const auto before = agent.checkpoint();
  AgentMemory mem(replay::MemoryStrategy::kLong, 10000);
  mem.begin_iteration();
  auto m = agent.train_iteration(mem, split.train, f.env, rng);
  const auto after = agent.checkpoint();
  CHECK(values_of(after["encoder"]) == values_of(before["encoder"]));
  CHECK(values_of(after["sac"]["actor"]) == values_of(before["sac"]["actor"]));
  CHECK(values_of(after["sac"]["critic"]) == values_of(before["sac"]["critic"]));
  CHECK(m.env_steps == 16);
  CHECK(std::isfinite(m.critic_loss));
  CHECK(std::isfinite(m.actor_loss));
  CHECK(m.buffer_after_collect == 16);
}

TEST_CASE("training is bit-identical for a fixed seed") {
  auto run = [] {
    Rng rng(10);
    Fixture f;
    auto agent = f.make(rng);
    auto split = envs::sample_tasks(f.family, 4, 2, 2);
    AgentMemory mem(replay::MemoryStrategy::kShort, 10000);
    std::vector<double> out;
    for (int it = 0; it < 3; ++it) {
      mem.begin_iteration();
      auto m = agent.train_iteration(mem, split.train, f.env, rng);
      out.insert(out.end(), {m.train_return, m.critic_loss, m.actor_loss, m.entropy,
                             m.encoder_loss});
    }
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("no collection means an empty buffer error") {
  Rng rng(11);
  Fixture f;
  f.schedule.tasks_per_iter = 0;
  auto agent = f.make(rng);
  auto split = envs::sample_tasks(f.family, 4, 2, 3);
  AgentMemory mem(replay::MemoryStrategy::kShort, 10000);
  mem.begin_iteration();
  CHECK_THROWS_AS(agent.train_iteration(mem, split.train, f.env, rng), replay::EmptyBufferError);
}

TEST_CASE("adaptation context grows one horizon per episode") {
  Rng rng(12);
  Fixture f;
  auto agent = f.make(rng);
  auto split = envs::sample_tasks(f.family, 2, 2, 4);
  auto res = agent.adapt(split.test[0], f.env, 4, rng);
  REQUIRE(res.returns.size() == 4);
  REQUIRE(res.embeddings.size() == 4);
  std::size_t total = 0;
  Eigen::VectorXd prev = Eigen::VectorXd::Ones(3);
  for (int e = 0; e < 4; ++e) {
    total += res.trajectories[static_cast<std::size_t>(e)].size();
    CHECK(total == static_cast<std::size_t>((e + 1) * 8));
    Eigen::VectorXd var = res.embeddings[static_cast<std::size_t>(e)].tail(3);
    CHECK((var.array() <= prev.array()).all());
    prev = var;
  }
}

TEST_CASE("first adaptation episode acts under the prior") {
  Fixture f;
  Rng init(13);
  auto agent = f.make(init);
  auto split = envs::sample_tasks(f.family, 2, 2, 5);
  Rng a(99), b(99);
  auto one = agent.adapt(split.test[1], f.env, 1, a);
  auto five = agent.adapt(split.test[1], f.env, 5, b);
  CHECK(one.returns[0] == five.returns[0]);
  CHECK(one.trajectories[0].steps.back().s2 == five.trajectories[0].steps.back().s2);
}

TEST_CASE("per-step posterior option still records full episodes") {
  Rng rng(14);
  Fixture f;
  f.hyper.per_step_posterior = true;
  auto agent = f.make(rng);
  auto split = envs::sample_tasks(f.family, 2, 2, 6);
  auto res = agent.adapt(split.test[0], f.env, 2, rng);
  CHECK(res.trajectories[0].size() == 8);
  CHECK(res.trajectories[1].size() == 8);
}

TEST_CASE("pearl checkpoint round-trips") {
  Rng rng(15);
  Fixture f;
  auto a = f.make(rng);
  auto split = envs::sample_tasks(f.family, 4, 2, 7);
  AgentMemory mem(replay::MemoryStrategy::kLong, 10000);
  mem.begin_iteration();
  a.train_iteration(mem, split.train, f.env, rng);
  auto b = f.make(rng);
  b.restore(nlohmann::json::parse(a.checkpoint().dump()));
  CHECK(b.checkpoint() == a.checkpoint());
}
