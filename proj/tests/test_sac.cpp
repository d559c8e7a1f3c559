// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "metamem/sac.hpp"
#include "support/finite_diff.hpp"

using namespace metamem;
using namespace metamem::nn;
using sac::SacHyper;
using sac::SacNets;

namespace {

SacHyper tiny() {
  SacHyper h;
  h.hidden = {8, 8};
  h.lr = 1e-2;
  return h;
}

// Makes a network's output the constant `value` by zeroing its last layer.
void set_constant_output(ParamSet& ps, const std::string& prefix, double value) {
  ps.at(prefix + ".2.weight").param.mutable_value().setZero();
  ps.at(prefix + ".2.bias").param.mutable_value().setConstant(value);
}

}  // namespace

TEST_CASE("terminal rows bootstrap nothing") {
  Rng rng(1);
  SacNets nets(2, 3, 2, tiny(), rng);
  Tensor r = Tensor::Constant(5, 1, 2.0);
  Tensor y = nets.critic_target(r, randn(5, 2, rng), randn(5, 3, rng), Tensor::Ones(5, 1), rng);
  CHECK(y == r);
}

TEST_CASE("gamma zero target is the reward") {
  Rng rng(2);
  SacNets nets(2, 3, 2, tiny(), rng);
  nets.hyper().gamma = 0.0;
  Tensor r = randn(4, 1, rng);
  Tensor y = nets.critic_target(r, randn(4, 2, rng), randn(4, 3, rng), Tensor::Zero(4, 1), rng);
  CHECK(y == r);
}

TEST_CASE("critic target with constant critics and a fixed actor") {
  Rng rng(3);
  SacNets nets(2, 1, 1, tiny(), rng);
  const double c = 1.7, m = 0.3, ls = -0.5;
  set_constant_output(nets.target_params(), "q1", c);
  set_constant_output(nets.target_params(), "q2", c + 1.0);
  auto& actor = nets.actor_params();
  actor.at("actor.2.weight").param.mutable_value().setZero();
  actor.at("actor.2.bias").param.mutable_value() << m, ls;
  const double ell = -ls - 0.5 * std::log(2.0 * std::numbers::pi) -
                     std::log(1.0 - std::tanh(m) * std::tanh(m) + kSquashEps);
  Tensor r(1, 1);
  r << 0.4;
  Tensor y = nets.critic_target(r, randn(1, 2, rng), randn(1, 1, rng), Tensor::Zero(1, 1),
                                Tensor::Zero(1, 1));
  const double expect = 0.4 + 0.99 * (c - 0.2 * ell);
  CHECK(std::abs(y(0, 0) - expect) < 1e-12);
}

TEST_CASE("critic update at the fixed point leaves critics unchanged") {
  Rng rng(4);
  SacNets nets(2, 3, 2, tiny(), rng);
  set_constant_output(nets.critic_params(), "q1", 0.5);
  set_constant_output(nets.critic_params(), "q2", 0.5);
  const auto before = nets.critic_params().to_json(false);
  const double loss = nets.update_critics(randn(6, 2, rng), randn(6, 2, rng), randn(6, 3, rng),
                                          Tensor::Constant(6, 1, 0.5));
  CHECK(loss == 0.0);
  CHECK(nets.critic_params().to_json(false)["params"] == before["params"]);
}

TEST_CASE("critic loss decreases on a fixed batch") {
  Rng rng(5);
  SacNets nets(2, 3, 2, tiny(), rng);
  Tensor s = randn(32, 2, rng), a = uniform(32, 2, 1.0, rng), c = randn(32, 3, rng);
  Tensor y = randn(32, 1, rng);
  const double first = nets.update_critics(s, a, c, y);
  double last = first;
  for (int i = 0; i < 50; ++i) last = nets.update_critics(s, a, c, y);
  CHECK(last < 0.5 * first);
}

TEST_CASE("critic loss gradients match finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    SacNets nets(2, 3, 2, tiny(), rng);
    Tensor s = randn(4, 2, rng), a = uniform(4, 2, 1.0, rng), y = randn(4, 1, rng);
    Var cond = parameter(randn(4, 3, rng));
    auto build = [&] { return nets.critic_loss(s, a, cond, y); };
    auto rc = testing::check_param_gradient(cond, build);
    CHECK_MESSAGE(rc.ok, rc.worst);
    for (auto& e : nets.critic_params().entries()) {
      auto res = testing::check_param_gradient(e.param, build);
      CHECK_MESSAGE(res.ok, e.name << " " << res.worst);
    }
  }
}

TEST_CASE("actor gradients match finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    SacNets nets(2, 3, 2, tiny(), rng);
    // Undo the small last-layer init so the check exercises a non-trivial policy.
    for (auto& e : nets.actor_params().entries()) e.param.mutable_value() = randn(e.param.rows(), e.param.cols(), rng) * 0.5;
    Tensor s = randn(4, 2, rng), c = randn(4, 3, rng), noise = randn(4, 2, rng);
    auto build = [&] { return nets.actor_loss(s, c, noise); };
    for (auto& e : nets.actor_params().entries()) {
      auto res = testing::check_param_gradient(e.param, build);
      CHECK_MESSAGE(res.ok, e.name << " " << res.worst);
    }
  }
}

TEST_CASE("flat critic and zero temperature give a zero actor gradient") {
  Rng rng(8);
  SacHyper h = tiny();
  h.alpha = 1e-300;  // alpha must stay positive; this is numerically zero
  SacNets nets(2, 3, 2, h, rng);
  nets.hyper().alpha = 0.0;
  set_constant_output(nets.critic_params(), "q1", 3.0);
  set_constant_output(nets.critic_params(), "q2", 3.0);
  Var loss = nets.actor_loss(randn(8, 2, rng), randn(8, 3, rng), randn(8, 2, rng));
  auto g = gradients(loss, nets.actor_params());
  for (const auto& [name, t] : g) CHECK(t.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("actor trained against a quadratic critic settles at its optimum") {
  Rng rng(9);
  SacHyper h = tiny();
  h.lr = 3e-3;
  SacNets nets(1, 1, 1, h, rng);
  const double alpha = 0.01;
  Tensor s = Tensor::Zero(64, 1), c = Tensor::Zero(64, 1);
  for (int step = 0; step < 2000; ++step) {
    auto pi = nets.policy(constant(s), constant(c), randn(64, 1, rng));
    Var q = -square(pi.action - 0.5);
    Var loss = mean(alpha * pi.log_prob - q);
    nets.apply_actor_grads(gradients(loss, nets.actor_params()));
  }
  Rng eval(10);
  double mean_action = 0.0;
  for (int i = 0; i < 2000; ++i) {
    mean_action += nets.act(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), false, eval)(0);
  }
  mean_action /= 2000.0;
  CHECK(std::abs(mean_action - 0.5) < 0.05);
}

TEST_CASE("soft target updates") {
  Rng rng(11);
  SacNets nets(2, 1, 1, tiny(), rng);
  auto& online = nets.critic_params();
  auto& target = nets.target_params();
  for (auto& e : online.entries()) e.param.mutable_value().setConstant(2.0);
  for (auto& e : target.entries()) e.param.mutable_value().setZero();
  nets.soft_update_targets(0.0);
  for (auto& e : target.entries()) CHECK(e.param.value().isZero(0.0));
  nets.soft_update_targets(0.5);
  for (auto& e : target.entries()) CHECK((e.param.value().array() == 1.0).all());
  nets.soft_update_targets(1.0);
  for (auto& e : target.entries()) CHECK((e.param.value().array() == 2.0).all());
}

TEST_CASE("targets move only through soft updates") {
  Rng rng(12);
  SacNets nets(2, 3, 2, tiny(), rng);
  const auto before = nets.target_params().to_json(false);
  for (int i = 0; i < 5; ++i) {
    nets.update_critics(randn(8, 2, rng), randn(8, 2, rng), randn(8, 3, rng), randn(8, 1, rng));
    nets.update_actor(randn(8, 2, rng), randn(8, 3, rng), rng);
  }
  CHECK(nets.target_params().to_json(false) == before);
}

TEST_CASE("permuting conditioning rows permutes critic outputs") {
  Rng rng(13);
  SacNets nets(2, 3, 2, tiny(), rng);
  Tensor s = Tensor::Constant(5, 2, 0.3), a = Tensor::Constant(5, 2, -0.1);
  Tensor c = randn(5, 3, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  Tensor q = nets.q1(constant(s), constant(a), constant(c)).value();
  Tensor qp = nets.q1(constant(s), constant(a), constant(perm * c)).value();
  CHECK(qp == perm * q);
}

TEST_CASE("critic loss on a replayed batch is deterministic") {
  auto run = [] {
    Rng rng(14);
    SacNets nets(2, 3, 2, tiny(), rng);
    Tensor s = randn(8, 2, rng), a = randn(8, 2, rng), c = randn(8, 3, rng);
    Tensor y = nets.critic_target(randn(8, 1, rng), s, c, Tensor::Zero(8, 1), rng);
    return nets.update_critics(s, a, c, y);
  };
  CHECK(run() == run());
}

TEST_CASE("sac checkpoint round-trips") {
  Rng rng(15);
  SacNets a(2, 3, 2, tiny(), rng);
  a.update_critics(randn(8, 2, rng), randn(8, 2, rng), randn(8, 3, rng), randn(8, 1, rng));
  SacNets b(2, 3, 2, tiny(), rng);
  b.load_json(nlohmann::json::parse(a.to_json().dump()));
  CHECK(b.to_json() == a.to_json());
}
