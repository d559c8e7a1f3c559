// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "metamem/envs.hpp"
#include "support/reward_oracle.hpp"

using namespace metamem::envs;

namespace {

Task nav(Family f, double x, double y) { return Task{f, Eigen::Vector2d(x, y)}; }

EnvState at(Eigen::VectorXd obs) {
  EnvState s;
  s.obs = std::move(obs);
  return s;
}

}  // namespace

TEST_CASE("sample_tasks velmatch split sizes and range") {
  auto split = sample_tasks(Family::kVelMatch1D, 100, 20, 7);
  CHECK(split.train.size() == 100);
  CHECK(split.test.size() == 20);
  for (const auto* list : {&split.train, &split.test}) {
    for (const auto& t : *list) {
      CHECK(t.params(0) >= 0.0);
      CHECK(t.params(0) <= 3.0);
    }
  }
}

TEST_CASE("sample_tasks navigation goals lie on the upper unit semicircle") {
  for (Family f : {Family::kSparsePointRobot, Family::kSemiCircleNav}) {
    auto split = sample_tasks(f, 50, 10, 3);
    for (const auto& t : split.train) {
      CHECK(std::abs(t.params.norm() - 1.0) < 1e-12);
      CHECK(t.params(1) >= 0.0);
    }
  }
}

TEST_CASE("sample_tasks is deterministic and disjoint") {
  auto a = sample_tasks(Family::kSparsePointRobot, 10, 5, 42);
  auto b = sample_tasks(Family::kSparsePointRobot, 10, 5, 42);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].params == b.train[i].params);
  for (const auto& tr : a.train) {
    for (const auto& te : a.test) CHECK(tr.params != te.params);
  }
  CHECK_THROWS(sample_tasks(Family::kVelMatch1D, 0, 1, 1));
}

TEST_CASE("sparse point robot reward examples") {
  EnvConfig cfg;
  Task task = nav(Family::kSparsePointRobot, 1.0, 0.0);
  // Reach (0.95, 0.10) from one step away with action (0.5, 1.0).
  auto r = step_sparse_point_robot(at(Eigen::Vector2d(0.90, 0.0)),
                                   Eigen::Vector2d(0.5, 1.0), task, cfg);
  CHECK(r.next.obs(0) == doctest::Approx(0.95));
  CHECK(r.next.obs(1) == doctest::Approx(0.10));
  CHECK(r.reward == 1.0);
  r = step_sparse_point_robot(at(Eigen::Vector2d(1.0, 0.0)), Eigen::Vector2d(0, 0), task, cfg);
  CHECK(r.reward == 1.0);
  r = step_sparse_point_robot(at(Eigen::Vector2d(-1.0, 0.0)), Eigen::Vector2d(0, 0), task, cfg);
  CHECK(r.reward == 0.0);
}

TEST_CASE("sparse point robot clips actions") {
  EnvConfig cfg;
  auto r = step_sparse_point_robot(at(Eigen::Vector2d(0, 0)), Eigen::Vector2d(5.0, -3.0),
                                   nav(Family::kSparsePointRobot, 1, 0), cfg);
  CHECK(r.next.obs(0) == doctest::Approx(0.1));
  CHECK(r.next.obs(1) == doctest::Approx(-0.1));
}

TEST_CASE("semicircle reward examples") {
  EnvConfig cfg;
  Task task = nav(Family::kSemiCircleNav, 1.0, 0.0);
  Eigen::VectorXd s(4);
  s << 0.5, 0.5, 0.0, 0.0;
  auto r = step_semicircle_nav(at(s), Eigen::Vector2d(0, 0), task, cfg);
  CHECK(r.reward == doctest::Approx(-1.0));
  s << 1.0, 0.0, 0.0, 0.0;
  r = step_semicircle_nav(at(s), Eigen::Vector2d(0, 0), task, cfg);
  CHECK(r.reward == 0.0);
  CHECK(semicircle_reward<double>(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0),
                                  Eigen::Vector2d(1, 1)) == doctest::Approx(-0.2));
}

TEST_CASE("semicircle momentum dynamics") {
  EnvConfig cfg;
  Eigen::VectorXd s(4);
  s << 0.0, 0.0, 0.1, 0.0;
  auto r = step_semicircle_nav(at(s), Eigen::Vector2d(1, -1), nav(Family::kSemiCircleNav, 1, 0),
                               cfg);
  CHECK(r.next.obs(2) == doctest::Approx(0.8 * 0.1 + 0.2 * 0.15));
  CHECK(r.next.obs(3) == doctest::Approx(-0.2 * 0.15));
  CHECK(r.next.obs(0) == doctest::Approx(r.next.obs(2)));
}

TEST_CASE("velmatch reward examples") {
  CHECK(velmatch_reward<double>(1.0, 1.5, 0.0, 0.1) == doctest::Approx(-0.5));
  CHECK(velmatch_reward<double>(1.5, 1.5, 0.0, 0.1) == doctest::Approx(1.0));
  CHECK(velmatch_reward<double>(1.45, 1.5, 0.5, 0.1) == doctest::Approx(0.9375));
  EnvConfig cfg;
  Task task{Family::kVelMatch1D, Eigen::VectorXd::Constant(1, 1.5)};
  Eigen::VectorXd s(2);
  s << 0.0, 1.3;
  auto r = step_velmatch(at(s), Eigen::VectorXd::Constant(1, 0.5), task, cfg);
  CHECK(r.next.obs(1) == doctest::Approx(1.45));
  CHECK(r.reward == doctest::Approx(0.9375));
  s << 0.0, 3.9;
  r = step_velmatch(at(s), Eigen::VectorXd::Constant(1, 1.0), task, cfg);
  CHECK(r.next.obs(1) == 4.0);
}

TEST_CASE("reset start states") {
  EnvConfig cfg;
  Task vm{Family::kVelMatch1D, Eigen::VectorXd::Constant(1, 1.0)};
  CHECK(reset(vm, cfg, 1).obs.isZero(0.0));
  Task pt = nav(Family::kSparsePointRobot, 0, 1);
  CHECK(reset(pt, cfg, 9).obs == reset(pt, cfg, 9).obs);
  Rng rng(5);
  double max_r = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto s = reset(pt, cfg, rng);
    max_r = std::max(max_r, s.obs.head<2>().norm());
    CHECK(s.t == 0);
    CHECK_FALSE(s.done);
  }
  CHECK(max_r <= 0.1);
  CHECK(max_r > 0.09);
}

TEST_CASE("episodes last exactly the horizon") {
  EnvConfig cfg;
  Rng rng(2);
  for (Family f : {Family::kSparsePointRobot, Family::kSemiCircleNav, Family::kVelMatch1D}) {
    auto split = sample_tasks(f, 1, 1, 4);
    MetaEnv env(split.train[0], cfg);
    env.reset(rng);
    int steps = 0;
    bool done = false;
    while (!done) {
      done = env.step(Eigen::VectorXd::Zero(act_dim(f))).done;
      ++steps;
    }
    CHECK(steps == default_horizon(f));
    CHECK_THROWS(env.step(Eigen::VectorXd::Zero(act_dim(f))));
  }
}

TEST_CASE("step rewards agree with the scalar oracle on random triples") {
  EnvConfig cfg;
  Rng rng(31);
  for (Family f : {Family::kSparsePointRobot, Family::kSemiCircleNav, Family::kVelMatch1D}) {
    auto res = metamem::testing::reward_oracle_sweep(f, 1000, cfg, rng);
    CHECK(res.max_abs_err <= 1e-12);
    CHECK(res.count == 1000);
    CHECK(res.bounds_ok);
  }
}

TEST_CASE("dynamics are deterministic") {
  EnvConfig cfg;
  Task t = nav(Family::kSemiCircleNav, 0, 1);
  Eigen::VectorXd s(4);
  s << 0.1, 0.2, 0.03, -0.01;
  auto a = step(at(s), Eigen::Vector2d(0.3, 0.7), t, cfg);
  auto b = step(at(s), Eigen::Vector2d(0.3, 0.7), t, cfg);
  CHECK(a.next.obs == b.next.obs);
  CHECK(a.reward == b.reward);
}
