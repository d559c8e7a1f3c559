// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "doctest.h"
#include "metamem/replay.hpp"

using namespace metamem::replay;

namespace {

// Transition i of a trajectory tagged by `tag`: s = (tag, i).
Trajectory make_traj(int tag, int len, int episode = 0) {
  Trajectory t;
  t.episode = episode;
  for (int i = 0; i < len; ++i) {
    Transition tr;
    tr.s = Eigen::Vector2d(tag, i);
    tr.a = Eigen::VectorXd::Constant(1, 0.5);
    tr.r = i;
    tr.s2 = Eigen::Vector2d(tag, i + 1);
    tr.done = i + 1 == len;
    t.steps.push_back(tr);
  }
  return t;
}

ReplayBuffer filled(MemoryStrategy s, int n_traj, int len) {
  ReplayBuffer b({s, 1000000, false});
  for (int k = 0; k < n_traj; ++k) b.insert(k % 5, make_traj(k, len));
  return b;
}

}  // namespace

TEST_CASE("short memory clears at iteration start, long memory keeps everything") {
  auto shortb = filled(MemoryStrategy::kShort, 10, 50);
  auto longb = filled(MemoryStrategy::kLong, 10, 50);
  CHECK(shortb.size() == 500);
  shortb.begin_iteration();
  longb.begin_iteration();
  CHECK(shortb.size() == 0);
  CHECK(longb.size() == 500);
  CHECK(shortb.iteration() == 1);
  CHECK(longb.iteration() == 1);
}

TEST_CASE("empty buffer stays empty across begin_iteration") {
  for (auto s : {MemoryStrategy::kLong, MemoryStrategy::kShort}) {
    ReplayBuffer b({s});
    b.begin_iteration();
    CHECK(b.size() == 0);
    CHECK(b.iteration() == 1);
  }
}

TEST_CASE("long memory evicts whole oldest trajectories") {
  ReplayBuffer b({MemoryStrategy::kLong, 100});
  b.insert(0, make_traj(0, 60));
  b.insert(1, make_traj(1, 60));
  CHECK(b.size() == 60);
  CHECK(b.num_trajectories() == 1);
  CHECK(b.trajectories(1).front().steps[0].s(0) == 1.0);
  CHECK_FALSE(b.has_task(0));
}

TEST_CASE("new task id grows the task set") {
  ReplayBuffer b;
  b.insert(3, make_traj(0, 5));
  CHECK(b.task_ids().size() == 1);
  b.insert(7, make_traj(1, 5));
  CHECK(b.task_ids().size() == 2);
  CHECK_THROWS_AS(b.insert(7, Trajectory{}), std::invalid_argument);
}

TEST_CASE("long memory never exceeds capacity") {
  ReplayBuffer b({MemoryStrategy::kLong, 500});
  Rng rng(3);
  std::uniform_int_distribution<int> len(1, 80);
  for (int i = 0; i < 1000; ++i) {
    b.insert(i % 7, make_traj(i, len(rng)));
    CHECK(b.size() <= 500);
  }
}

TEST_CASE("long memory under capacity preserves the insertion multiset") {
  auto b = filled(MemoryStrategy::kLong, 12, 7);
  std::multiset<std::pair<double, double>> stored, inserted;
  for (const auto& t : b.all_transitions()) stored.insert({t.s(0), t.s(1)});
  for (int k = 0; k < 12; ++k) {
    for (int i = 0; i < 7; ++i) inserted.insert({double(k), double(i)});
  }
  CHECK(stored == inserted);
}

TEST_CASE("rl batch of the full buffer is a permutation") {
  auto b = filled(MemoryStrategy::kLong, 4, 10);
  Rng rng(1);
  auto batch = b.sample_rl_batch(40, rng);
  std::set<std::pair<double, double>> seen;
  for (Eigen::Index i = 0; i < batch.size(); ++i) seen.insert({batch.s(i, 0), batch.s(i, 1)});
  CHECK(seen.size() == 40);
}

TEST_CASE("empty buffer sampling is an error") {
  ReplayBuffer b;
  Rng rng(0);
  CHECK_THROWS_AS(b.sample_rl_batch(4, rng), EmptyBufferError);
  CHECK_THROWS_AS(b.sample_context(0, 4, ContextMode::kRecent, rng), UnknownTaskError);
}

TEST_CASE("rl batches are uniform over tasks (chi-square)") {
  ReplayBuffer b;
  for (int task = 0; task < 10; ++task) b.insert(task, make_traj(task, 100));
  Rng rng(2024);
  std::vector<double> counts(10, 0.0);
  for (int draw = 0; draw < 1000; ++draw) {
    auto batch = b.sample_rl_batch(100, rng);
    for (int id : batch.task_ids) counts[static_cast<std::size_t>(id)] += 1.0;
  }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
  const double p = boost::math::gamma_q(4.5, chi2 / 2.0);
  CHECK(p > 0.001);
}

TEST_CASE("stratified sampling balances unequal tasks") {
  ReplayBuffer b({MemoryStrategy::kLong, 1000000, true});
  b.insert(0, make_traj(0, 10));
  b.insert(1, make_traj(1, 190));
  Rng rng(6);
  auto batch = b.sample_rl_batch(4000, rng);
  const auto zeros = std::count(batch.task_ids.begin(), batch.task_ids.end(), 0);
  CHECK(zeros > 1800);
  CHECK(zeros < 2200);
}

TEST_CASE("recent context is the insertion-order suffix") {
  ReplayBuffer b;
  b.insert(0, make_traj(0, 60));
  Rng rng(0);
  auto ctx = b.sample_context(0, 30, ContextMode::kRecent, rng);
  REQUIRE(ctx.size() == 30);
  for (int i = 0; i < 30; ++i) CHECK(ctx[static_cast<std::size_t>(i)].s(1) == 30 + i);
  b.insert(0, make_traj(1, 20));
  ctx = b.sample_context(0, 30, ContextMode::kRecent, rng);
  CHECK(ctx.front().s(0) == 0.0);
  CHECK(ctx.front().s(1) == 50.0);
  CHECK(ctx.back().s(0) == 1.0);
  CHECK(ctx.back().s(1) == 19.0);
  ctx = b.sample_context(0, 1000, ContextMode::kRecent, rng);
  CHECK(ctx.size() == 80);
}

TEST_CASE("uniform segments cover every admissible start") {
  ReplayBuffer b;
  b.insert(0, make_traj(0, 60));
  Rng rng(9);
  std::set<double> starts;
  for (int i = 0; i < 10000; ++i) {
    auto ctx = b.sample_context(0, 30, ContextMode::kUniformSegment, rng);
    REQUIRE(ctx.size() == 30);
    for (std::size_t k = 1; k < ctx.size(); ++k) CHECK(ctx[k].s(1) == ctx[k - 1].s(1) + 1);
    starts.insert(ctx.front().s(1));
  }
  CHECK(starts.size() == 31);
}

TEST_CASE("short memory batches only contain post-clear data") {
  ReplayBuffer b({MemoryStrategy::kShort});
  b.insert(0, make_traj(100, 20));
  b.begin_iteration();
  b.insert(0, make_traj(7, 20));
  Rng rng(1);
  auto batch = b.sample_rl_batch(64, rng);
  CHECK((batch.s.col(0).array() == 7.0).all());
}

TEST_CASE("sampling is reproducible under a fixed seed") {
  auto b = filled(MemoryStrategy::kLong, 10, 30);
  Rng r1(5), r2(5);
  auto x = b.sample_rl_batch(32, r1);
  auto y = b.sample_rl_batch(32, r2);
  CHECK(x.s == y.s);
  CHECK(x.task_ids == y.task_ids);
}

TEST_CASE("beliefs travel with batch rows") {
  ReplayBuffer b;
  auto t = make_traj(0, 5);
  for (int i = 0; i <= 5; ++i) t.beliefs.push_back(Eigen::VectorXd::Constant(3, i));
  b.insert(0, t);
  Rng rng(0);
  auto batch = b.sample_rl_batch(5, rng);
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(batch.belief(i, 0) == batch.s(i, 1));
    CHECK(batch.next_belief(i, 0) == batch.s(i, 1) + 1);
  }
}

TEST_CASE("jsonl persistence round-trips transitions") {
  std::vector<Trajectory> trajs = {make_traj(1, 4, 0), make_traj(1, 3, 1)};
  trajs[0].task_id = 2;
  trajs[1].task_id = 2;
  std::stringstream ss;
  write_jsonl(ss, trajs);
  std::string first_line;
  std::getline(std::stringstream(ss.str()), first_line);
  auto row = nlohmann::json::parse(first_line);
  for (const char* key : {"task_id", "episode", "t", "s", "a", "r", "s2", "done"}) {
    CHECK(row.contains(key));
  }
  auto back = read_jsonl(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].episode == 1);
  CHECK(back[1].steps.size() == 3);
  CHECK(back[0].steps[2].s2 == trajs[0].steps[2].s2);
}

TEST_CASE("buffer json snapshot restores contents") {
  auto b = filled(MemoryStrategy::kLong, 6, 9);
  b.begin_iteration();
  ReplayBuffer c;
  c.load_json(nlohmann::json::parse(b.to_json().dump()));
  CHECK(c.size() == b.size());
  CHECK(c.iteration() == b.iteration());
  Rng r1(4), r2(4);
  CHECK(b.sample_rl_batch(16, r1).s == c.sample_rl_batch(16, r2).s);
}
