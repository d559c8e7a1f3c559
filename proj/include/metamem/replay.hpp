// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace metamem::replay {

using Rng = std::mt19937_64;

enum class MemoryStrategy { kLong, kShort };

std::string to_string(MemoryStrategy s);
MemoryStrategy strategy_from_string(const std::string& s);

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s2;
  bool done = false;
};

// One contiguous rollout on a single task. `beliefs`, when present, holds
// the conditioning vector in force before each step plus the one after the
// last step (steps.size() + 1 rows).
struct Trajectory {
  int task_id = 0;
  int episode = 0;
  std::vector<Transition> steps;
  std::vector<Eigen::VectorXd> beliefs;

  std::size_t size() const { return steps.size(); }
};

// (s, a, r, s') flattened into one row.
Eigen::RowVectorXd context_row(const Transition& t);
Eigen::MatrixXd context_matrix(const std::vector<Transition>& steps);

struct RLBatch {
  Eigen::MatrixXd s, a, r, s2, done;  // r and done are n x 1
  Eigen::MatrixXd belief, next_belief;  // empty unless trajectories carry beliefs
  std::vector<int> task_ids;

  Eigen::Index size() const { return s.rows(); }
};

enum class ContextMode { kRecent, kUniformSegment };

class EmptyBufferError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownTaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReplayOptions {
  MemoryStrategy strategy = MemoryStrategy::kLong;
  std::size_t capacity = 1000000;  // transitions; enforced for LongMemory
  bool stratified = false;         // sample tasks uniformly, then transitions
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayOptions options = {});

  // ShortMemory drops everything; both strategies bump the iteration counter.
  void begin_iteration();
  void insert(int task_id, Trajectory trajectory);
  void clear();

  RLBatch sample_rl_batch(std::size_t batch_size, Rng& rng) const;
  RLBatch sample_task_batch(int task_id, std::size_t batch_size, Rng& rng) const;
  std::vector<Transition> sample_context(int task_id, std::size_t context_len,
                                         ContextMode mode, Rng& rng) const;
  // Whole trajectories: task uniform over stored tasks, then trajectory
  // uniform within the task.
  std::vector<const Trajectory*> sample_trajectories(std::size_t n, Rng& rng) const;

  std::size_t size() const { return total_; }
  std::size_t num_trajectories() const { return order_.size(); }
  std::vector<int> task_ids() const;
  bool has_task(int task_id) const { return tasks_.count(task_id) != 0; }
  std::size_t task_size(int task_id) const;
  const std::deque<Trajectory>& trajectories(int task_id) const;
  std::uint64_t iteration() const { return iteration_; }
  const ReplayOptions& options() const { return options_; }

  // Stored trajectories, for rewriting their belief annotations in place.
  std::vector<Trajectory*> mutable_trajectories();

  // Every stored transition in insertion order.
  std::vector<Transition> all_transitions() const;

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  struct Slot {
    int task_id;
    std::uint64_t seq;
  };

  void evict_to_capacity();
  void rebuild_index() const;
  RLBatch gather(const std::vector<std::pair<const Trajectory*, std::size_t>>& rows) const;

  ReplayOptions options_;
  std::map<int, std::deque<Trajectory>> tasks_;
  std::deque<Slot> order_;
  std::size_t total_ = 0;
  std::uint64_t iteration_ = 0;
  std::uint64_t next_seq_ = 0;

  // Flattened view for uniform transition sampling, rebuilt lazily.
  mutable bool index_dirty_ = true;
  mutable std::vector<const Trajectory*> index_traj_;
  mutable std::vector<std::size_t> index_cum_;
};

// Newline-delimited JSON, one object per transition with keys
// {task_id, episode, t, s, a, r, s2, done}.
void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_jsonl(std::istream& in);

}  // namespace metamem::replay
