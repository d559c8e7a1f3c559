// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/replay.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <unordered_set>

namespace metamem::replay {

std::string to_string(MemoryStrategy s) {
  return s == MemoryStrategy::kLong ? "long" : "short";
}

MemoryStrategy strategy_from_string(const std::string& s) {
  if (s == "long") return MemoryStrategy::kLong;
  if (s == "short") return MemoryStrategy::kShort;
  throw std::invalid_argument("unknown memory strategy '" + s + "'");
}

Eigen::RowVectorXd context_row(const Transition& t) {
  Eigen::RowVectorXd row(t.s.size() + t.a.size() + 1 + t.s2.size());
  row << t.s.transpose(), t.a.transpose(), t.r, t.s2.transpose();
  return row;
}

Eigen::MatrixXd context_matrix(const std::vector<Transition>& steps) {
  if (steps.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(steps.size()), context_row(steps[0]).size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = context_row(steps[i]);
  }
  return m;
}

ReplayBuffer::ReplayBuffer(ReplayOptions options) : options_(options) {}

void ReplayBuffer::begin_iteration() {
  if (options_.strategy == MemoryStrategy::kShort) clear();
  ++iteration_;
}

void ReplayBuffer::clear() {
  tasks_.clear();
  order_.clear();
  total_ = 0;
  index_dirty_ = true;
}

void ReplayBuffer::insert(int task_id, Trajectory trajectory) {
  if (trajectory.steps.empty()) {
    throw std::invalid_argument("ReplayBuffer::insert: empty trajectory");
  }
  trajectory.task_id = task_id;
  total_ += trajectory.size();
  tasks_[task_id].push_back(std::move(trajectory));
  order_.push_back(Slot{task_id, next_seq_++});
  index_dirty_ = true;
  if (options_.strategy == MemoryStrategy::kLong) evict_to_capacity();
}

void ReplayBuffer::evict_to_capacity() {
  while (total_ > options_.capacity && !order_.empty()) {
    const Slot oldest = order_.front();
    order_.pop_front();
    auto it = tasks_.find(oldest.task_id);
    total_ -= it->second.front().size();
    it->second.pop_front();
    if (it->second.empty()) tasks_.erase(it);
  }
}

std::vector<int> ReplayBuffer::task_ids() const {
  std::vector<int> ids;
  for (const auto& [id, _] : tasks_) ids.push_back(id);
  return ids;
}

std::size_t ReplayBuffer::task_size(int task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) return 0;
  std::size_t n = 0;
  for (const auto& t : it->second) n += t.size();
  return n;
}

const std::deque<Trajectory>& ReplayBuffer::trajectories(int task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) {
    throw UnknownTaskError("no stored trajectories for task " + std::to_string(task_id));
  }
  return it->second;
}

void ReplayBuffer::rebuild_index() const {
  if (!index_dirty_) return;
  index_traj_.clear();
  index_cum_.clear();
  // Insertion order across tasks.
  std::map<int, std::size_t> cursor;
  std::size_t cum = 0;
  for (const Slot& slot : order_) {
    const auto& list = tasks_.at(slot.task_id);
    const Trajectory* t = &list[cursor[slot.task_id]++];
    index_traj_.push_back(t);
    index_cum_.push_back(cum);
    cum += t->size();
  }
  index_dirty_ = false;
}

std::vector<Transition> ReplayBuffer::all_transitions() const {
  rebuild_index();
  std::vector<Transition> out;
  out.reserve(total_);
  for (const Trajectory* t : index_traj_) {
    out.insert(out.end(), t->steps.begin(), t->steps.end());
  }
  return out;
}

namespace {

// k distinct indices from [0, n) in random order (Floyd's algorithm), or k
// draws with replacement when k > n.
std::vector<std::size_t> draw_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(k);
  if (k > n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    for (std::size_t i = 0; i < k; ++i) out.push_back(d(rng));
    return out;
  }
  std::unordered_set<std::size_t> chosen;
  for (std::size_t j = n - k; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> d(0, j);
    const std::size_t t = d(rng);
    if (chosen.insert(t).second) {
      out.push_back(t);
    } else {
      chosen.insert(j);
      out.push_back(j);
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace

std::vector<Trajectory*> ReplayBuffer::mutable_trajectories() {
  std::vector<Trajectory*> out;
  out.reserve(order_.size());
  for (auto& [id, trajs] : tasks_) {
    for (auto& t : trajs) out.push_back(&t);
  }
  return out;
}

RLBatch ReplayBuffer::gather(
    const std::vector<std::pair<const Trajectory*, std::size_t>>& rows) const {
  RLBatch b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Transition& first = rows.front().first->steps[rows.front().second];
  b.s.resize(n, first.s.size());
  b.a.resize(n, first.a.size());
  b.r.resize(n, 1);
  b.s2.resize(n, first.s2.size());
  b.done.resize(n, 1);
  const bool beliefs = !rows.front().first->beliefs.empty();
  if (beliefs) {
    const auto k = rows.front().first->beliefs.front().size();
    b.belief.resize(n, k);
    b.next_belief.resize(n, k);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [traj, idx] = rows[static_cast<std::size_t>(i)];
    const Transition& t = traj->steps[idx];
    b.s.row(i) = t.s.transpose();
    b.a.row(i) = t.a.transpose();
    b.r(i, 0) = t.r;
    b.s2.row(i) = t.s2.transpose();
    b.done(i, 0) = t.done ? 1.0 : 0.0;
    if (beliefs) {
      b.belief.row(i) = traj->beliefs[idx].transpose();
      b.next_belief.row(i) = traj->beliefs[idx + 1].transpose();
    }
    b.task_ids.push_back(traj->task_id);
  }
  return b;
}

RLBatch ReplayBuffer::sample_rl_batch(std::size_t batch_size, Rng& rng) const {
  if (total_ == 0) throw EmptyBufferError("sample_rl_batch: buffer is empty");
  std::vector<std::pair<const Trajectory*, std::size_t>> rows;
  rows.reserve(batch_size);
  if (options_.stratified) {
    const auto ids = task_ids();
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const auto& list = tasks_.at(ids[pick(rng)]);
      std::size_t n = 0;
      for (const auto& t : list) n += t.size();
      std::size_t g = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      for (const auto& t : list) {
        if (g < t.size()) {
          rows.emplace_back(&t, g);
          break;
        }
        g -= t.size();
      }
    }
    return gather(rows);
  }
  rebuild_index();
  for (std::size_t g : draw_indices(total_, batch_size, rng)) {
    const auto pos = static_cast<std::size_t>(
        std::upper_bound(index_cum_.begin(), index_cum_.end(), g) - index_cum_.begin() - 1);
    rows.emplace_back(index_traj_[pos], g - index_cum_[pos]);
  }
  return gather(rows);
}

RLBatch ReplayBuffer::sample_task_batch(int task_id, std::size_t batch_size, Rng& rng) const {
  const auto& list = trajectories(task_id);
  std::vector<std::size_t> cum;
  std::size_t n = 0;
  for (const auto& t : list) {
    cum.push_back(n);
    n += t.size();
  }
  std::vector<std::pair<const Trajectory*, std::size_t>> rows;
  rows.reserve(batch_size);
  for (std::size_t g : draw_indices(n, batch_size, rng)) {
    const auto pos =
        static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), g) - cum.begin() - 1);
    rows.emplace_back(&list[pos], g - cum[pos]);
  }
  return gather(rows);
}

std::vector<Transition> ReplayBuffer::sample_context(int task_id, std::size_t context_len,
                                                     ContextMode mode, Rng& rng) const {
  const auto& list = trajectories(task_id);
  std::vector<Transition> out;
  if (mode == ContextMode::kRecent) {
    // Walk newest to oldest, then restore chronological order.
    for (auto it = list.rbegin(); it != list.rend() && out.size() < context_len; ++it) {
      for (auto st = it->steps.rbegin(); st != it->steps.rend() && out.size() < context_len;
           ++st) {
        out.push_back(*st);
      }
    }
    std::reverse(out.begin(), out.end());
    return out;
  }
  const auto& traj =
      list[std::uniform_int_distribution<std::size_t>(0, list.size() - 1)(rng)];
  const std::size_t len = std::min(context_len, traj.size());
  const std::size_t start =
      std::uniform_int_distribution<std::size_t>(0, traj.size() - len)(rng);
  out.assign(traj.steps.begin() + static_cast<std::ptrdiff_t>(start),
             traj.steps.begin() + static_cast<std::ptrdiff_t>(start + len));
  return out;
}

std::vector<const Trajectory*> ReplayBuffer::sample_trajectories(std::size_t n,
                                                                 Rng& rng) const {
  if (total_ == 0) throw EmptyBufferError("sample_trajectories: buffer is empty");
  const auto ids = task_ids();
  std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
  std::vector<const Trajectory*> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& list = tasks_.at(ids[pick(rng)]);
    out.push_back(&list[std::uniform_int_distribution<std::size_t>(0, list.size() - 1)(rng)]);
  }
  return out;
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

nlohmann::json trajectory_json(const Trajectory& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"s", vec_json(s.s)}, {"a", vec_json(s.a)}, {"r", s.r},
                     {"s2", vec_json(s.s2)}, {"done", s.done}});
  }
  nlohmann::json beliefs = nlohmann::json::array();
  for (const auto& b : t.beliefs) beliefs.push_back(vec_json(b));
  return {{"task_id", t.task_id}, {"episode", t.episode}, {"steps", std::move(steps)},
          {"beliefs", std::move(beliefs)}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  t.task_id = j.at("task_id").get<int>();
  t.episode = j.at("episode").get<int>();
  for (const auto& s : j.at("steps")) {
    t.steps.push_back(Transition{json_vec(s.at("s")), json_vec(s.at("a")),
                                 s.at("r").get<double>(), json_vec(s.at("s2")),
                                 s.at("done").get<bool>()});
  }
  for (const auto& b : j.at("beliefs")) t.beliefs.push_back(json_vec(b));
  return t;
}

}  // namespace

nlohmann::json ReplayBuffer::to_json() const {
  rebuild_index();
  nlohmann::json trajs = nlohmann::json::array();
  for (const Trajectory* t : index_traj_) trajs.push_back(trajectory_json(*t));
  return {{"iteration", iteration_}, {"trajectories", std::move(trajs)}};
}

void ReplayBuffer::load_json(const nlohmann::json& j) {
  clear();
  for (const auto& t : j.at("trajectories")) {
    Trajectory traj = trajectory_from_json(t);
    const int id = traj.task_id;
    insert(id, std::move(traj));
  }
  iteration_ = j.at("iteration").get<std::uint64_t>();
}

void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  for (const auto& traj : trajectories) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& s = traj.steps[t];
      nlohmann::json row = {{"task_id", traj.task_id}, {"episode", traj.episode},
                            {"t", t},                  {"s", vec_json(s.s)},
                            {"a", vec_json(s.a)},      {"r", s.r},
                            {"s2", vec_json(s.s2)},    {"done", s.done}};
      out << row.dump() << '\n';
    }
  }
}

std::vector<Trajectory> read_jsonl(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line);
    const int task = row.at("task_id").get<int>();
    const int episode = row.at("episode").get<int>();
    const auto t = row.at("t").get<std::size_t>();
    if (out.empty() || out.back().task_id != task || out.back().episode != episode || t == 0) {
      out.push_back(Trajectory{task, episode, {}, {}});
    }
    out.back().steps.push_back(Transition{json_vec(row.at("s")), json_vec(row.at("a")),
                                          row.at("r").get<double>(), json_vec(row.at("s2")),
                                          row.at("done").get<bool>()});
  }
  return out;
}

}  // namespace metamem::replay
