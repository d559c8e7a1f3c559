// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration.
//
// Files are INI text: `[section]` headers followed by `key = value` lines.
// Values resolve in this order, later sources winning:
//   1. built-in defaults
//   2. the config file
//   3. smoke-scale overrides (`quick = true` in the file or `--quick`)
//   4. explicit command-line flags
// Unknown sections or keys are rejected, and so are values that do not parse.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "metamem/agent.hpp"
#include "metamem/envs.hpp"
#include "metamem/pearl.hpp"
#include "metamem/replay.hpp"
#include "metamem/sac.hpp"
#include "metamem/varibad.hpp"

namespace metamem {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Algorithm { kPearl, kVaribad };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct ExperimentConfig {
  // [experiment]
  envs::Family env = envs::Family::kSparsePointRobot;
  Algorithm algo = Algorithm::kVaribad;
  replay::MemoryStrategy strategy = replay::MemoryStrategy::kShort;
  std::vector<std::uint64_t> seeds{0};
  std::string out = "runs";
  bool quick = false;

  // [training]
  int iterations = 500;
  int n_train_tasks = 40;
  std::uint64_t task_seed = 1234;
  int eval_interval = 10;
  int eval_tasks = 8;
  int eval_episodes = 5;  // return averaged over episodes 2.. of each rollout
  int checkpoint_interval = 50;
  TrainSchedule schedule;

  // [env]
  envs::EnvConfig env_cfg;

  // [replay]
  std::size_t capacity = 1000000;
  bool stratified = false;
  bool clear_encoder_only = false;

  // [sac], [pearl], [varibad]
  sac::SacHyper sac;
  pearl::PearlHyper pearl;
  varibad::VaribadHyper varibad;

  // [testing]
  int test_goals = 20;
  int test_runs = 40;
  int test_episodes = 5;
  int trajectory_runs = 2;  // runs per goal whose trajectories are dumped

  // [oracle]
  double oracle_noise = 0.1;
  int oracle_runs = 40;

  // [compare]
  int bootstrap_resamples = 1000;
  double ci_level = 0.95;
  int final_window = 5;  // trailing eval points forming the final training return

  // [projection]
  std::string projection_method = "tsne";
  double tsne_perplexity = 30.0;
  int tsne_iterations = 1000;

  // Apply the smoke-scale overrides.
  void apply_quick();
  // Throws ConfigError naming the first offending key.
  void validate() const;

  // Canonical INI text with every key; parses back to an equal config.
  std::string to_ini() const;
  bool operator==(const ExperimentConfig& o) const { return to_ini() == o.to_ini(); }

  // Directory name {env}-{algo}-{strategy}-{seed}.
  std::string run_name(std::uint64_t seed) const;
  // Settings that fix parameter shapes, used to match checkpoints.
  std::string architecture_signature() const;
};

// Parse INI text over the defaults. `quick` in the text applies the smoke
// overrides before returning.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Set one key as if it appeared under `[section]` in a file.
void set_config_value(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                      const std::string& value);

}  // namespace metamem
