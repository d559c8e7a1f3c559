// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end pipeline stages behind the command-line tool. Every stage writes
// into a run directory named {env}-{algo}-{strategy}-{seed} below `out`.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "metamem/agent.hpp"
#include "metamem/analysis.hpp"
#include "metamem/config.hpp"

namespace metamem {

namespace fs = std::filesystem;

// A non-finite value stopped training. The state at the failure point has
// been written to `checkpoint`.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, fs::path checkpoint)
      : std::runtime_error(what), checkpoint_(std::move(checkpoint)) {}
  const fs::path& checkpoint() const { return checkpoint_; }

 private:
  fs::path checkpoint_;
};

struct RunArtifacts {
  fs::path dir;

  fs::path config() const { return dir / "config.ini"; }
  fs::path metrics() const { return dir / "metrics.csv"; }
  // Agent parameters and optimiser state.
  fs::path checkpoint() const { return dir / "checkpoint.json"; }
  // Replay contents and generator state needed to continue training.
  fs::path resume_state() const { return dir / "resume.json"; }
  fs::path failure_checkpoint() const { return dir / "failure_checkpoint.json"; }
  fs::path embeddings() const { return dir / "embeddings.csv"; }
  fs::path adaptation() const { return dir / "adaptation.csv"; }
  fs::path curve() const { return dir / "curve.csv"; }
  fs::path trajectories() const { return dir / "trajectories"; }
  fs::path oracle() const { return dir / "oracle.csv"; }
  fs::path oracle_curve() const { return dir / "oracle_curve.csv"; }
  fs::path agreement() const { return dir / "agreement.csv"; }
};

RunArtifacts run_artifacts(const ExperimentConfig& cfg, std::uint64_t seed);

// Generator keyed by the run seed plus stage-specific tags.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

// Train tasks, then held-out tasks; the held-out list is long enough for both
// the training evaluation and meta-testing.
envs::TaskSplit experiment_tasks(const ExperimentConfig& cfg);

std::unique_ptr<MetaAgent> make_agent(const ExperimentConfig& cfg, Rng& rng);

// Mean per-episode return of `episodes`-episode adaptations, one per task.
double evaluate_agent(const MetaAgent& agent, const std::vector<envs::Task>& tasks,
                      const envs::EnvConfig& env_cfg, int episodes, Rng& rng);

struct TrainOptions {
  std::ostream* log = nullptr;
  // Stop (as if interrupted) once this many iterations have completed in
  // total; negative runs to the configured count.
  int stop_after = -1;
  bool resume = true;  // continue from resume.json when present
};

RunArtifacts run_meta_training(const ExperimentConfig& cfg, std::uint64_t seed,
                               const TrainOptions& opt = {});

const std::vector<std::string>& metrics_header();

// Loads checkpoint.json from a run directory into a fresh agent built from
// `cfg`. Throws ConfigError when the checkpoint does not match `cfg`.
std::unique_ptr<MetaAgent> load_agent(const ExperimentConfig& cfg, const fs::path& run_dir);

struct TestOutputs {
  Eigen::MatrixXd returns;  // (goal, run) rows by episode columns
  analysis::EmbeddingTable embeddings;
  struct Dump {
    int goal = 0;
    int run = 0;
    std::vector<replay::Trajectory> episodes;
  };
  std::vector<Dump> dumps;  // runs below trajectory_runs for every goal
};

// Adaptation on the held-out goals with the agent from `run_dir` (the
// configured run directory when empty).
TestOutputs run_meta_testing(const ExperimentConfig& cfg, std::uint64_t seed,
                             const fs::path& run_dir = {});

// Same protocol for an agent already in memory; writes nothing.
TestOutputs meta_test_agent(const MetaAgent& agent, const ExperimentConfig& cfg,
                            std::uint64_t seed);

// Header task_id,run_id,return_1..return_E.
void write_returns_csv(std::ostream& out, const Eigen::MatrixXd& returns, int runs_per_goal);
Eigen::MatrixXd read_returns_csv(std::istream& in);

struct OracleOutputs {
  Eigen::MatrixXd returns;  // (goal, run) rows by episode columns
  double agreement = -1.0;  // negative when no agent was supplied
  std::string probe;
};

// Posterior-greedy benchmark on the held-out goals. With an agent, also the
// fraction of adaptation runs whose latent probe picks the exact-posterior
// argmax. Navigation families only.
OracleOutputs oracle_eval(const ExperimentConfig& cfg, std::uint64_t seed,
                          const MetaAgent* agent = nullptr, const fs::path& out_dir = {});

struct CompareRow {
  std::string metric;  // "adaptation" or "final_train_return"
  int episode = 0;     // 0 for the training metric
  double mean_a = 0.0;
  double mean_b = 0.0;
  analysis::BootstrapCi delta;  // a minus b
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

struct SummaryRow {
  std::string arm;
  std::string run;
  std::uint64_t seed = 0;
  int episode = 0;
  double mean_return = 0.0;
};

struct Comparison {
  std::string label_a;
  std::string label_b;
  std::vector<CompareRow> rows;
  std::vector<SummaryRow> summary;
  std::string text;
};

// Per-episode adaptation deltas and the final-training-return delta between
// two groups of run directories. Throws ConfigError when the directories
// disagree on env or algorithm.
Comparison compare_runs(const std::vector<fs::path>& arm_a, const std::vector<fs::path>& arm_b,
                        int resamples, double level, int final_window);

// Splits directories into arms by memory strategy (short first).
std::pair<std::vector<fs::path>, std::vector<fs::path>> arms_by_strategy(
    const std::vector<fs::path>& dirs);

// comparison.csv, comparison_summary.csv and comparison.txt under `out_dir`.
void write_comparison(const Comparison& c, const fs::path& out_dir);

// Mean of the last `window` finite eval_return values in a metrics CSV.
double final_train_return(const fs::path& metrics_csv, int window);

struct ProjectionOutputs {
  Eigen::MatrixXd points;
  std::vector<std::string> warnings;
  double silhouette = 0.0;  // on the projected points, labelled by task
};

// PCA or t-SNE of the latent means in an embeddings CSV; writes the table
// back with p1,p2 appended.
ProjectionOutputs project_embeddings(const fs::path& input, const fs::path& output,
                                     const std::string& method, double perplexity,
                                     int iterations, std::uint64_t seed);

}  // namespace metamem
