// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

// metamem: train, test, compare, oracle and project subcommands.
// Exit status 0 on success, 2 on configuration errors, 3 on numeric failure.

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metamem/experiment.hpp"
#include "metamem/nn/autodiff.hpp"

namespace {

using namespace metamem;

constexpr int kConfigError = 2;
constexpr int kNumericFailure = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string strategy;
  std::string algo;
  std::string env;
  std::string out;
  bool quick = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "INI config file");
    app->add_option("--seed", seed, "single seed, replacing the configured list");
    app->add_option("--strategy", strategy, "memory strategy")
        ->check(CLI::IsMember({"long", "short"}));
    app->add_option("--algo", algo, "algorithm")->check(CLI::IsMember({"pearl", "varibad"}));
    app->add_option("--env", env, "environment family")
        ->check(CLI::IsMember({"point", "semicircle", "velmatch"}));
    app->add_option("--out", out, "output root directory");
    app->add_flag("--quick", quick, "smoke-scale overrides");
  }

  // Defaults, then the file, then --quick, then the remaining flags.
  ExperimentConfig resolve() const {
    ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : load_config(config);
    if (quick) cfg.apply_quick();
    if (!env.empty()) set_config_value(cfg, "experiment", "env", env);
    if (!algo.empty()) set_config_value(cfg, "experiment", "algo", algo);
    if (!strategy.empty()) set_config_value(cfg, "experiment", "strategy", strategy);
    if (!out.empty()) cfg.out = out;
    if (seed) cfg.seeds = {*seed};
    cfg.validate();
    return cfg;
  }
};

int cmd_train(const CommonFlags& f) {
  const auto cfg = f.resolve();
  for (auto seed : cfg.seeds) {
    TrainOptions opt;
    opt.log = &std::cerr;
    const auto art = run_meta_training(cfg, seed, opt);
    std::cout << "trained " << art.dir.string() << "\n";
  }
  return 0;
}

int cmd_test(const CommonFlags& f, const std::string& run) {
  const auto cfg = f.resolve();
  for (auto seed : cfg.seeds) {
    const fs::path dir = run.empty() ? run_artifacts(cfg, seed).dir : fs::path(run);
    const auto res = run_meta_testing(cfg, seed, dir);
    const auto curve = analysis::adaptation_curve(res.returns);
    std::cout << dir.string() << ": " << res.embeddings.rows() << " embeddings, mean return by episode";
    for (double m : curve.mean) std::cout << " " << m;
    std::cout << "\n";
    if (!run.empty()) break;
  }
  return 0;
}

int cmd_compare(const CommonFlags& f, const std::vector<std::string>& dirs,
                const std::vector<std::string>& arm_a, const std::vector<std::string>& arm_b) {
  const auto cfg = f.resolve();
  std::vector<fs::path> a(arm_a.begin(), arm_a.end());
  std::vector<fs::path> b(arm_b.begin(), arm_b.end());
  if (!dirs.empty()) {
    if (!a.empty() || !b.empty()) throw ConfigError("compare: use either run dirs or --arm-a/--arm-b");
    std::tie(a, b) = arms_by_strategy(std::vector<fs::path>(dirs.begin(), dirs.end()));
  }
  const auto c = compare_runs(a, b, cfg.bootstrap_resamples, cfg.ci_level, cfg.final_window);
  const fs::path out_dir = fs::path(cfg.out) / "comparison";
  write_comparison(c, out_dir);
  std::cout << c.text << "written to " << out_dir.string() << "\n";
  return 0;
}

int cmd_oracle(const CommonFlags& f, const std::string& run) {
  const auto cfg = f.resolve();
  for (auto seed : cfg.seeds) {
    std::unique_ptr<MetaAgent> agent;
    fs::path dir;
    if (!run.empty()) {
      dir = run;
      agent = load_agent(cfg, dir);
    } else {
      dir = fs::path(cfg.out) / (envs::to_string(cfg.env) + "-oracle-" + std::to_string(seed));
    }
    const auto res = oracle_eval(cfg, seed, agent.get(), dir);
    const auto curve = analysis::adaptation_curve(res.returns);
    std::cout << dir.string() << ": oracle mean return by episode";
    for (double m : curve.mean) std::cout << " " << m;
    if (agent) std::cout << "; " << res.probe << " agreement " << res.agreement;
    std::cout << "\n";
    if (!run.empty()) break;
  }
  return 0;
}

int cmd_project(const CommonFlags& f, const std::string& input, std::string output,
                std::string method) {
  const auto cfg = f.resolve();
  if (method.empty()) method = cfg.projection_method;
  fs::path in = input.empty() ? run_artifacts(cfg, cfg.seeds.front()).embeddings() : fs::path(input);
  if (output.empty()) output = (in.parent_path() / ("projection_" + method + ".csv")).string();
  const auto res = project_embeddings(in, output, method, cfg.tsne_perplexity,
                                      cfg.tsne_iterations, cfg.seeds.front());
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << output << ": " << res.points.rows() << " points, silhouette " << res.silhouette
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-RL memory strategy experiments"};
  app.require_subcommand(1);

  CommonFlags train_f, test_f, compare_f, oracle_f, project_f;
  auto* train = app.add_subcommand("train", "meta-train one run per seed");
  train_f.attach(train);

  auto* test = app.add_subcommand("test", "meta-test a trained run");
  test_f.attach(test);
  std::string test_run;
  test->add_option("--run", test_run, "run directory (default: derived from the config)");

  auto* compare = app.add_subcommand("compare", "compare memory strategies across runs");
  compare_f.attach(compare);
  std::vector<std::string> dirs, arm_a, arm_b;
  compare->add_option("dirs", dirs, "run directories, split into arms by strategy");
  compare->add_option("--arm-a", arm_a, "explicit first arm");
  compare->add_option("--arm-b", arm_b, "explicit second arm");

  auto* orc = app.add_subcommand("oracle", "posterior-greedy benchmark");
  oracle_f.attach(orc);
  std::string oracle_run;
  orc->add_option("--run", oracle_run, "trained run whose latents are scored against the oracle");

  auto* project = app.add_subcommand("project", "PCA or t-SNE of an embeddings CSV");
  project_f.attach(project);
  std::string input, output, method;
  project->add_option("--input", input, "embeddings CSV");
  project->add_option("--output", output, "projection CSV");
  project->add_option("--method", method, "pca or tsne")->check(CLI::IsMember({"pca", "tsne"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*train) return cmd_train(train_f);
    if (*test) return cmd_test(test_f, test_run);
    if (*compare) return cmd_compare(compare_f, dirs, arm_a, arm_b);
    if (*orc) return cmd_oracle(oracle_f, oracle_run);
    if (*project) return cmd_project(project_f, input, output, method);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n  state saved to "
              << e.checkpoint().string() << "\n";
    return kNumericFailure;
  } catch (const nn::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
