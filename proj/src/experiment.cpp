// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "metamem/belief_oracle.hpp"
#include "metamem/nn/autodiff.hpp"
#include "metamem/pearl.hpp"
#include "metamem/varibad.hpp"

namespace metamem {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write through a temporary so a crash never leaves a truncated file.
void write_file_atomic(const fs::path& p, const std::string& text) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, p);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream s(state);
  s >> rng;
  if (!s) throw ConfigError("resume state holds a malformed generator state");
}

std::vector<envs::Task> first_n(const std::vector<envs::Task>& v, int n) {
  return {v.begin(), v.begin() + std::min<std::ptrdiff_t>(n, static_cast<std::ptrdiff_t>(v.size()))};
}

ExperimentConfig single_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig c = cfg;
  c.seeds = {seed};
  return c;
}

std::string metrics_row(const IterationMetrics& m, long total_steps, std::size_t encoder_start) {
  std::ostringstream s;
  s << m.iteration << "," << m.env_steps << "," << total_steps << "," << fmt(m.train_return) << ","
    << fmt(m.critic_loss) << "," << fmt(m.actor_loss) << "," << fmt(m.entropy) << ","
    << fmt(m.encoder_loss) << "," << m.buffer_at_start << "," << encoder_start << ","
    << m.buffer_after_collect << "," << fmt(m.eval_return) << "\n";
  return s.str();
}

std::string header_line(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out + "\n";
}

// Keep the header and rows for iterations below `keep`.
void truncate_metrics(const fs::path& path, int keep) {
  std::string kept = header_line(metrics_header());
  if (fs::exists(path)) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoi(line.substr(0, line.find(','))) < keep) kept += line + "\n";
    }
  }
  write_file_atomic(path, kept);
}

void check_finite(const IterationMetrics& m) {
  for (double v : {m.train_return, m.critic_loss, m.actor_loss, m.entropy, m.encoder_loss}) {
    if (!std::isfinite(v)) throw nn::NumericError("train_iteration", "non-finite metric");
  }
}

}  // namespace

RunArtifacts run_artifacts(const ExperimentConfig& cfg, std::uint64_t seed) {
  return {fs::path(cfg.out) / cfg.run_name(seed)};
}

Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

envs::TaskSplit experiment_tasks(const ExperimentConfig& cfg) {
  return envs::sample_tasks(cfg.env, cfg.n_train_tasks, std::max(cfg.test_goals, cfg.eval_tasks),
                            cfg.task_seed);
}

std::unique_ptr<MetaAgent> make_agent(const ExperimentConfig& cfg, Rng& rng) {
  const int od = envs::obs_dim(cfg.env);
  const int ad = envs::act_dim(cfg.env);
  if (cfg.algo == Algorithm::kPearl) {
    return std::make_unique<pearl::PearlAgent>(od, ad, cfg.pearl, cfg.sac, cfg.schedule, rng);
  }
  return std::make_unique<varibad::VaribadAgent>(od, ad, cfg.varibad, cfg.sac, cfg.schedule, rng);
}

double evaluate_agent(const MetaAgent& agent, const std::vector<envs::Task>& tasks,
                      const envs::EnvConfig& env_cfg, int episodes, Rng& rng) {
  double total = 0.0;
  long count = 0;
  for (const auto& task : tasks) {
    for (double r : agent.adapt(task, env_cfg, episodes, rng).returns) {
      total += r;
      ++count;
    }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> h{
      "iteration",     "env_steps",          "total_env_steps",         "train_return",
      "critic_loss",   "actor_loss",         "entropy",                 "encoder_loss",
      "buffer_at_start", "encoder_buffer_at_start", "buffer_after_collect", "eval_return"};
  return h;
}

RunArtifacts run_meta_training(const ExperimentConfig& base, std::uint64_t seed,
                               const TrainOptions& opt) {
  const ExperimentConfig cfg = single_seed(base, seed);
  cfg.validate();
  const RunArtifacts art = run_artifacts(cfg, seed);
  fs::create_directories(art.dir);
  write_file_atomic(art.config(), cfg.to_ini());

  const auto split = experiment_tasks(cfg);
  const auto eval_tasks = first_n(split.test, cfg.eval_tasks);

  Rng rng(seed);
  auto agent = make_agent(cfg, rng);
  AgentMemory memory(cfg.strategy, cfg.capacity, cfg.clear_encoder_only, cfg.stratified);
  int start = 0;
  long total_steps = 0;

  if (opt.resume && fs::exists(art.resume_state()) && fs::exists(art.checkpoint())) {
    const auto ck = nlohmann::json::parse(read_file(art.checkpoint()));
    const auto rs = nlohmann::json::parse(read_file(art.resume_state()));
    if (ck.at("signature").get<std::string>() != cfg.architecture_signature()) {
      throw ConfigError("existing checkpoint in " + art.dir.string() +
                        " does not match the configured architecture");
    }
    if (ck.at("iterations_done") != rs.at("iterations_done")) {
      throw ConfigError("checkpoint and resume state in " + art.dir.string() + " disagree");
    }
    agent->restore(ck.at("agent"));
    memory.load_json(rs.at("memory"));
    set_rng_state(rng, rs.at("rng").get<std::string>());
    start = rs.at("iterations_done").get<int>();
    total_steps = rs.at("total_env_steps").get<long>();
  }
  truncate_metrics(art.metrics(), start);

  auto save = [&](int done) {
    nlohmann::json ck{{"signature", cfg.architecture_signature()},
                      {"config", cfg.to_ini()},
                      {"iterations_done", done},
                      {"agent", agent->checkpoint()}};
    nlohmann::json rs{{"iterations_done", done},
                      {"total_env_steps", total_steps},
                      {"rng", rng_state(rng)},
                      {"memory", memory.to_json()}};
    write_file_atomic(art.checkpoint(), ck.dump());
    write_file_atomic(art.resume_state(), rs.dump());
  };

  const int stop = opt.stop_after >= 0 ? std::min(opt.stop_after, cfg.iterations) : cfg.iterations;
  std::ofstream metrics(art.metrics(), std::ios::binary | std::ios::app);
  for (int it = start; it < stop; ++it) {
    IterationMetrics m;
    std::size_t encoder_start = 0;
    try {
      memory.begin_iteration();
      const std::size_t policy_start = memory.policy().size();
      encoder_start = memory.encoder().size();
      m = agent->train_iteration(memory, split.train, cfg.env_cfg, rng);
      m.buffer_at_start = policy_start;
      check_finite(m);
      if ((it + 1) % cfg.eval_interval == 0 || it + 1 == cfg.iterations) {
        Rng eval_rng = derive_rng(seed, {1, static_cast<std::uint64_t>(it)});
        m.eval_return = evaluate_agent(*agent, eval_tasks, cfg.env_cfg, cfg.eval_episodes, eval_rng);
        if (!std::isfinite(m.eval_return)) throw nn::NumericError("evaluate", "non-finite return");
      }
    } catch (const nn::NumericError& e) {
      nlohmann::json fail{{"iteration", it},
                          {"error", e.what()},
                          {"config", cfg.to_ini()},
                          {"agent", agent->checkpoint()}};
      write_file_atomic(art.failure_checkpoint(), fail.dump());
      throw NumericFailure("numeric failure in " + art.dir.string() + " at iteration " +
                               std::to_string(it) + ": " + e.what(),
                           art.failure_checkpoint());
    }
    m.iteration = it;
    total_steps += m.env_steps;
    metrics << metrics_row(m, total_steps, encoder_start);
    metrics.flush();
    if (opt.log != nullptr) {
      *opt.log << cfg.run_name(seed) << " iter " << it << " return " << m.train_return
               << " critic " << m.critic_loss << " encoder " << m.encoder_loss;
      if (std::isfinite(m.eval_return)) *opt.log << " eval " << m.eval_return;
      *opt.log << "\n";
    }
    if ((it + 1) % cfg.checkpoint_interval == 0 || it + 1 == stop) save(it + 1);
  }
  if (start >= stop && !fs::exists(art.checkpoint())) save(start);
  return art;
}

std::unique_ptr<MetaAgent> load_agent(const ExperimentConfig& cfg, const fs::path& run_dir) {
  const fs::path path = run_dir / "checkpoint.json";
  if (!fs::exists(path)) throw ConfigError("no checkpoint at " + path.string());
  const auto ck = nlohmann::json::parse(read_file(path));
  const auto stored = ck.at("signature").get<std::string>();
  if (stored != cfg.architecture_signature()) {
    throw ConfigError("checkpoint/config mismatch: checkpoint has '" + stored +
                      "', config expects '" + cfg.architecture_signature() + "'");
  }
  Rng rng(0);
  auto agent = make_agent(cfg, rng);
  agent->restore(ck.at("agent"));
  return agent;
}

TestOutputs meta_test_agent(const MetaAgent& agent, const ExperimentConfig& cfg,
                            std::uint64_t seed) {
  const auto goals = first_n(experiment_tasks(cfg).test, cfg.test_goals);
  TestOutputs out;
  out.returns.resize(static_cast<Eigen::Index>(goals.size()) * cfg.test_runs, cfg.test_episodes);
  out.embeddings.latent_dim = agent.latent_dim();
  for (int g = 0; g < static_cast<int>(goals.size()); ++g) {
    for (int r = 0; r < cfg.test_runs; ++r) {
      Rng rng = derive_rng(seed, {2, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(r)});
      AdaptResult res = agent.adapt(goals[static_cast<std::size_t>(g)], cfg.env_cfg,
                                    cfg.test_episodes, rng);
      const Eigen::Index row = static_cast<Eigen::Index>(g) * cfg.test_runs + r;
      for (int e = 0; e < cfg.test_episodes; ++e) {
        out.returns(row, e) = res.returns[static_cast<std::size_t>(e)];
      }
      const Eigen::VectorXd& z = res.embeddings.back();
      out.embeddings.has_variance = z.size() == 2 * agent.latent_dim();
      out.embeddings.append(g, r, cfg.test_episodes, z);
      if (r < cfg.trajectory_runs) out.dumps.push_back({g, r, std::move(res.trajectories)});
    }
  }
  return out;
}

void write_returns_csv(std::ostream& out, const Eigen::MatrixXd& returns, int runs_per_goal) {
  out << "task_id,run_id";
  for (Eigen::Index e = 0; e < returns.cols(); ++e) out << ",return_" << e + 1;
  out << "\n";
  for (Eigen::Index i = 0; i < returns.rows(); ++i) {
    out << i / runs_per_goal << "," << i % runs_per_goal;
    for (Eigen::Index e = 0; e < returns.cols(); ++e) out << "," << fmt(returns(i, e));
    out << "\n";
  }
}

Eigen::MatrixXd read_returns_csv(std::istream& in) {
  const auto t = analysis::read_csv(in);
  std::vector<int> cols;
  for (int e = 1;; ++e) {
    const int c = t.column("return_" + std::to_string(e));
    if (c < 0) break;
    cols.push_back(c);
  }
  if (cols.empty()) throw ConfigError("returns table has no return_1 column");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t e = 0; e < cols.size(); ++e) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e)) =
          std::stod(t.rows[i][static_cast<std::size_t>(cols[e])]);
    }
  }
  return m;
}

TestOutputs run_meta_testing(const ExperimentConfig& base, std::uint64_t seed,
                             const fs::path& run_dir) {
  const ExperimentConfig cfg = single_seed(base, seed);
  cfg.validate();
  const RunArtifacts art = run_dir.empty() ? run_artifacts(cfg, seed) : RunArtifacts{run_dir};
  auto agent = load_agent(cfg, art.dir);
  TestOutputs out = meta_test_agent(*agent, cfg, seed);

  {
    auto f = open_out(art.adaptation());
    write_returns_csv(f, out.returns, cfg.test_runs);
  }
  {
    auto f = open_out(art.embeddings());
    analysis::write_embeddings_csv(f, out.embeddings);
  }
  {
    auto f = open_out(art.curve());
    analysis::write_curve_csv(f, {analysis::adaptation_curve(out.returns)},
                              {{to_string(cfg.algo), replay::to_string(cfg.strategy),
                                envs::to_string(cfg.env)}});
  }
  fs::create_directories(art.trajectories());
  for (const auto& d : out.dumps) {
    auto f = open_out(art.trajectories() /
                      ("goal" + std::to_string(d.goal) + "-run" + std::to_string(d.run) + ".jsonl"));
    replay::write_jsonl(f, d.episodes);
  }
  return out;
}

OracleOutputs oracle_eval(const ExperimentConfig& base, std::uint64_t seed,
                          const MetaAgent* agent, const fs::path& out_dir) {
  const ExperimentConfig cfg = single_seed(base, seed);
  cfg.validate();
  if (cfg.env == envs::Family::kVelMatch1D) {
    throw ConfigError("oracle: the greedy benchmark supports navigation families only");
  }
  const auto set = oracle::FiniteTaskSet::uniform(first_n(experiment_tasks(cfg).test, cfg.test_goals));
  const int n_goals = static_cast<int>(set.size());
  const oracle::GreedyOptions gopt{cfg.oracle_noise, true};

  OracleOutputs out;
  out.returns.resize(static_cast<Eigen::Index>(n_goals) * cfg.oracle_runs, cfg.test_episodes);
  for (int g = 0; g < n_goals; ++g) {
    for (int r = 0; r < cfg.oracle_runs; ++r) {
      Rng rng = derive_rng(seed, {3, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(r)});
      auto eps = oracle::posterior_greedy_rollout(set, oracle::ExactBelief{set.prior},
                                                  set.tasks[static_cast<std::size_t>(g)],
                                                  cfg.env_cfg, cfg.test_episodes, gopt, rng);
      for (int e = 0; e < cfg.test_episodes; ++e) {
        out.returns(static_cast<Eigen::Index>(g) * cfg.oracle_runs + r, e) =
            eps[static_cast<std::size_t>(e)].ret;
      }
    }
  }

  if (agent != nullptr) {
    std::vector<oracle::ExactBelief> exact;
    std::vector<Eigen::VectorXd> latents;
    std::vector<int> goal_of;
    const int k = agent->latent_dim();
    for (int g = 0; g < n_goals; ++g) {
      for (int r = 0; r < cfg.test_runs; ++r) {
        Rng rng =
            derive_rng(seed, {2, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(r)});
        auto res = agent->adapt(set.tasks[static_cast<std::size_t>(g)], cfg.env_cfg,
                                cfg.test_episodes, rng);
        std::vector<replay::Transition> steps;
        for (const auto& tr : res.trajectories) {
          steps.insert(steps.end(), tr.steps.begin(), tr.steps.end());
        }
        exact.push_back(oracle::exact_posterior(set, steps, cfg.oracle_noise, cfg.env_cfg));
        latents.push_back(res.embeddings.back().head(k));
        goal_of.push_back(g);
      }
    }
    std::vector<int> probes;
    if (const auto* vb = dynamic_cast<const varibad::VaribadAgent*>(agent)) {
      out.probe = "decoded_reward";
      for (const auto& z : latents) probes.push_back(oracle::decoded_reward_probe(*vb, z, set.tasks));
    } else {
      out.probe = "nearest_centroid";
      std::vector<Eigen::VectorXd> centroids(static_cast<std::size_t>(n_goals),
                                             Eigen::VectorXd::Zero(k));
      std::vector<int> counts(static_cast<std::size_t>(n_goals), 0);
      for (std::size_t i = 0; i < latents.size(); ++i) {
        centroids[static_cast<std::size_t>(goal_of[i])] += latents[i];
        ++counts[static_cast<std::size_t>(goal_of[i])];
      }
      for (std::size_t g = 0; g < centroids.size(); ++g) centroids[g] /= counts[g];
      for (const auto& z : latents) probes.push_back(oracle::nearest_latent_probe(z, centroids));
    }
    out.agreement = oracle::belief_agreement(exact, probes);
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    RunArtifacts art{out_dir};
    {
      auto f = open_out(art.oracle());
      write_returns_csv(f, out.returns, cfg.oracle_runs);
    }
    {
      auto f = open_out(art.oracle_curve());
      analysis::write_curve_csv(f, {analysis::adaptation_curve(out.returns)},
                                {{"oracle", replay::to_string(cfg.strategy), envs::to_string(cfg.env)}});
    }
    if (agent != nullptr) {
      auto f = open_out(art.agreement());
      f << "algorithm,probe,agreement,runs,chance\n"
        << agent->name() << "," << out.probe << "," << fmt(out.agreement) << ","
        << n_goals * cfg.test_runs << "," << fmt(1.0 / n_goals) << "\n";
    }
  }
  return out;
}

double final_train_return(const fs::path& metrics_csv, int window) {
  std::istringstream in(read_file(metrics_csv));
  const auto t = analysis::read_csv(in);
  const int col = t.column("eval_return");
  if (col < 0) throw ConfigError(metrics_csv.string() + " has no eval_return column");
  std::vector<double> vals;
  for (const auto& row : t.rows) {
    const double v = std::stod(row[static_cast<std::size_t>(col)]);
    if (std::isfinite(v)) vals.push_back(v);
  }
  if (vals.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min(vals.size(), static_cast<std::size_t>(window));
  double s = 0.0;
  for (std::size_t i = vals.size() - n; i < vals.size(); ++i) s += vals[i];
  return s / static_cast<double>(n);
}

namespace {

struct RunSummary {
  fs::path dir;
  ExperimentConfig cfg;
  Eigen::VectorXd episode_means;
  double final_return = 0.0;
};

RunSummary summarize_run(const fs::path& dir, int final_window) {
  RunSummary s;
  s.dir = dir;
  s.cfg = parse_config(read_file(dir / "config.ini"));
  std::istringstream in(read_file(dir / "adaptation.csv"));
  s.episode_means = read_returns_csv(in).colwise().mean().transpose();
  s.final_return = final_train_return(dir / "metrics.csv", final_window);
  return s;
}

std::string arm_label(const std::vector<RunSummary>& runs, const std::string& fallback) {
  std::set<std::string> names;
  for (const auto& r : runs) names.insert(replay::to_string(r.cfg.strategy));
  return names.size() == 1 ? *names.begin() : fallback;
}

}  // namespace

std::pair<std::vector<fs::path>, std::vector<fs::path>> arms_by_strategy(
    const std::vector<fs::path>& dirs) {
  std::vector<fs::path> shorts, longs;
  for (const auto& d : dirs) {
    const auto cfg = parse_config(read_file(d / "config.ini"));
    (cfg.strategy == replay::MemoryStrategy::kShort ? shorts : longs).push_back(d);
  }
  if (shorts.empty() || longs.empty()) {
    throw ConfigError("compare: need runs of both memory strategies, or explicit arms");
  }
  return {shorts, longs};
}

Comparison compare_runs(const std::vector<fs::path>& arm_a, const std::vector<fs::path>& arm_b,
                        int resamples, double level, int final_window) {
  if (arm_a.empty() || arm_b.empty() || arm_a.size() + arm_b.size() < 2) {
    throw ConfigError("compare: each arm needs at least one run directory");
  }
  std::vector<RunSummary> a, b;
  for (const auto& d : arm_a) a.push_back(summarize_run(d, final_window));
  for (const auto& d : arm_b) b.push_back(summarize_run(d, final_window));

  const RunSummary& ref = a.front();
  for (const auto* arm : {&a, &b}) {
    for (const auto& r : *arm) {
      if (r.cfg.env != ref.cfg.env || r.cfg.algo != ref.cfg.algo) {
        throw ConfigError("compare: " + r.dir.string() + " differs from " + ref.dir.string() +
                          " in env or algorithm");
      }
      if (r.episode_means.size() != ref.episode_means.size()) {
        throw ConfigError("compare: " + r.dir.string() + " has a different episode count");
      }
    }
  }

  Comparison c;
  c.label_a = arm_label(a, "a");
  c.label_b = arm_label(b, "b");
  if (c.label_a == c.label_b) {
    c.label_a += "_a";
    c.label_b += "_b";
  }
  const int episodes = static_cast<int>(ref.episode_means.size());
  for (const auto& [label, arm] : {std::pair{c.label_a, &a}, std::pair{c.label_b, &b}}) {
    for (const auto& r : *arm) {
      for (int e = 0; e < episodes; ++e) {
        c.summary.push_back({label, r.dir.filename().string(), r.cfg.seeds.front(), e + 1,
                             r.episode_means(e)});
      }
    }
  }

  auto row = [&](const std::string& metric, int episode, const std::vector<double>& va,
                 const std::vector<double>& vb) {
    CompareRow out;
    out.metric = metric;
    out.episode = episode;
    for (double v : va) out.mean_a += v / static_cast<double>(va.size());
    for (double v : vb) out.mean_b += v / static_cast<double>(vb.size());
    out.delta = analysis::bootstrap_mean_diff(va, vb, resamples, level,
                                              static_cast<std::uint64_t>(episode));
    out.n_a = va.size();
    out.n_b = vb.size();
    c.rows.push_back(out);
  };
  for (int e = 0; e < episodes; ++e) {
    std::vector<double> va, vb;
    for (const auto& r : a) va.push_back(r.episode_means(e));
    for (const auto& r : b) vb.push_back(r.episode_means(e));
    row("adaptation", e + 1, va, vb);
  }
  {
    std::vector<double> va, vb;
    for (const auto& r : a) {
      if (std::isfinite(r.final_return)) va.push_back(r.final_return);
    }
    for (const auto& r : b) {
      if (std::isfinite(r.final_return)) vb.push_back(r.final_return);
    }
    if (!va.empty() && !vb.empty()) row("final_train_return", 0, va, vb);
  }

  std::ostringstream t;
  t << envs::to_string(ref.cfg.env) << " / " << to_string(ref.cfg.algo) << ": " << c.label_a
    << " (" << a.size() << " runs) minus " << c.label_b << " (" << b.size() << " runs), "
    << static_cast<int>(level * 100 + 0.5) << "% bootstrap intervals over " << resamples
    << " resamples\n";
  for (const auto& r : c.rows) {
    t << (r.metric == "adaptation" ? "  episode " + std::to_string(r.episode)
                                   : std::string("  final training return"))
      << ": " << fmt(r.mean_a) << " vs " << fmt(r.mean_b) << ", delta " << fmt(r.delta.estimate)
      << " [" << fmt(r.delta.lo) << ", " << fmt(r.delta.hi) << "]\n";
  }
  c.text = t.str();
  return c;
}

void write_comparison(const Comparison& c, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    auto f = open_out(out_dir / "comparison.csv");
    f << "metric,episode,arm_a,arm_b,mean_a,mean_b,delta,ci_lo,ci_hi,n_a,n_b\n";
    for (const auto& r : c.rows) {
      f << r.metric << "," << r.episode << "," << c.label_a << "," << c.label_b << ","
        << fmt(r.mean_a) << "," << fmt(r.mean_b) << "," << fmt(r.delta.estimate) << ","
        << fmt(r.delta.lo) << "," << fmt(r.delta.hi) << "," << r.n_a << "," << r.n_b << "\n";
    }
  }
  {
    auto f = open_out(out_dir / "comparison_summary.csv");
    f << "arm,run,seed,episode,mean_return\n";
    for (const auto& s : c.summary) {
      f << s.arm << "," << s.run << "," << s.seed << "," << s.episode << "," << fmt(s.mean_return)
        << "\n";
    }
  }
  auto f = open_out(out_dir / "comparison.txt");
  f << c.text;
}

ProjectionOutputs project_embeddings(const fs::path& input, const fs::path& output,
                                     const std::string& method, double perplexity,
                                     int iterations, std::uint64_t seed) {
  std::istringstream in(read_file(input));
  const auto table = analysis::read_embeddings_csv(in);
  if (table.rows() == 0) throw ConfigError("project: " + input.string() + " has no rows");
  const Eigen::MatrixXd x = table.values.leftCols(table.latent_dim);

  ProjectionOutputs out;
  if (method == "pca") {
    auto res = analysis::pca_project(x, 2);
    out.points = std::move(res.points);
    out.warnings = std::move(res.warnings);
  } else if (method == "tsne") {
    analysis::TsneOptions opt;
    opt.perplexity = perplexity;
    opt.iterations = iterations;
    opt.seed = seed;
    auto res = analysis::tsne_project(x, opt);
    out.points = std::move(res.points);
    out.warnings = std::move(res.warnings);
  } else {
    throw ConfigError("project: unknown method '" + method + "'");
  }

  if (std::set<int>(table.task_id.begin(), table.task_id.end()).size() >= 2) {
    auto sil = analysis::cluster_quality(out.points, table.task_id);
    out.silhouette = sil.score;
    for (auto& w : sil.warnings) out.warnings.push_back(std::move(w));
  } else {
    out.silhouette = std::numeric_limits<double>::quiet_NaN();
    out.warnings.push_back("silhouette needs at least two task ids");
  }

  auto f = open_out(output);
  analysis::write_embeddings_csv(f, table, &out.points);
  return out;
}

}  // namespace metamem
