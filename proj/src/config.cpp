// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace metamem {

std::string to_string(Algorithm a) { return a == Algorithm::kPearl ? "pearl" : "varibad"; }

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "pearl") return Algorithm::kPearl;
  if (s == "varibad") return Algorithm::kVaribad;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw std::invalid_argument("cannot parse '" + s + "' as a number");
  }
  return value;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool parse_bool(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("cannot parse '" + s + "' as a boolean");
}

template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ",";
    out += format_number(v[i]);
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) out.push_back(parse_number<T>(item));
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

// Accessor pair for a plain member reached through `Proj`.
template <typename T, typename Proj>
Field number(std::string section, std::string key, Proj proj) {
  return {std::move(section), std::move(key),
          [proj](const ExperimentConfig& c) {
            return format_number(proj(const_cast<ExperimentConfig&>(c)));
          },
          [proj](ExperimentConfig& c, const std::string& v) { proj(c) = parse_number<T>(v); }};
}

template <typename Proj>
Field boolean(std::string section, std::string key, Proj proj) {
  return {std::move(section), std::move(key),
          [proj](const ExperimentConfig& c) {
            return std::string(proj(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          },
          [proj](ExperimentConfig& c, const std::string& v) { proj(c) = parse_bool(v); }};
}

template <typename T, typename Proj>
Field list(std::string section, std::string key, Proj proj) {
  return {std::move(section), std::move(key),
          [proj](const ExperimentConfig& c) {
            return format_list(proj(const_cast<ExperimentConfig&>(c)));
          },
          [proj](ExperimentConfig& c, const std::string& v) { proj(c) = parse_list<T>(v); }};
}

#define MM_REF(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"experiment", "env",
                 [](const ExperimentConfig& c) { return envs::to_string(c.env); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.env = envs::family_from_string(trim(v));
                 }});
    f.push_back({"experiment", "algo",
                 [](const ExperimentConfig& c) { return to_string(c.algo); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.algo = algorithm_from_string(trim(v));
                 }});
    f.push_back({"experiment", "strategy",
                 [](const ExperimentConfig& c) { return replay::to_string(c.strategy); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.strategy = replay::strategy_from_string(trim(v));
                 }});
    f.push_back(list<std::uint64_t>("experiment", "seeds", MM_REF(c.seeds)));
    f.push_back({"experiment", "out", [](const ExperimentConfig& c) { return c.out; },
                 [](ExperimentConfig& c, const std::string& v) { c.out = trim(v); }});
    f.push_back(boolean("experiment", "quick", MM_REF(c.quick)));

    f.push_back(number<int>("training", "iterations", MM_REF(c.iterations)));
    f.push_back(number<int>("training", "n_train_tasks", MM_REF(c.n_train_tasks)));
    f.push_back(number<std::uint64_t>("training", "task_seed", MM_REF(c.task_seed)));
    f.push_back(number<int>("training", "eval_interval", MM_REF(c.eval_interval)));
    f.push_back(number<int>("training", "eval_tasks", MM_REF(c.eval_tasks)));
    f.push_back(number<int>("training", "eval_episodes", MM_REF(c.eval_episodes)));
    f.push_back(number<int>("training", "checkpoint_interval", MM_REF(c.checkpoint_interval)));
    f.push_back(number<int>("training", "tasks_per_iter", MM_REF(c.schedule.tasks_per_iter)));
    f.push_back(
        number<int>("training", "episodes_per_task", MM_REF(c.schedule.episodes_per_task)));
    f.push_back(number<int>("training", "grad_steps", MM_REF(c.schedule.grad_steps)));
    f.push_back({"training", "critic_reward",
                 [](const ExperimentConfig& c) { return to_string(c.schedule.critic_reward); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.schedule.critic_reward = critic_reward_from_string(trim(v));
                 }});

    f.push_back(number<double>("env", "goal_radius", MM_REF(c.env_cfg.goal_radius)));
    f.push_back(number<double>("env", "start_radius", MM_REF(c.env_cfg.start_radius)));
    f.push_back(number<double>("env", "sparse_eps", MM_REF(c.env_cfg.sparse_eps)));
    f.push_back(number<double>("env", "point_step", MM_REF(c.env_cfg.point_step)));
    f.push_back(number<double>("env", "momentum", MM_REF(c.env_cfg.momentum)));
    f.push_back(number<double>("env", "v_max", MM_REF(c.env_cfg.v_max)));
    f.push_back(number<double>("env", "vel_gain", MM_REF(c.env_cfg.vel_gain)));
    f.push_back(number<double>("env", "vel_dt", MM_REF(c.env_cfg.vel_dt)));
    f.push_back(number<int>("env", "horizon", MM_REF(c.env_cfg.horizon)));

    f.push_back(number<std::size_t>("replay", "capacity", MM_REF(c.capacity)));
    f.push_back(boolean("replay", "stratified", MM_REF(c.stratified)));
    f.push_back(boolean("replay", "clear_encoder_only", MM_REF(c.clear_encoder_only)));

    f.push_back(number<double>("sac", "gamma", MM_REF(c.sac.gamma)));
    f.push_back(number<double>("sac", "tau", MM_REF(c.sac.tau)));
    f.push_back(number<double>("sac", "lr", MM_REF(c.sac.lr)));
    f.push_back(number<double>("sac", "alpha", MM_REF(c.sac.alpha)));
    f.push_back(number<int>("sac", "batch_size", MM_REF(c.sac.batch_size)));
    f.push_back(list<int>("sac", "hidden", MM_REF(c.sac.hidden)));
    f.push_back(boolean("sac", "auto_alpha", MM_REF(c.sac.auto_alpha)));
    f.push_back(number<double>("sac", "target_entropy", MM_REF(c.sac.target_entropy)));

    f.push_back(number<int>("pearl", "latent_dim", MM_REF(c.pearl.latent_dim)));
    f.push_back(number<double>("pearl", "kl_weight", MM_REF(c.pearl.kl_weight)));
    f.push_back(number<int>("pearl", "context_len", MM_REF(c.pearl.context_len)));
    f.push_back(number<int>("pearl", "meta_batch", MM_REF(c.pearl.meta_batch)));
    f.push_back(list<int>("pearl", "encoder_hidden", MM_REF(c.pearl.encoder_hidden)));
    f.push_back(boolean("pearl", "per_step_posterior", MM_REF(c.pearl.per_step_posterior)));
    f.push_back(boolean("pearl", "deterministic_eval", MM_REF(c.pearl.deterministic_eval)));

    f.push_back(number<int>("varibad", "latent_dim", MM_REF(c.varibad.latent_dim)));
    f.push_back(number<double>("varibad", "kl_weight", MM_REF(c.varibad.kl_weight)));
    f.push_back(number<int>("varibad", "embed_dim", MM_REF(c.varibad.embed_dim)));
    f.push_back(number<int>("varibad", "gru_hidden", MM_REF(c.varibad.gru_hidden)));
    f.push_back(list<int>("varibad", "decoder_hidden", MM_REF(c.varibad.decoder_hidden)));
    f.push_back(number<double>("varibad", "vae_lr", MM_REF(c.varibad.vae_lr)));
    f.push_back(number<int>("varibad", "vae_batch", MM_REF(c.varibad.vae_batch)));
    f.push_back(number<int>("varibad", "vae_updates", MM_REF(c.varibad.vae_updates)));
    f.push_back(number<int>("varibad", "anchors", MM_REF(c.varibad.anchors)));
    f.push_back(number<int>("varibad", "z_samples", MM_REF(c.varibad.z_samples)));
    f.push_back(boolean("varibad", "reencode_beliefs", MM_REF(c.varibad.reencode_beliefs)));
    f.push_back(boolean("varibad", "bamdp_bootstrap", MM_REF(c.varibad.bamdp_bootstrap)));
    f.push_back(boolean("varibad", "deterministic_eval", MM_REF(c.varibad.deterministic_eval)));

    f.push_back(number<int>("testing", "goals", MM_REF(c.test_goals)));
    f.push_back(number<int>("testing", "runs", MM_REF(c.test_runs)));
    f.push_back(number<int>("testing", "episodes", MM_REF(c.test_episodes)));
    f.push_back(number<int>("testing", "trajectory_runs", MM_REF(c.trajectory_runs)));

    f.push_back(number<double>("oracle", "noise", MM_REF(c.oracle_noise)));
    f.push_back(number<int>("oracle", "runs", MM_REF(c.oracle_runs)));

    f.push_back(number<int>("compare", "bootstrap_resamples", MM_REF(c.bootstrap_resamples)));
    f.push_back(number<double>("compare", "ci_level", MM_REF(c.ci_level)));
    f.push_back(number<int>("compare", "final_window", MM_REF(c.final_window)));

    f.push_back({"projection", "method",
                 [](const ExperimentConfig& c) { return c.projection_method; },
                 [](ExperimentConfig& c, const std::string& v) { c.projection_method = trim(v); }});
    f.push_back(number<double>("projection", "perplexity", MM_REF(c.tsne_perplexity)));
    f.push_back(number<int>("projection", "iterations", MM_REF(c.tsne_iterations)));
    return f;
  }();
  return table;
}

#undef MM_REF

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

[[noreturn]] void bad(const std::string& where, const std::string& why) {
  throw ConfigError(where + ": " + why);
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                      const std::string& value) {
  const Field* f = find_field(section, key);
  if (f == nullptr) bad(section + "." + key, "unknown key");
  try {
    f->set(cfg, value);
  } catch (const std::invalid_argument& e) {
    bad(section + "." + key, e.what());
  }
}

void ExperimentConfig::apply_quick() {
  quick = true;
  iterations = 2;
  n_train_tasks = 4;
  eval_interval = 1;
  eval_tasks = 2;
  eval_episodes = 2;
  checkpoint_interval = 1;
  schedule.tasks_per_iter = 2;
  schedule.episodes_per_task = 1;
  schedule.grad_steps = 5;
  sac.batch_size = 32;
  sac.hidden = {16, 16};
  pearl.encoder_hidden = {16, 16};
  pearl.context_len = 20;
  pearl.meta_batch = 2;
  varibad.embed_dim = 8;
  varibad.gru_hidden = 16;
  varibad.decoder_hidden = {16, 16};
  varibad.vae_batch = 2;
  varibad.vae_updates = 2;
  test_goals = 1;
  test_runs = 1;
  trajectory_runs = 1;
  oracle_runs = 1;
  bootstrap_resamples = 200;
  tsne_iterations = 250;
}

void ExperimentConfig::validate() const {
  auto positive = [](const char* name, long v) {
    if (v <= 0) bad(name, "must be positive");
  };
  auto non_negative = [](const char* name, double v) {
    if (!(v >= 0.0)) bad(name, "must be non-negative");
  };
  auto hidden_ok = [](const char* name, const std::vector<int>& h) {
    for (int w : h) {
      if (w <= 0) bad(name, "layer widths must be positive");
    }
  };
  if (seeds.empty()) bad("experiment.seeds", "at least one seed is required");
  if (out.empty()) bad("experiment.out", "must not be empty");
  positive("training.iterations", iterations);
  positive("training.n_train_tasks", n_train_tasks);
  positive("training.eval_interval", eval_interval);
  positive("training.eval_tasks", eval_tasks);
  positive("training.eval_episodes", eval_episodes);
  positive("training.checkpoint_interval", checkpoint_interval);
  positive("training.tasks_per_iter", schedule.tasks_per_iter);
  positive("training.episodes_per_task", schedule.episodes_per_task);
  non_negative("training.grad_steps", schedule.grad_steps);
  positive("env.goal_radius", env_cfg.goal_radius > 0.0 ? 1 : 0);
  non_negative("env.start_radius", env_cfg.start_radius);
  non_negative("env.sparse_eps", env_cfg.sparse_eps);
  positive("env.point_step", env_cfg.point_step > 0.0 ? 1 : 0);
  if (!(env_cfg.momentum >= 0.0 && env_cfg.momentum < 1.0)) bad("env.momentum", "must be in [0, 1)");
  positive("env.v_max", env_cfg.v_max > 0.0 ? 1 : 0);
  positive("env.vel_gain", env_cfg.vel_gain > 0.0 ? 1 : 0);
  positive("env.vel_dt", env_cfg.vel_dt > 0.0 ? 1 : 0);
  non_negative("env.horizon", env_cfg.horizon);
  positive("replay.capacity", static_cast<long>(capacity));
  if (!(sac.gamma >= 0.0 && sac.gamma <= 1.0)) bad("sac.gamma", "must be in [0, 1]");
  if (!(sac.tau > 0.0 && sac.tau <= 1.0)) bad("sac.tau", "must be in (0, 1]");
  non_negative("sac.lr", sac.lr);
  non_negative("sac.alpha", sac.alpha);
  positive("sac.batch_size", sac.batch_size);
  hidden_ok("sac.hidden", sac.hidden);
  positive("pearl.latent_dim", pearl.latent_dim);
  non_negative("pearl.kl_weight", pearl.kl_weight);
  positive("pearl.context_len", pearl.context_len);
  positive("pearl.meta_batch", pearl.meta_batch);
  hidden_ok("pearl.encoder_hidden", pearl.encoder_hidden);
  positive("varibad.latent_dim", varibad.latent_dim);
  non_negative("varibad.kl_weight", varibad.kl_weight);
  positive("varibad.embed_dim", varibad.embed_dim);
  positive("varibad.gru_hidden", varibad.gru_hidden);
  hidden_ok("varibad.decoder_hidden", varibad.decoder_hidden);
  non_negative("varibad.vae_lr", varibad.vae_lr);
  positive("varibad.vae_batch", varibad.vae_batch);
  non_negative("varibad.vae_updates", varibad.vae_updates);
  positive("varibad.anchors", varibad.anchors);
  positive("varibad.z_samples", varibad.z_samples);
  positive("testing.goals", test_goals);
  positive("testing.runs", test_runs);
  positive("testing.episodes", test_episodes);
  non_negative("testing.trajectory_runs", trajectory_runs);
  positive("oracle.noise", oracle_noise > 0.0 ? 1 : 0);
  positive("oracle.runs", oracle_runs);
  positive("compare.bootstrap_resamples", bootstrap_resamples);
  if (!(ci_level > 0.0 && ci_level < 1.0)) bad("compare.ci_level", "must be in (0, 1)");
  positive("compare.final_window", final_window);
  if (projection_method != "pca" && projection_method != "tsne") {
    bad("projection.method", "must be pca or tsne");
  }
  positive("projection.perplexity", tsne_perplexity > 0.0 ? 1 : 0);
  positive("projection.iterations", tsne_iterations);
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << f.get(*this) << "\n";
  }
  return out.str();
}

std::string ExperimentConfig::run_name(std::uint64_t seed) const {
  return envs::to_string(env) + "-" + to_string(algo) + "-" + replay::to_string(strategy) + "-" +
         std::to_string(seed);
}

std::string ExperimentConfig::architecture_signature() const {
  std::ostringstream s;
  s << envs::to_string(env) << "|" << to_string(algo) << "|sac:" << format_list(sac.hidden);
  if (algo == Algorithm::kPearl) {
    s << "|k:" << pearl.latent_dim << "|enc:" << format_list(pearl.encoder_hidden);
  } else {
    s << "|k:" << varibad.latent_dim << "|embed:" << varibad.embed_dim
      << "|gru:" << varibad.gru_hidden << "|dec:" << format_list(varibad.decoder_hidden);
  }
  return s.str();
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) bad(section, "key outside of any section");
    for (const auto& [key, node] : body) {
      if (!node.empty()) bad(section + "." + key, "nested keys are not supported");
      set_config_value(cfg, section, key, node.data());
    }
  }
  if (cfg.quick) cfg.apply_quick();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace metamem
