#include "mra/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "mra/errors.hpp"
#include "mra/plots.hpp"

namespace mra {

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : -1; }

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else return "a string";
}

template <class T>
T scalar(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw ConfigError("'" + key + "' must be " + type_name<T>(), line_of(n));
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + key + "' must be " + type_name<T>(), line_of(n));
  }
}

template <class T>
T ranged(const YAML::Node& n, const std::string& key, T lo, T hi, bool hi_open = false) {
  const T v = scalar<T>(n, key);
  if (v < lo || v > hi || (hi_open && v == hi)) {
    std::ostringstream s;
    s << "'" << key << "' = " << v << " is out of range [" << lo << ", " << hi << (hi_open ? ")" : "]");
    throw ConfigError(s.str(), line_of(n));
  }
  return v;
}

std::vector<int> int_list(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) throw ConfigError("'" + key + "' must be a list of integers", line_of(n));
  std::vector<int> out;
  for (const auto& e : n) out.push_back(ranged<int>(e, key, 1, 1 << 20));
  return out;
}

std::vector<std::vector<int>> int_lists(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) throw ConfigError("'" + key + "' must be a list of integer lists", line_of(n));
  std::vector<std::vector<int>> out;
  for (const auto& e : n) out.push_back(int_list(e, key));
  return out;
}

std::vector<std::string> string_list(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) throw ConfigError("'" + key + "' must be a list of strings", line_of(n));
  std::vector<std::string> out;
  for (const auto& e : n) out.push_back(scalar<std::string>(e, key));
  return out;
}

using Handlers = std::map<std::string, std::function<void(const YAML::Node&)>>;

void walk(const YAML::Node& map, const std::string& section, const Handlers& handlers) {
  if (!map || map.IsNull()) return;
  if (!map.IsMap()) throw ConfigError("'" + section + "' must be a mapping", line_of(map));
  for (const auto& kv : map) {
    const std::string key = kv.first.as<std::string>();
    auto it = handlers.find(key);
    if (it == handlers.end())
      throw ConfigError("unknown key '" + (section.empty() ? key : section + "." + key) + "'", line_of(kv.first));
    it->second(kv.second);
  }
}

template <class F>
void one_of(const YAML::Node& n, const std::string& key, F&& parse) {
  try {
    parse();
  } catch (const ParameterError& e) {
    throw ConfigError("'" + key + "': " + e.what(), line_of(n));
  }
}

}  // namespace

void RunConfig::validate() const {
  static const char* commands[] = {"train", "adapt", "eval", "oracle", "plot"};
  if (std::find(std::begin(commands), std::end(commands), command) == std::end(commands))
    throw ConfigError("unknown command '" + command + "'");
  try {
    train.validate();
    parse_eval_mode(eval.mode);
    parse_plot_kind(plot.kind);
    game_set();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (oracle.check != "nashconv" && oracle.check != "lemma1" && oracle.check != "sigma")
    throw ConfigError("oracle.check must be nashconv, lemma1 or sigma");
}

GameSet RunConfig::game_set() const {
  const EnvKind kind = parse_env_kind(env.kind);
  if (kind == EnvKind::tabular) throw ParameterError("tabular games are handled by the oracle command");
  if (env.populations.empty()) throw ParameterError("env.populations needs at least one game");
  return make_game_set(kind, env.populations, env.horizon, env.landmarks, env.sparse);
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : -1);
  }
  RunConfig c;
  auto& t = c.train;
  auto& m = c.model;
  const Handlers env{
      {"kind", [&](const YAML::Node& n) { one_of(n, "env.kind", [&] { c.env.kind = to_string(parse_env_kind(scalar<std::string>(n, "env.kind"))); }); }},
      {"populations", [&](const YAML::Node& n) { c.env.populations = int_lists(n, "env.populations"); }},
      {"horizon", [&](const YAML::Node& n) { c.env.horizon = ranged<int>(n, "env.horizon", 1, 1 << 20); }},
      {"landmarks", [&](const YAML::Node& n) { c.env.landmarks = ranged<int>(n, "env.landmarks", -1, 1 << 16); }},
      {"sparse", [&](const YAML::Node& n) { c.env.sparse = scalar<bool>(n, "env.sparse"); }},
  };
  const Handlers model{
      {"d", [&](const YAML::Node& n) { m.d = ranged<int>(n, "model.d", 1, 4096); }},
      {"hidden", [&](const YAML::Node& n) { m.hidden = ranged<int>(n, "model.hidden", 1, 4096); }},
      {"critic_hidden", [&](const YAML::Node& n) { m.critic_hidden = ranged<int>(n, "model.critic_hidden", 1, 4096); }},
      {"aux_hidden", [&](const YAML::Node& n) { m.aux_hidden = ranged<int>(n, "model.aux_hidden", 1, 4096); }},
      {"latent", [&](const YAML::Node& n) { m.latent = ranged<int>(n, "model.latent", 1, 64); }},
      {"variant", [&](const YAML::Node& n) { one_of(n, "model.variant", [&] { m.variant = parse_phi_variant(scalar<std::string>(n, "model.variant")); }); }},
      {"temperature", [&](const YAML::Node& n) { m.temperature = ranged<float>(n, "model.temperature", 1e-6f, 1e6f); }},
      {"uniform_latent", [&](const YAML::Node& n) { m.uniform_latent = scalar<bool>(n, "model.uniform_latent"); }},
  };
  const Handlers train{
      {"alpha", [&](const YAML::Node& n) { t.alpha = ranged<double>(n, "train.alpha", 1e-12, 1.0); }},
      {"beta", [&](const YAML::Node& n) { t.beta = ranged<double>(n, "train.beta", 1e-12, 10.0); }},
      {"K", [&](const YAML::Node& n) { t.K = ranged<int>(n, "train.K", 1, 1 << 20); }},
      {"gamma", [&](const YAML::Node& n) { t.gamma = ranged<double>(n, "train.gamma", 0.0, 1.0, true); }},
      {"batch", [&](const YAML::Node& n) { t.batch = ranged<int>(n, "train.batch", 1, 1 << 24); }},
      {"rollouts", [&](const YAML::Node& n) { t.rollouts = ranged<int>(n, "train.rollouts", 1, 1 << 16); }},
      {"min_steps_per_update", [&](const YAML::Node& n) { t.min_steps_per_update = ranged<int>(n, "train.min_steps_per_update", 1, 1 << 24); }},
      {"mi_samples", [&](const YAML::Node& n) { t.mi_samples = ranged<int>(n, "train.mi_samples", 1, 1 << 16); }},
      {"mi_mode", [&](const YAML::Node& n) {
         const auto v = scalar<std::string>(n, "train.mi_mode");
         if (v != "sampled" && v != "enumerate") throw ConfigError("'train.mi_mode' must be sampled or enumerate", line_of(n));
         t.mi_mode = v == "sampled" ? MiMode::sampled : MiMode::enumerate;
       }},
      {"total_episodes", [&](const YAML::Node& n) { t.total_episodes = ranged<int>(n, "train.total_episodes", 0, 1 << 30); }},
      {"tau", [&](const YAML::Node& n) { t.tau = ranged<double>(n, "train.tau", 1e-12, 1.0); }},
      {"buffer_capacity", [&](const YAML::Node& n) { t.buffer_capacity = ranged<std::size_t>(n, "train.buffer_capacity", 1, std::size_t{1} << 32); }},
      {"threads", [&](const YAML::Node& n) { t.threads = ranged<int>(n, "train.threads", 1, 256); }},
      {"checkpoint_every", [&](const YAML::Node& n) { t.checkpoint_every = ranged<int>(n, "train.checkpoint_every", 0, 1 << 30); }},
  };
  const Handlers metrics{
      {"wall_time", [&](const YAML::Node& n) { t.wall_time = scalar<bool>(n, "metrics.wall_time"); }},
  };
  const Handlers adapt{
      {"population", [&](const YAML::Node& n) { c.adapt.population = int_list(n, "adapt.population"); }},
      {"episodes", [&](const YAML::Node& n) { c.adapt.episodes = ranged<int>(n, "adapt.episodes", 0, 1 << 30); }},
      {"updates_per_episode", [&](const YAML::Node& n) { c.adapt.updates_per_episode = ranged<int>(n, "adapt.updates_per_episode", -1, 1 << 20); }},
      {"freeze_theta", [&](const YAML::Node& n) { c.adapt.freeze_theta = scalar<bool>(n, "adapt.freeze_theta"); }},
  };
  const Handlers eval{
      {"runs", [&](const YAML::Node& n) { c.eval.runs = ranged<int>(n, "eval.runs", 1, 1 << 20); }},
      {"mode", [&](const YAML::Node& n) { one_of(n, "eval.mode", [&] { c.eval.mode = scalar<std::string>(n, "eval.mode"); parse_eval_mode(c.eval.mode); }); }},
      {"cross", [&](const YAML::Node& n) { c.eval.cross = scalar<bool>(n, "eval.cross"); }},
      {"populations", [&](const YAML::Node& n) { c.eval.populations = int_lists(n, "eval.populations"); }},
      {"pacman_single", [&](const YAML::Node& n) { c.eval.pacman_single = scalar<std::string>(n, "eval.pacman_single"); }},
      {"pacman_mra", [&](const YAML::Node& n) { c.eval.pacman_mra = scalar<std::string>(n, "eval.pacman_mra"); }},
      {"ghost_single", [&](const YAML::Node& n) { c.eval.ghost_single = scalar<std::string>(n, "eval.ghost_single"); }},
      {"ghost_mra", [&](const YAML::Node& n) { c.eval.ghost_mra = scalar<std::string>(n, "eval.ghost_mra"); }},
      {"trajectory", [&](const YAML::Node& n) { c.eval.trajectory = scalar<bool>(n, "eval.trajectory"); }},
  };
  const Handlers oracle{
      {"game", [&](const YAML::Node& n) { c.oracle.game = scalar<std::string>(n, "oracle.game"); }},
      {"eval_game", [&](const YAML::Node& n) { c.oracle.eval_game = scalar<std::string>(n, "oracle.eval_game"); }},
      {"check", [&](const YAML::Node& n) { c.oracle.check = scalar<std::string>(n, "oracle.check"); }},
      {"probes", [&](const YAML::Node& n) { c.oracle.probes = ranged<int>(n, "oracle.probes", 1, 1 << 24); }},
      {"resolution", [&](const YAML::Node& n) { c.oracle.resolution = ranged<double>(n, "oracle.resolution", 1e-6, 1.0); }},
      {"tol", [&](const YAML::Node& n) { c.oracle.tol = ranged<double>(n, "oracle.tol", 0.0, 1e6); }},
  };
  const Handlers plot{
      {"metrics", [&](const YAML::Node& n) { c.plot.metrics = string_list(n, "plot.metrics"); }},
      {"kind", [&](const YAML::Node& n) { one_of(n, "plot.kind", [&] { c.plot.kind = to_string(parse_plot_kind(scalar<std::string>(n, "plot.kind"))); }); }},
      {"out", [&](const YAML::Node& n) { c.plot.out = scalar<std::string>(n, "plot.out"); }},
  };
  const Handlers top{
      {"command", [&](const YAML::Node& n) { c.command = scalar<std::string>(n, "command"); }},
      {"seed", [&](const YAML::Node& n) { c.seed = scalar<std::uint64_t>(n, "seed"); }},
      {"output", [&](const YAML::Node& n) { c.output = scalar<std::string>(n, "output"); }},
      {"checkpoint", [&](const YAML::Node& n) { c.checkpoint = scalar<std::string>(n, "checkpoint"); }},
      {"env", [&](const YAML::Node& n) { walk(n, "env", env); }},
      {"model", [&](const YAML::Node& n) { walk(n, "model", model); }},
      {"train", [&](const YAML::Node& n) { walk(n, "train", train); }},
      {"metrics", [&](const YAML::Node& n) { walk(n, "metrics", metrics); }},
      {"adapt", [&](const YAML::Node& n) { walk(n, "adapt", adapt); }},
      {"eval", [&](const YAML::Node& n) { walk(n, "eval", eval); }},
      {"oracle", [&](const YAML::Node& n) { walk(n, "oracle", oracle); }},
      {"plot", [&](const YAML::Node& n) { walk(n, "plot", plot); }},
  };
  walk(root, "", top);
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

void flow_lists(YAML::Emitter& e, const std::vector<std::vector<int>>& v) {
  e << YAML::Flow << YAML::BeginSeq;
  for (const auto& p : v) e << YAML::Flow << p;
  e << YAML::EndSeq;
}

}  // namespace

std::string emit_config(const RunConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e.SetFloatPrecision(9);
  e << YAML::BeginMap;
  e << YAML::Key << "command" << YAML::Value << c.command;
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::Key << "output" << YAML::Value << c.output;
  e << YAML::Key << "checkpoint" << YAML::Value << c.checkpoint;
  e << YAML::Key << "env" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << c.env.kind;
  e << YAML::Key << "populations" << YAML::Value;
  flow_lists(e, c.env.populations);
  e << YAML::Key << "horizon" << YAML::Value << c.env.horizon;
  e << YAML::Key << "landmarks" << YAML::Value << c.env.landmarks;
  e << YAML::Key << "sparse" << YAML::Value << c.env.sparse;
  e << YAML::EndMap;
  const auto& m = c.model;
  e << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "d" << YAML::Value << m.d;
  e << YAML::Key << "hidden" << YAML::Value << m.hidden;
  e << YAML::Key << "critic_hidden" << YAML::Value << m.critic_hidden;
  e << YAML::Key << "aux_hidden" << YAML::Value << m.aux_hidden;
  e << YAML::Key << "latent" << YAML::Value << m.latent;
  e << YAML::Key << "variant" << YAML::Value << to_string(m.variant);
  e << YAML::Key << "temperature" << YAML::Value << m.temperature;
  e << YAML::Key << "uniform_latent" << YAML::Value << m.uniform_latent;
  e << YAML::EndMap;
  const auto& t = c.train;
  e << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "alpha" << YAML::Value << t.alpha;
  e << YAML::Key << "beta" << YAML::Value << t.beta;
  e << YAML::Key << "K" << YAML::Value << t.K;
  e << YAML::Key << "gamma" << YAML::Value << t.gamma;
  e << YAML::Key << "batch" << YAML::Value << t.batch;
  e << YAML::Key << "rollouts" << YAML::Value << t.rollouts;
  e << YAML::Key << "min_steps_per_update" << YAML::Value << t.min_steps_per_update;
  e << YAML::Key << "mi_samples" << YAML::Value << t.mi_samples;
  e << YAML::Key << "mi_mode" << YAML::Value << (t.mi_mode == MiMode::sampled ? "sampled" : "enumerate");
  e << YAML::Key << "total_episodes" << YAML::Value << t.total_episodes;
  e << YAML::Key << "tau" << YAML::Value << t.tau;
  e << YAML::Key << "buffer_capacity" << YAML::Value << static_cast<std::uint64_t>(t.buffer_capacity);
  e << YAML::Key << "threads" << YAML::Value << t.threads;
  e << YAML::Key << "checkpoint_every" << YAML::Value << t.checkpoint_every;
  e << YAML::EndMap;
  e << YAML::Key << "metrics" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "wall_time" << YAML::Value << t.wall_time;
  e << YAML::EndMap;
  e << YAML::Key << "adapt" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "population" << YAML::Value << YAML::Flow << c.adapt.population;
  e << YAML::Key << "episodes" << YAML::Value << c.adapt.episodes;
  e << YAML::Key << "updates_per_episode" << YAML::Value << c.adapt.updates_per_episode;
  e << YAML::Key << "freeze_theta" << YAML::Value << c.adapt.freeze_theta;
  e << YAML::EndMap;
  e << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "runs" << YAML::Value << c.eval.runs;
  e << YAML::Key << "mode" << YAML::Value << c.eval.mode;
  e << YAML::Key << "cross" << YAML::Value << c.eval.cross;
  e << YAML::Key << "populations" << YAML::Value;
  flow_lists(e, c.eval.populations);
  e << YAML::Key << "pacman_single" << YAML::Value << c.eval.pacman_single;
  e << YAML::Key << "pacman_mra" << YAML::Value << c.eval.pacman_mra;
  e << YAML::Key << "ghost_single" << YAML::Value << c.eval.ghost_single;
  e << YAML::Key << "ghost_mra" << YAML::Value << c.eval.ghost_mra;
  e << YAML::Key << "trajectory" << YAML::Value << c.eval.trajectory;
  e << YAML::EndMap;
  e << YAML::Key << "oracle" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "game" << YAML::Value << c.oracle.game;
  e << YAML::Key << "eval_game" << YAML::Value << c.oracle.eval_game;
  e << YAML::Key << "check" << YAML::Value << c.oracle.check;
  e << YAML::Key << "probes" << YAML::Value << c.oracle.probes;
  e << YAML::Key << "resolution" << YAML::Value << c.oracle.resolution;
  e << YAML::Key << "tol" << YAML::Value << c.oracle.tol;
  e << YAML::EndMap;
  e << YAML::Key << "plot" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "metrics" << YAML::Value << YAML::Flow << c.plot.metrics;
  e << YAML::Key << "kind" << YAML::Value << c.plot.kind;
  e << YAML::Key << "out" << YAML::Value << c.plot.out;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace mra
