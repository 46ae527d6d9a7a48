#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mra/adapt_eval.hpp"
#include "mra/config.hpp"
#include "mra/errors.hpp"
#include "mra/metrics.hpp"
#include "mra/nash.hpp"
#include "mra/plots.hpp"
#include "mra/tabular.hpp"
#include "mra/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mra;

namespace {

constexpr const char* kVersion = "1.0.0";

// Usage problems exit 2; everything else that fails at runtime exits 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string output;
  std::string checkpoint;
};

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

RunConfig resolve(const Common& c, const std::string& command) {
  RunConfig cfg;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw UsageError("config file not found: " + c.config);
    cfg = load_config(c.config);
  }
  cfg.command = command;
  if (!c.output.empty()) cfg.output = c.output;
  if (!c.checkpoint.empty()) cfg.checkpoint = c.checkpoint;
  if (const char* s = std::getenv("MRA_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used != std::string(s).size()) throw std::invalid_argument(s);
      cfg.seed = v;
    } catch (const std::exception&) {
      throw UsageError(std::string("MRA_SEED is not an unsigned integer: ") + s);
    }
  }
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

// Resolved config plus a manifest make every run directory self-describing.
fs::path prepare_output(const RunConfig& cfg) {
  fs::path dir = cfg.output;
  fs::create_directories(dir);
  write_text(dir / "config.yaml", emit_config(cfg));
  return dir;
}

void write_manifest(const fs::path& dir, const RunConfig& cfg, const Clock& clock, json extra = json::object()) {
  json m;
  m["command"] = cfg.command;
  m["seed"] = cfg.seed;
  m["versions"] = {{"mra", kVersion},
                   {"compiler", __VERSION__},
                   {"cxx_standard", __cplusplus},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  m["wall_time_s"] = clock.seconds();
  m["config"] = "config.yaml";
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_text(dir / "run_manifest.json", m.dump(2) + "\n");
}

Model load_model(const std::string& path) {
  if (path.empty()) throw UsageError("this command needs a checkpoint (config key 'checkpoint' or --checkpoint)");
  if (!fs::exists(fs::path(path) / "manifest.json")) throw UsageError("checkpoint not found: " + path);
  return Model::from_checkpoint(load_checkpoint(path));
}

EnvKind env_kind(const RunConfig& cfg) { return cfg.game_set().kind; }

GameSpec single_game(const RunConfig& cfg, const std::vector<int>& pops) {
  return make_game_set(env_kind(cfg), {pops}, cfg.env.horizon, cfg.env.landmarks, cfg.env.sparse).games[0];
}

AdaptConfig adapt_config(const RunConfig& cfg) {
  AdaptConfig a;
  a.train = cfg.train;
  a.episodes = cfg.adapt.episodes;
  a.updates_per_episode = cfg.adapt.updates_per_episode;
  a.freeze_theta = cfg.adapt.freeze_theta;
  return a;
}

int cmd_train(const Common& c) {
  Clock clock;
  RunConfig cfg = resolve(c, "train");
  GameSet games = cfg.game_set();
  for (const auto& w : games.warnings) std::cerr << "warning: " << w << "\n";
  fs::path dir = prepare_output(cfg);
  std::vector<std::vector<int>> pops;
  for (const auto& g : games.games) pops.push_back(g.populations);
  Rng init_rng = Rng(cfg.seed).split("init");
  Model model = init_model(cfg.model, games.entity_width(), games.roles(), pops, cfg.env.kind, init_rng);
  Trainer trainer(games, std::move(model), cfg.train);
  trainer.set_dump_dir(dir);
  MetricsWriter metrics(dir / "metrics.jsonl");
  trainer.run([&](const EpisodeRecord& r) { metrics.write(r); },
              [&](const Model& m, int episodes) {
                save_checkpoint(dir / ("checkpoint_" + std::to_string(episodes)), m.to_checkpoint());
              });
  save_checkpoint(dir / "checkpoint", trainer.model().to_checkpoint());
  write_manifest(dir, cfg, clock, {{"metrics", "metrics.jsonl"}, {"checkpoint", "checkpoint"}, {"blocks", trainer.blocks()}});
  std::cout << (dir / "checkpoint").string() << "\n";
  return 0;
}

int cmd_adapt(const Common& c) {
  Clock clock;
  RunConfig cfg = resolve(c, "adapt");
  Model model = load_model(cfg.checkpoint);
  const std::vector<int> pops = cfg.adapt.population.empty() ? model.game_populations.front() : cfg.adapt.population;
  GameSpec spec = single_game(cfg, pops);
  fs::path dir = prepare_output(cfg);
  MetricsWriter metrics(dir / "metrics.jsonl");
  AdaptResult res = adapt(model, spec, adapt_config(cfg), [&](const EpisodeRecord& r) { metrics.write(r); });
  save_checkpoint(dir / "checkpoint", res.model.to_checkpoint());
  write_manifest(dir, cfg, clock,
                 {{"metrics", "metrics.jsonl"}, {"checkpoint", "checkpoint"}, {"source_checkpoint", cfg.checkpoint},
                  {"population", pops}});
  std::cout << (dir / "checkpoint").string() << "\n";
  return 0;
}

void dump_trajectories(const Model& model, const std::vector<GameSpec>& games, const RunConfig& cfg, const fs::path& dir) {
  for (std::size_t g = 0; g < games.size(); ++g) {
    EpisodeOptions opts;
    opts.keep_transitions = false;
    opts.record_trajectory = true;
    opts.psi_row = nearest_psi_row(model, games[g].populations);
    EpisodeResult ep = run_episode(model, games[g], Rng(cfg.seed).split("trajectory").split(g), opts);
    json dump = trajectory_dump(ep.trajectory);
    dump["populations"] = games[g].populations;
    const std::string stem = "trajectory_" + std::to_string(g);
    write_text(dir / (stem + ".json"), dump.dump() + "\n");
    write_text(dir / (stem + ".svg"), render_trajectory_svg(dump));
  }
}

int cmd_eval(const Common& c, bool cross, const std::string& zero_shot) {
  Clock clock;
  RunConfig cfg = resolve(c, "eval");
  if (cross) {
    const auto& e = cfg.eval;
    Model ps = load_model(e.pacman_single), pm = load_model(e.pacman_mra);
    Model gs = load_model(e.ghost_single), gm = load_model(e.ghost_mra);
    const std::vector<int> pops =
        e.populations.empty() ? cfg.env.populations.front() : e.populations.front();
    GameSpec spec = single_game(cfg, pops);
    fs::path dir = prepare_output(cfg);
    CrossPlayReport rep = cross_play(ps, pm, gs, gm, spec, e.runs, cfg.seed, cfg.train.threads);
    json out = rep.to_json();
    out["populations"] = pops;
    out["runs"] = e.runs;
    write_text(dir / "cross_play.json", out.dump(2) + "\n");
    write_manifest(dir, cfg, clock, {{"report", "cross_play.json"}});
    std::cout << out.dump() << "\n";
    return 0;
  }
  Model model = load_model(cfg.checkpoint);
  const std::string mode_name = zero_shot.empty() ? cfg.eval.mode : zero_shot;
  EvalMode mode;
  try {
    mode = parse_eval_mode(mode_name);
  } catch (const ParameterError& err) {
    throw UsageError(err.what());
  }
  const auto pop_list = cfg.eval.populations.empty() ? model.game_populations : cfg.eval.populations;
  std::vector<GameSpec> games;
  for (const auto& p : pop_list) games.push_back(single_game(cfg, p));
  fs::path dir = prepare_output(cfg);
  json out;
  if (mode == EvalMode::adapted) {
    // One adapted model per evaluation game, each scored with the expect protocol.
    EvalReport merged;
    merged.mode = mode;
    merged.runs = cfg.eval.runs;
    for (std::size_t g = 0; g < games.size(); ++g) {
      AdaptResult res = adapt(model, games[g], adapt_config(cfg));
      EvalReport one = zero_shot_eval(res.model, {games[g]}, cfg.eval.runs, mode, cfg.seed, cfg.train.threads);
      merged.populations.push_back(games[g].populations);
      merged.role_means.push_back(one.role_means.front());
    }
    out = merged.to_json();
  } else {
    out = zero_shot_eval(model, games, cfg.eval.runs, mode, cfg.seed, cfg.train.threads).to_json();
  }
  write_text(dir / "eval.json", out.dump(2) + "\n");
  if (cfg.eval.trajectory) dump_trajectories(model, games, cfg, dir);
  write_manifest(dir, cfg, clock, {{"report", "eval.json"}, {"source_checkpoint", cfg.checkpoint}});
  std::cout << out.dump() << "\n";
  return 0;
}

struct OracleArgs {
  std::vector<std::string> games;
  std::vector<std::string> eval_games;
  std::string check;
  std::string policy;
  int probes = -1;
  int cases = 200;
};

JointPolicy read_policy(const std::string& path, const TabularMG& mg) {
  std::ifstream in(path);
  if (!in) throw UsageError("policy file not found: " + path);
  JointPolicy pi;
  try {
    pi = json::parse(in).get<JointPolicy>();
  } catch (const json::exception& e) {
    throw UsageError("policy file " + path + ": " + e.what());
  }
  check_policy(mg, pi);
  return pi;
}

int cmd_oracle(const Common& c, const OracleArgs& a) {
  Clock clock;
  RunConfig cfg = resolve(c, "oracle");
  std::vector<std::string> game_paths = a.games;
  if (game_paths.empty() && !cfg.oracle.game.empty()) game_paths.push_back(cfg.oracle.game);
  std::vector<std::string> eval_paths = a.eval_games;
  if (eval_paths.empty() && !cfg.oracle.eval_game.empty()) eval_paths.push_back(cfg.oracle.eval_game);
  const std::string check = a.check.empty() ? cfg.oracle.check : a.check;
  const int probes = a.probes > 0 ? a.probes : cfg.oracle.probes;
  if (game_paths.empty()) throw UsageError("oracle needs --game");
  std::vector<TabularMG> train_set;
  for (const auto& p : game_paths) {
    if (!fs::exists(p)) throw UsageError("game file not found: " + p);
    train_set.push_back(load_tabular(p));
  }
  const TabularMG& mg = train_set.front();
  Rng rng = Rng(cfg.seed).split("oracle");
  json out;
  out["check"] = check;
  out["game"] = game_paths.front();
  if (check == "nashconv") {
    check_oracle_scope(mg);
    JointPolicy pi = a.policy.empty() ? uniform_policy(mg) : read_policy(a.policy, mg);
    const double d = nashconv(mg, pi);
    out["policy"] = a.policy.empty() ? "uniform" : a.policy;
    out["nashconv"] = d;
    out["is_equilibrium"] = d <= cfg.oracle.tol;
    out["tol"] = cfg.oracle.tol;
    json values = json::array();
    for (int i = 0; i < mg.agents(); ++i) {
      BestResponse br = best_response(mg, pi, i);
      Eigen::VectorXd v = policy_value(mg, pi, i);
      values.push_back({{"agent", i}, {"value", std::vector<double>(v.data(), v.data() + v.size())},
                        {"best_response_value", std::vector<double>(br.value.data(), br.value.data() + br.value.size())}});
    }
    out["agents"] = values;
  } else if (check == "lemma1") {
    check_oracle_scope(mg);
    Rng probe_rng = rng.split("probes");
    LipschitzEstimate iota = lipschitz_estimate(mg, probes, probe_rng);
    fs::path dir = prepare_output(cfg);
    std::ofstream csv(dir / "lemma1_audit.csv");
    csv << "case,nashconv,bound,kappa_sum,holds\n";
    csv.precision(17);
    int violations = 0;
    Rng case_rng = rng.split("cases");
    for (int k = 0; k < a.cases; ++k) {
      Rng pr = case_rng.split(static_cast<std::uint64_t>(k));
      JointPolicy pi = random_policy(mg, pr);
      Lemma1Report rep = lemma1_check(mg, pi, iota.value);
      violations += rep.holds ? 0 : 1;
      csv << k << "," << rep.lhs << "," << rep.rhs << "," << rep.kappa_sum << "," << (rep.holds ? 1 : 0) << "\n";
    }
    out["iota"] = iota.value;
    out["probes"] = iota.probes;
    out["cases"] = a.cases;
    out["violations"] = violations;
    out["holds"] = violations == 0;
    out["rewards_in_unit_interval"] = mg.rewards_in_unit_interval();
    out["cases_csv"] = (dir / "lemma1_audit.csv").string();
    write_manifest(dir, cfg, clock, {{"report", "lemma1_audit.csv"}});
  } else if (check == "sigma") {
    if (eval_paths.empty()) throw UsageError("sigma needs --eval-game");
    std::vector<TabularMG> eval_set;
    for (const auto& p : eval_paths) {
      if (!fs::exists(p)) throw UsageError("game file not found: " + p);
      eval_set.push_back(load_tabular(p));
    }
    SigmaReport rep = sigma_distance(train_set, eval_set, cfg.oracle.resolution, cfg.oracle.tol);
    out["eval_games"] = eval_paths;
    out["train_games"] = game_paths;
    out["sigma"] = rep.sigma;
    out["tol"] = rep.tol;
    out["resolution"] = rep.resolution;
    out["train_equilibria"] = rep.train_equilibria;
    out["eval_equilibria"] = rep.eval_equilibria;
  } else {
    throw UsageError("unknown oracle check '" + check + "' (nashconv | lemma1 | sigma)");
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_plot(const Common& c, std::vector<std::string> inputs, const std::string& kind_flag, const std::string& out_flag) {
  RunConfig cfg = resolve(c, "plot");
  if (inputs.empty()) inputs = cfg.plot.metrics;
  if (inputs.empty()) throw UsageError("plot needs at least one input file");
  for (const auto& p : inputs)
    if (!fs::exists(p)) throw UsageError("plot input not found: " + p);
  PlotKind kind;
  try {
    kind = parse_plot_kind(kind_flag.empty() ? cfg.plot.kind : kind_flag);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  fs::path out = out_flag.empty() ? cfg.plot.out : out_flag;
  if (out.empty()) out = fs::path(cfg.output) / (to_string(kind) + ".svg");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::vector<fs::path> paths(inputs.begin(), inputs.end());
  emit_plot(paths, kind, out);
  std::cout << out.string() << "\n";
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "YAML run configuration");
  sub->add_option("--output", c.output, "Output directory (overrides the config)");
  sub->add_option("--checkpoint", c.checkpoint, "Checkpoint directory (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Population-varying multi-agent training, adaptation, evaluation and Nash oracles"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  auto* train = app.add_subcommand("train", "Train on the configured game set");
  auto* adapt_cmd = app.add_subcommand("adapt", "Adapt a checkpoint to a novel population");
  auto* eval = app.add_subcommand("eval", "Zero-shot, adapted or cross-play evaluation");
  auto* oracle = app.add_subcommand("oracle", "Exact checks on tabular games");
  auto* plot = app.add_subcommand("plot", "Render SVG curves or trajectories");
  for (auto* s : {train, adapt_cmd, eval, oracle, plot}) add_common(s, common);

  bool cross = false;
  std::string zero_shot;
  eval->add_flag("--cross", cross, "Cross-play table of single-game vs multi-game models");
  eval->add_option("--zero-shot", zero_shot, "Latent protocol")->check(CLI::IsMember({"expect", "enumerate"}));

  OracleArgs oa;
  oracle->add_option("--game", oa.games, "Tabular game file (repeat for a training set)");
  oracle->add_option("--eval-game", oa.eval_games, "Evaluation game file for the sigma check");
  oracle->add_option("--check", oa.check, "nashconv | lemma1 | sigma");
  oracle->add_option("--policy", oa.policy, "JSON joint policy [agent][state][action] for nashconv");
  oracle->add_option("--probes", oa.probes, "Lipschitz probes");
  oracle->add_option("--cases", oa.cases, "Random joint policies audited by lemma1")->check(CLI::PositiveNumber);

  std::vector<std::string> plot_inputs;
  std::string plot_kind, plot_out;
  plot->add_option("inputs", plot_inputs, "Metrics JSONL files (one per seed) or trajectory dumps");
  plot->add_option("--kind", plot_kind, "returns | mi | aux_loss | trajectories");
  plot->add_option("--out", plot_out, "Output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(common);
    if (*adapt_cmd) return cmd_adapt(common);
    if (*eval) return cmd_eval(common, cross, zero_shot);
    if (*oracle) return cmd_oracle(common, oa);
    if (*plot) return cmd_plot(common, plot_inputs, plot_kind, plot_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "invalid parameter: " << e.what() << "\n";
    return 2;
  } catch (const ScopeError& e) {
    std::cerr << "out of scope: " << e.what() << "\n";
    return 2;
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << "\n  diagnostic: " << e.dump_path() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
