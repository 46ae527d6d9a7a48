#include "mra/adapt_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mra/errors.hpp"

namespace mra {

int nearest_psi_row(const Model& model, const std::vector<int>& populations) {
  const auto& pops = model.game_populations;
  if (pops.empty()) throw ContractError("nearest_psi_row: model has no training games");
  for (std::size_t m = 0; m < pops.size(); ++m)
    if (pops[m] == populations) return static_cast<int>(m);
  const int total = std::accumulate(populations.begin(), populations.end(), 0);
  int best = 0;
  int best_gap = -1, best_total = 0;
  for (std::size_t m = 0; m < pops.size(); ++m) {
    const int t = std::accumulate(pops[m].begin(), pops[m].end(), 0);
    const int gap = std::abs(t - total);
    if (best_gap < 0 || gap < best_gap || (gap == best_gap && t < best_total)) {
      best = static_cast<int>(m);
      best_gap = gap;
      best_total = t;
    }
  }
  return best;
}

namespace {

void check_compatible(const Model& model, const GameSpec& spec) {
  if (spec.roles() != model.roles) throw ContractError("role count of the game differs from the checkpoint");
  if (spec.entity_width() != model.entity_width)
    throw ContractError("entity width of the game differs from the checkpoint");
  if (!model.env_kind.empty() && model.env_kind != to_string(spec.kind))
    throw ContractError("environment kind differs from the checkpoint");
}

}  // namespace

AdaptResult adapt(const Model& model, const GameSpec& spec, const AdaptConfig& cfg,
                  const std::function<void(const EpisodeRecord&)>& on_episode) {
  check_compatible(model, spec);
  cfg.train.validate();
  if (cfg.episodes < 0) throw ParameterError("adaptation episodes must be >= 0");
  AdaptResult out{model, {}};
  Model& mdl = out.model;
  const int roles = mdl.roles;
  ReplayBuffer buffer(cfg.train.buffer_capacity);
  std::vector<AdamState> critic_opt(static_cast<std::size_t>(roles)), theta_opt(static_cast<std::size_t>(roles)),
      phi_opt(static_cast<std::size_t>(roles));
  const Rng root(cfg.train.seed);
  const Rng rollout = root.split("adapt_rollout");
  EpisodeOptions opts;
  opts.psi_row = nearest_psi_row(mdl, spec.populations);
  std::uint64_t updates = 0;
  for (int e = 0; e < cfg.episodes; ++e) {
    EpisodeResult res = run_episode(mdl, spec, rollout.split(static_cast<std::uint64_t>(e)), opts);
    for (auto& t : res.transitions) buffer.push(std::move(t));
    const int n_updates = cfg.updates_per_episode < 0 ? res.steps : cfg.updates_per_episode;
    for (int u = 0; u < n_updates; ++u) {
      const Rng rng = root.split("adapt_update").split(updates++);
      Rng batch_rng = rng.split("batch");
      auto batch = buffer.sample(spec.game_id, static_cast<std::size_t>(cfg.train.batch), batch_rng);
      if (!batch) break;
      BlockData block = make_block(mdl, spec, std::move(*batch));
      refresh_critic_graphs(mdl, block);
      Rng target_rng = rng.split("target");
      const auto y = critic_targets(mdl, block, cfg.train.gamma, target_rng);
      for (int r = 0; r < roles; ++r)
        critic_update(mdl, r, block, y[static_cast<std::size_t>(r)], critic_opt[static_cast<std::size_t>(r)], cfg.train.beta);
      Rng act_rng = rng.split("resample");
      const auto acts = resample_actions(mdl, block, act_rng);
      for (int r = 0; r < roles; ++r)
        policy_update(mdl, r, block, acts, theta_opt[static_cast<std::size_t>(r)], cfg.train.beta,
                      &phi_opt[static_cast<std::size_t>(r)], !cfg.freeze_theta);
      for (auto& rm : mdl.role) {
        soft_update(rm.theta_bar, rm.theta, cfg.train.tau);
        soft_update(rm.zeta_bar, rm.zeta, cfg.train.tau);
      }
    }
    EpisodeRecord rec;
    rec.episode = e;
    rec.game_id = spec.game_id;
    rec.role_returns = res.role_returns;
    for (double v : rec.role_returns)
      if (!std::isfinite(v)) throw TrainingAborted("non-finite return during adaptation", "");
    if (on_episode) on_episode(rec);
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::string to_string(EvalMode m) {
  switch (m) {
    case EvalMode::zero_shot_expect: return "zero_shot_expect";
    case EvalMode::zero_shot_enumerate: return "zero_shot_enumerate";
    case EvalMode::adapted: return "adapted";
  }
  return "?";
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "expect" || name == "zero_shot_expect") return EvalMode::zero_shot_expect;
  if (name == "enumerate" || name == "zero_shot_enumerate") return EvalMode::zero_shot_enumerate;
  if (name == "adapted") return EvalMode::adapted;
  throw ParameterError("unknown evaluation mode '" + name + "'");
}

LatentSweep sweep_latents(const Model& model, const GameSpec& spec, const std::vector<int>& psi_rows, int runs,
                          const Rng& base, int threads) {
  check_compatible(model, spec);
  if (runs < 1) throw ParameterError("evaluation runs must be >= 1");
  if (static_cast<int>(psi_rows.size()) != model.roles) throw ContractError("sweep_latents: one psi row per role");
  const int zc = model.config.latent;
  const int roles = model.roles;
  std::vector<std::vector<double>> prior;
  for (int r = 0; r < roles; ++r) prior.push_back(latent_probs(model.latent_spec(r), psi_rows[static_cast<std::size_t>(r)]));
  LatentSweep sweep;
  std::vector<int> combo(static_cast<std::size_t>(roles), 0);
  for (;;) {
    EpisodeOptions opts;
    opts.role_latent = combo;
    opts.keep_transitions = false;
    auto results = run_episodes(model, spec, base, 0, runs, opts, threads);
    std::vector<double> means(static_cast<std::size_t>(roles), 0.0), probs;
    for (const auto& res : results)
      for (int r = 0; r < roles; ++r) means[static_cast<std::size_t>(r)] += res.role_returns[static_cast<std::size_t>(r)];
    for (auto& v : means) v /= runs;
    for (int r = 0; r < roles; ++r)
      probs.push_back(prior[static_cast<std::size_t>(r)][static_cast<std::size_t>(combo[static_cast<std::size_t>(r)])]);
    sweep.combos.push_back(combo);
    sweep.role_means.push_back(std::move(means));
    sweep.combo_probs.push_back(std::move(probs));
    int r = roles - 1;
    while (r >= 0 && ++combo[static_cast<std::size_t>(r)] == zc) combo[static_cast<std::size_t>(r--)] = 0;
    if (r < 0) break;
  }
  return sweep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"mode", to_string(mode)}, {"runs", runs}, {"populations", populations}, {"role_means", role_means}};
  if (!best_latent.empty()) j["best_latent"] = best_latent;
  return j;
}

EvalReport zero_shot_eval(const Model& model, const std::vector<GameSpec>& games, int runs, EvalMode mode,
                          std::uint64_t seed, int threads) {
  EvalReport rep;
  rep.mode = mode;
  rep.runs = runs;
  const Rng root = Rng(seed).split("eval");
  for (std::size_t g = 0; g < games.size(); ++g) {
    const GameSpec& spec = games[g];
    const int row = nearest_psi_row(model, spec.populations);
    auto sweep = sweep_latents(model, spec, std::vector<int>(static_cast<std::size_t>(model.roles), row), runs,
                               root.split(static_cast<std::uint64_t>(g)), threads);
    std::vector<double> expect(static_cast<std::size_t>(model.roles), 0.0);
    std::vector<double> best(static_cast<std::size_t>(model.roles), -INFINITY);
    std::vector<int> best_z(static_cast<std::size_t>(model.roles), 0);
    for (std::size_t c = 0; c < sweep.combos.size(); ++c) {
      double p = 1.0;
      for (double q : sweep.combo_probs[c]) p *= q;
      for (int r = 0; r < model.roles; ++r) {
        const double v = sweep.role_means[c][static_cast<std::size_t>(r)];
        expect[static_cast<std::size_t>(r)] += p * v;
        if (v > best[static_cast<std::size_t>(r)]) {
          best[static_cast<std::size_t>(r)] = v;
          best_z[static_cast<std::size_t>(r)] = sweep.combos[c][static_cast<std::size_t>(r)];
        }
      }
    }
    // A convex combination never exceeds its largest term; clamp rounding.
    for (int r = 0; r < model.roles; ++r)
      expect[static_cast<std::size_t>(r)] = std::min(expect[static_cast<std::size_t>(r)], best[static_cast<std::size_t>(r)]);
    rep.populations.push_back(spec.populations);
    if (mode == EvalMode::zero_shot_enumerate) {
      rep.role_means.push_back(best);
      rep.best_latent.push_back(best_z);
    } else {
      rep.role_means.push_back(expect);
    }
  }
  return rep;
}

std::vector<std::vector<double>> normalize_table(const std::vector<std::vector<double>>& raw) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& row : raw)
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  auto out = raw;
  for (auto& row : out)
    for (auto& v : row) {
      if (hi == lo)
        v = 1.0;
      else if (lo < 0.0)
        v = v == hi ? 1.0 : (v - lo) / (hi - lo);
      else
        v = v == hi ? 1.0 : v / hi;
    }
  return out;
}

nlohmann::json CrossPlayReport::to_json() const {
  return {{"layout", "rows: ghost {single, mra}; columns: pacman {single, mra}"},
          {"raw_pacman", raw_pacman},
          {"raw_ghost", raw_ghost},
          {"pacman", pacman},
          {"ghost", ghost}};
}

CrossPlayReport cross_play(const Model& pacman_single, const Model& pacman_mra, const Model& ghost_single,
                           const Model& ghost_mra, const GameSpec& spec, int runs, std::uint64_t seed, int threads) {
  if (spec.kind != EnvKind::pacman) throw ContractError("cross_play: needs a pacman game");
  const Model* pac[2] = {&pacman_single, &pacman_mra};
  const Model* gho[2] = {&ghost_single, &ghost_mra};
  for (const Model* m : {pac[0], pac[1], gho[0], gho[1]}) check_compatible(*m, spec);
  CrossPlayReport rep;
  rep.raw_pacman.assign(2, std::vector<double>(2, 0.0));
  rep.raw_ghost.assign(2, std::vector<double>(2, 0.0));
  const Rng base = Rng(seed).split("cross_play");
  for (int gi = 0; gi < 2; ++gi)
    for (int pi = 0; pi < 2; ++pi) {
      Model mixed = *pac[pi];
      if (mixed.config.latent != gho[gi]->config.latent || mixed.config.variant != gho[gi]->config.variant)
        throw ContractError("cross_play: latent configuration differs between checkpoints");
      mixed.role[1] = gho[gi]->role[1];
      const std::vector<int> rows{nearest_psi_row(*pac[pi], spec.populations), nearest_psi_row(*gho[gi], spec.populations)};
      auto sweep = sweep_latents(mixed, spec, rows, runs, base, threads);
      double vp = 0.0, vg = 0.0;
      for (std::size_t c = 0; c < sweep.combos.size(); ++c) {
        const double p = sweep.combo_probs[c][0] * sweep.combo_probs[c][1];
        vp += p * sweep.role_means[c][0];
        vg += p * sweep.role_means[c][1];
      }
      rep.raw_pacman[static_cast<std::size_t>(gi)][static_cast<std::size_t>(pi)] = vp;
      rep.raw_ghost[static_cast<std::size_t>(gi)][static_cast<std::size_t>(pi)] = vg;
    }
  rep.pacman = normalize_table(rep.raw_pacman);
  rep.ghost = normalize_table(rep.raw_ghost);
  return rep;
}

}  // namespace mra
