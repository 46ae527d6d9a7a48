#include "mra/rollout.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "mra/errors.hpp"

namespace mra {

EpisodeResult run_episode(const Model& model, const GameSpec& spec, Rng rng, const EpisodeOptions& opts) {
  if (spec.roles() != model.roles) throw ContractError("game role count differs from the model's");
  if (spec.entity_width() != model.entity_width) throw ContractError("game entity width differs from the model's");
  Env env(spec);
  Rng reset_rng = rng.split("reset");
  Rng latent_rng = rng.split("latent");
  Rng act_rng = rng.split("act");
  JointObs obs = env.reset(reset_rng);
  const int n = spec.total_agents();
  const int m = n - 1;
  EpisodeResult out;
  out.latent.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int r = spec.role_of(i);
    if (!opts.role_latent.empty()) {
      out.latent[static_cast<std::size_t>(i)] = opts.role_latent.at(static_cast<std::size_t>(r));
    } else {
      out.latent[static_cast<std::size_t>(i)] = sample_latent(model.latent_spec(r), opts.psi_row, latent_rng);
    }
  }
  out.agent_returns.assign(static_cast<std::size_t>(n), 0.0);
  for (int t = 0; t < spec.horizon; ++t) {
    std::vector<int> actions(static_cast<std::size_t>(n));
    std::vector<float> graphs(static_cast<std::size_t>(n) * m);
    for (int r = 0; r < spec.roles(); ++r) {
      RoleAct ra = act_role(model, r, spec, obs, out.latent, act_rng, opts.mode);
      const int first = spec.first_of_role(r);
      for (std::size_t k = 0; k < ra.actions.size(); ++k) {
        actions[first + k] = ra.actions[k];
        std::copy_n(ra.graphs.begin() + static_cast<std::ptrdiff_t>(k * m), m, graphs.begin() + static_cast<std::ptrdiff_t>((first + k) * m));
      }
    }
    StepResult sr = env.step(actions);
    for (int i = 0; i < n; ++i) out.agent_returns[static_cast<std::size_t>(i)] += sr.rewards[static_cast<std::size_t>(i)];
    if (opts.record_trajectory) {
      TrajectoryStep ts;
      ts.pos = env.state().pos;
      ts.landmarks = env.state().landmark_pos;
      ts.actions = actions;
      ts.rewards = sr.rewards;
      out.trajectory.push_back(std::move(ts));
    }
    if (opts.keep_transitions) {
      Transition tr;
      tr.game_id = spec.game_id;
      tr.obs = obs;
      tr.next_obs = sr.obs;
      tr.actions = actions;
      for (double r : sr.rewards) tr.rewards.push_back(static_cast<float>(r));
      tr.graphs = std::move(graphs);
      tr.latent = out.latent;
      out.transitions.push_back(std::move(tr));
    }
    obs = std::move(sr.obs);
    ++out.steps;
  }
  out.role_returns.assign(static_cast<std::size_t>(spec.roles()), 0.0);
  for (int i = 0; i < n; ++i) out.role_returns[static_cast<std::size_t>(spec.role_of(i))] += out.agent_returns[static_cast<std::size_t>(i)];
  for (int r = 0; r < spec.roles(); ++r) out.role_returns[static_cast<std::size_t>(r)] /= spec.populations[static_cast<std::size_t>(r)];
  return out;
}

std::vector<EpisodeResult> run_episodes(const Model& model, const GameSpec& spec, const Rng& base,
                                        std::uint64_t first_index, int count, const EpisodeOptions& opts,
                                        int threads) {
  std::vector<EpisodeResult> out(static_cast<std::size_t>(std::max(count, 0)));
  if (count <= 0) return out;
  const int workers = std::clamp(threads, 1, count);
  if (workers == 1) {
    for (int k = 0; k < count; ++k)
      out[static_cast<std::size_t>(k)] = run_episode(model, spec, base.split(first_index + static_cast<std::uint64_t>(k)), opts);
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int k = next++; k < count; k = next++)
          out[static_cast<std::size_t>(k)] =
              run_episode(model, spec, base.split(first_index + static_cast<std::uint64_t>(k)), opts);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace mra
