#pragma once

#include <optional>
#include <vector>

#include "mra/agents.hpp"

namespace mra {

struct EpisodeOptions {
  ActMode mode = ActMode::sample;
  int psi_row = 0;  // latent distribution row; the game id for training games
  // One latent class per role shared by all its agents; empty = sample per agent.
  std::vector<int> role_latent;
  bool keep_transitions = true;
  bool record_trajectory = false;
};

struct TrajectoryStep {
  std::vector<Vec2> pos;
  std::vector<Vec2> landmarks;
  std::vector<int> actions;
  std::vector<double> rewards;
};

struct EpisodeResult {
  std::vector<Transition> transitions;
  std::vector<double> agent_returns;  // undiscounted sums
  std::vector<double> role_returns;   // mean over the agents of each role
  std::vector<int> latent;
  std::vector<TrajectoryStep> trajectory;
  int steps = 0;
};

// Deterministic given (model, spec, rng).
EpisodeResult run_episode(const Model& model, const GameSpec& spec, Rng rng, const EpisodeOptions& opts);

// Episode k uses stream base.split(first_index + k); results come back in
// episode order whatever the thread count.
std::vector<EpisodeResult> run_episodes(const Model& model, const GameSpec& spec, const Rng& base,
                                        std::uint64_t first_index, int count, const EpisodeOptions& opts,
                                        int threads);

}  // namespace mra
