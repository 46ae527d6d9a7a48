#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mra/train.hpp"

namespace mra {

// Training game whose latent row serves `populations`: exact match first,
// otherwise nearest total population, ties to the smaller total.
int nearest_psi_row(const Model& model, const std::vector<int>& populations);

struct AdaptConfig {
  TrainConfig train;            // beta, gamma, batch, tau, buffer_capacity, seed are used
  int episodes = 200;
  int updates_per_episode = -1;  // -1: one update per environment step
  bool freeze_theta = false;     // ablation: only phi (and the critic) adapt
};

struct AdaptResult {
  Model model;
  std::vector<EpisodeRecord> records;
};

AdaptResult adapt(const Model& model, const GameSpec& spec, const AdaptConfig& cfg,
                  const std::function<void(const EpisodeRecord&)>& on_episode = {});

enum class EvalMode { zero_shot_expect, zero_shot_enumerate, adapted };

std::string to_string(EvalMode m);
EvalMode parse_eval_mode(const std::string& name);

// Mean per-role return of every joint latent assignment (one class per role,
// shared by that role's agents) over `runs` seeded episodes. Run k uses the
// same stream for every assignment.
struct LatentSweep {
  std::vector<std::vector<int>> combos;          // [combo][role]
  std::vector<std::vector<double>> role_means;   // [combo][role]
  std::vector<std::vector<double>> combo_probs;  // [combo][role] p_r(z_r)
};

LatentSweep sweep_latents(const Model& model, const GameSpec& spec, const std::vector<int>& psi_rows, int runs,
                          const Rng& base, int threads);

struct EvalReport {
  EvalMode mode = EvalMode::zero_shot_expect;
  int runs = 40;
  std::vector<std::vector<int>> populations;         // per game
  std::vector<std::vector<double>> role_means;       // [game][role]
  std::vector<std::vector<int>> best_latent;         // [game][role], enumerate mode only

  nlohmann::json to_json() const;
};

// Expect: exact expectation over the latent prior of the sweep. Enumerate:
// per role, the best sweep entry. Adapted: expect protocol on an adapted model.
EvalReport zero_shot_eval(const Model& model, const std::vector<GameSpec>& games, int runs, EvalMode mode,
                          std::uint64_t seed, int threads = 1);

// Scales a table so its largest cell is exactly 1. Tables with a negative
// cell are min-max scaled instead; a constant table maps to all ones.
std::vector<std::vector<double>> normalize_table(const std::vector<std::vector<double>>& raw);

struct CrossPlayReport {
  // [ghost][pacman] with index 0 = single-game, 1 = multi-game model.
  std::vector<std::vector<double>> raw_pacman, raw_ghost;
  std::vector<std::vector<double>> pacman, ghost;

  nlohmann::json to_json() const;
};

// Role 0 plays pacman, role 1 plays ghost; each model supplies the
// parameters of its own role.
CrossPlayReport cross_play(const Model& pacman_single, const Model& pacman_mra, const Model& ghost_single,
                           const Model& ghost_mra, const GameSpec& spec, int runs, std::uint64_t seed, int threads = 1);

}  // namespace mra
