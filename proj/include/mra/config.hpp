#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mra/adapt_eval.hpp"
#include "mra/envs.hpp"
#include "mra/model.hpp"
#include "mra/train.hpp"

namespace mra {

struct EnvConfig {
  std::string kind = "treasure";
  std::vector<std::vector<int>> populations{{2}};  // one entry per training game
  int horizon = 20;
  int landmarks = -1;  // -1: environment default
  bool sparse = false;
};

struct AdaptSection {
  std::vector<int> population;  // novel game; empty = first training game
  int episodes = 200;
  int updates_per_episode = -1;
  bool freeze_theta = false;
};

struct EvalSection {
  int runs = 40;
  std::string mode = "expect";  // expect | enumerate | adapted
  bool cross = false;
  std::vector<std::vector<int>> populations;  // empty = the checkpoint's training games
  std::string pacman_single, pacman_mra, ghost_single, ghost_mra;
  bool trajectory = false;
};

struct OracleSection {
  std::string game;
  std::string eval_game;  // second game file for the sigma check
  std::string check = "nashconv";  // nashconv | lemma1 | sigma
  int probes = 1000;
  double resolution = 0.05;
  double tol = 1e-3;
};

struct PlotSection {
  std::vector<std::string> metrics;
  std::string kind = "returns";
  std::string out;
};

struct RunConfig {
  std::string command = "train";  // train | adapt | eval | oracle | plot
  std::uint64_t seed = 0;
  std::string output = "run";
  std::string checkpoint;
  EnvConfig env;
  ModelConfig model;
  TrainConfig train;
  AdaptSection adapt;
  EvalSection eval;
  OracleSection oracle;
  PlotSection plot;

  void validate() const;
  GameSet game_set() const;
};

// Unknown keys, type mismatches and out-of-range values raise ConfigError
// carrying the 1-based line of the offending node.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Every field, defaults included; parse_config(emit_config(c)) reproduces c.
std::string emit_config(const RunConfig& cfg);

}  // namespace mra
