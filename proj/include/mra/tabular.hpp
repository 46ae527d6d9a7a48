#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mra/rng.hpp"

namespace mra {

// Finite Markov game. Joint actions are mixed-radix indices with agent 0 the
// most significant digit.
struct TabularMG {
  int states = 0;
  std::vector<int> actions;  // per agent
  std::vector<int> roles;    // per agent; defaults to one role per agent
  double gamma = 0.9;
  std::vector<double> transitions;  // [state][joint][next]
  std::vector<double> rewards;      // [agent][state][joint]

  int agents() const { return static_cast<int>(actions.size()); }
  int joint_count() const;
  double p(int s, int joint, int next) const {
    return transitions[(static_cast<std::size_t>(s) * joint_count() + joint) * states + next];
  }
  double r(int agent, int s, int joint) const {
    return rewards[(static_cast<std::size_t>(agent) * states + s) * joint_count() + joint];
  }
  std::vector<int> decode(int joint) const;
  int encode(const std::vector<int>& joint) const;

  // Throws ContractError on malformed tables; rows must sum to 1 within 1e-9.
  void validate() const;
  bool rewards_in_unit_interval() const;
};

TabularMG parse_tabular(const std::string& text);
TabularMG load_tabular(const std::filesystem::path& path);
std::string to_text(const TabularMG& mg);

// gamma = 0, payoffs +1 to agent 0 on a match and -1 on a mismatch.
TabularMG matching_pennies();

// Dense random game; rewards uniform in [0,1], transition rows Dirichlet(1).
TabularMG random_tabular(int states, const std::vector<int>& actions, double gamma, Rng& rng);

}  // namespace mra
