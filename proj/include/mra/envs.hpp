#pragma once

#include <array>
#include <string>
#include <vector>

#include "mra/rng.hpp"

namespace mra {

enum class EnvKind { treasure, resource, pacman, tabular };

std::string to_string(EnvKind kind);
EnvKind parse_env_kind(const std::string& name);

inline constexpr int kNumActions = 5;  // stay, up, down, left, right

struct Dynamics {
  double dt = 0.1;
  double damping = 0.25;
  double accel = 1.0;
  double max_speed = 1.0;
  double bound = 1.2;
  double agent_radius = 0.05;
  double landmark_radius = 0.05;
};

struct RewardTable {
  double treasure_touch = 1.0;
  double treasure_shaping = 0.1;
  double food = 1.0;
  double caught = 5.0;
  double catch_bonus = 5.0;
  double pacman_shaping = 0.05;
};

struct GameSpec {
  EnvKind kind = EnvKind::treasure;
  std::vector<int> populations{2};  // agents per role, role-major agent indexing
  int horizon = 20;
  int landmarks = 2;  // treasures, resources, or food dots
  bool sparse = false;
  int game_id = 0;
  Dynamics dynamics{};
  RewardTable rewards{};

  int total_agents() const;
  int roles() const { return static_cast<int>(populations.size()); }
  int role_of(int agent) const;
  int first_of_role(int role) const;
  // Per-entity feature width; depends on roles and landmarks only.
  int entity_width() const;
  void validate() const;
};

struct GameSet {
  EnvKind kind = EnvKind::treasure;
  std::vector<GameSpec> games;
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(games.size()); }
  int roles() const { return games.empty() ? 0 : games.front().roles(); }
  int entity_width() const { return games.empty() ? 0 : games.front().entity_width(); }
};

int default_landmarks(EnvKind kind);

// One GameSpec per population entry; game_id is the position in the list.
GameSet make_game_set(EnvKind kind, const std::vector<std::vector<int>>& populations, int horizon = 20,
                      int landmarks = -1, bool sparse = false);

using Vec2 = std::array<double, 2>;

struct WorldState {
  std::vector<Vec2> pos;
  std::vector<Vec2> vel;
  std::vector<Vec2> landmark_pos;
  std::vector<double> landmark_size;
  int t = 0;
  std::vector<int> touches;  // per agent, collection/catch events in the last step
  Rng rng{0};                // landmark regeneration stream
};

// Egocentric observation of every agent, flattened as
// [agent][entity][feature] with entity 0 = self and entities 1.. the other
// agents in increasing agent index.
struct JointObs {
  int agents = 0;
  int width = 0;
  std::vector<float> data;

  int entities() const { return agents; }
  const float* entity(int agent, int e) const {
    return data.data() + (static_cast<std::size_t>(agent) * agents + e) * width;
  }
  std::size_t agent_stride() const { return static_cast<std::size_t>(agents) * width; }
};

struct StepResult {
  JointObs obs;
  std::vector<double> rewards;
  bool done = false;
};

class Env {
 public:
  explicit Env(GameSpec spec);

  const GameSpec& spec() const { return spec_; }
  const WorldState& state() const { return state_; }
  void set_state(WorldState s) { state_ = std::move(s); }

  JointObs reset(Rng& rng);
  StepResult step(const std::vector<int>& actions);
  JointObs observe_all() const;
  std::vector<float> observe(int agent) const;

 private:
  std::vector<double> rewards_after_move();
  GameSpec spec_;
  WorldState state_;
};

Vec2 action_direction(int action);

}  // namespace mra
