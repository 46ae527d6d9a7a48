#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "mra/envs.hpp"
#include "mra/model.hpp"

namespace mra {

struct Transition {
  int game_id = 0;
  JointObs obs;
  JointObs next_obs;
  std::vector<int> actions;
  std::vector<float> rewards;
  std::vector<float> graphs;  // [agent][N-1], hard graph used at action time
  std::vector<int> latent;    // per agent latent class

  friend bool operator==(const Transition& a, const Transition& b) {
    return a.game_id == b.game_id && a.obs.data == b.obs.data && a.next_obs.data == b.next_obs.data &&
           a.obs.agents == b.obs.agents && a.actions == b.actions && a.rewards == b.rewards && a.graphs == b.graphs &&
           a.latent == b.latent;
  }
};

using TransitionPtr = std::shared_ptr<const Transition>;

// Per-game FIFO partitions. Pushes may come from several threads; sampling
// takes a consistent snapshot under the same lock.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity_per_game);

  void push(Transition t);
  std::size_t size(int game_id) const;
  std::size_t capacity() const { return capacity_; }
  bool ready(int game_id, std::size_t batch) const { return size(game_id) >= batch; }
  // Uniform sample without replacement; nullopt when fewer than `batch` items are stored.
  std::optional<std::vector<TransitionPtr>> sample(int game_id, std::size_t batch, Rng& rng) const;
  std::vector<int> games() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::map<int, std::deque<TransitionPtr>> parts_;
};

// targets = (1 - tau) targets + tau online, tau in (0, 1].
void soft_update(ParamGroup& targets, const ParamGroup& online, double tau);

enum class ActMode { sample, greedy };

struct ActResult {
  int action = 0;
  double log_prob = 0.0;
  std::vector<double> probs;
};

// One agent. entities: (1 + m) rows of F features, self first. g has m
// weights; z is the latent class used to augment entities.
ActResult policy_act(const RoleModel& rm, const ModelConfig& cfg, int entity_width, const std::vector<float>& entities,
                     const std::vector<float>& g, int z, Rng& rng, ActMode mode);

struct RoleAct {
  std::vector<int> actions;
  std::vector<float> graphs;  // [agent][m]
  std::vector<std::vector<double>> probs;
};

// Every agent of `role` in one joint observation: graph from phi, action from theta.
RoleAct act_role(const Model& model, int role, const GameSpec& spec, const JointObs& obs,
                 const std::vector<int>& latent, Rng& rng, ActMode mode);

// Q(o, a) for `agent` under its role critic, given joint actions and its graph g^i.
double critic_eval(const Model& model, const GameSpec& spec, const JointObs& obs, const std::vector<int>& actions,
                   const std::vector<float>& graph, int agent);

// Rows for every (sample, agent of role) pair, sample-major.
struct RoleRows {
  int rows = 0;
  int m = 0;
  std::vector<int> sample;
  std::vector<int> agent;
  ad::Tensor selfs, others;            // from o
  ad::Tensor next_selfs, next_others;  // from o'
  ad::Tensor graph;                    // stored g [S,m]
  ad::Tensor z;                        // one-hot [S,Z]
  std::vector<int> own_action;
  ad::Tensor own_onehot;               // [S,5]
  ad::Tensor reward;                   // [S,1]
};

RoleRows gather_role(const std::vector<TransitionPtr>& batch, const GameSpec& spec, int role, int latent);

// Entities of row agents from an arbitrary joint observation list.
void gather_entities(const std::vector<const JointObs*>& obs, const std::vector<int>& sample,
                     const std::vector<int>& agent, ad::Tensor& selfs, ad::Tensor& others);

// Critic inputs for other agents: [entity | one-hot action | g weight].
ad::Tensor critic_other_rows(const ad::Tensor& others, const std::vector<int>& sample, const std::vector<int>& agent,
                             const std::vector<std::vector<int>>& joint_actions, const ad::Tensor& graph, int m);

}  // namespace mra
