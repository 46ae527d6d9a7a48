#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mra/adam.hpp"
#include "mra/agents.hpp"
#include "mra/rollout.hpp"

namespace mra {

enum class MiMode { sampled, enumerate };

struct TrainConfig {
  double alpha = 1.0;   // outer step
  double beta = 3e-4;   // inner and auxiliary learning rate
  int K = 10;
  double gamma = 0.95;
  int batch = 1024;
  int rollouts = 12;    // episodes collected per game visit
  int min_steps_per_update = 100;
  int mi_samples = 10;  // n
  MiMode mi_mode = MiMode::sampled;
  int total_episodes = 1000;
  std::uint64_t seed = 0;
  double tau = 0.01;
  std::size_t buffer_capacity = 100000;
  int threads = 1;
  int checkpoint_every = 0;  // episodes; 0 disables intermediate checkpoints
  bool record_trace = false;
  bool wall_time = false;

  void validate() const;
};

// ---- per-block learner pieces -------------------------------------------

double bellman_target(double reward, double gamma, double q_bar);
// mean((q - y)^2) over rows; q [S,1], y [S,1].
ad::Var critic_loss_from(ad::Var q, const ad::Tensor& y);
// Negated exact expectation sum_a pi(a|.) Q(a) averaged over rows; its
// gradient equals the expected score-function estimator grad log pi(a) Q(a).
ad::Var policy_surrogate(ad::Var logits, const ad::Tensor& q_all);

// theta_init + alpha (theta_inner - theta_init); alpha == 1 returns theta_inner exactly.
ParamGroup reptile_outer_update(const ParamGroup& theta_init, const ParamGroup& theta_inner, double alpha);

// Expected K-step ascent displacement to second order:
//   beta sum_k g_k + beta^2 sum_k sum_{j<k} H_k g_j
// with g_k, H_k the gradient and Hessian of the k-th objective at the start point.
Eigen::VectorXd reptile_expansion(const std::vector<Eigen::VectorXd>& grads, const std::vector<Eigen::MatrixXd>& hessians,
                                  double beta);

// Everything an update block needs from one minibatch of one game.
struct BlockData {
  GameSpec spec;
  std::vector<TransitionPtr> batch;
  std::vector<RoleRows> rows;                  // per role
  std::vector<std::vector<int>> joint_actions;  // [sample][agent], from the buffer
  std::vector<ad::Tensor> critic_graph;        // per role, g fed to the critic
};

BlockData make_block(const Model& model, const GameSpec& spec, std::vector<TransitionPtr> batch);
// Replace critic graphs by phi(o, z) under the current phi (adaptation).
void refresh_critic_graphs(const Model& model, BlockData& block);

// Target policy probabilities and y per role.
std::vector<ad::Tensor> critic_targets(const Model& model, const BlockData& block, double gamma, Rng& rng);
double critic_update(Model& model, int role, const BlockData& block, const ad::Tensor& y, AdamState& state, double lr);
// Others' actions resampled from the current policies at (o, stored g).
std::vector<std::vector<int>> resample_actions(const Model& model, const BlockData& block, Rng& rng);
// Ascent on the policy surrogate. With phi_state the graph is regenerated
// from phi and the step also updates phi (omega = theta + phi). Returns the
// surrogate objective before the step.
double policy_update(Model& model, int role, const BlockData& block, const std::vector<std::vector<int>>& actions,
                     AdamState& theta_state, double lr, AdamState* phi_state = nullptr, bool update_theta = true);

struct MiResult {
  double bound = 0.0;
  std::vector<ad::Tensor> phi_grads;  // d bound / d phi, empty unless requested
};

// Lower bound on I(g;a|o) for one role: actions enumerated under the online
// policy, log ratio scored by the target policy, marginal over n sampled
// latents (sampled mode) or exactly over p(z) (enumerate mode).
MiResult mi_action_bound(const Model& model, int role, const RoleRows& rows, int game_id, MiMode mode, int n, Rng& rng,
                         bool want_grad);

struct AuxBatch {
  int game_id = 0;
  RoleRows rows;
};

struct AuxResult {
  double loss = 0.0;  // mean cross-entropy
  std::vector<ad::Tensor> psi_grads;
  std::vector<ad::Tensor> xi_grads;
};

AuxResult aux_inference_loss(const Model& model, int role, const std::vector<AuxBatch>& batches, Rng& rng,
                             bool want_grad);

// ---- training loop -------------------------------------------------------

struct EpisodeRecord {
  int episode = 0;
  int game_id = 0;
  std::vector<double> role_returns;
  std::optional<double> mi_bound;
  std::optional<double> aux_loss;
  double wall_ms = 0.0;
};

struct BlockStats {
  double critic_loss = 0.0;
  double policy_objective = 0.0;
  double mi_bound = 0.0;
  std::optional<double> aux_loss;
};

class Trainer {
 public:
  Trainer(GameSet games, Model model, TrainConfig cfg);

  using EpisodeSink = std::function<void(const EpisodeRecord&)>;
  using CheckpointSink = std::function<void(const Model&, int episodes)>;

  void run(const EpisodeSink& on_episode, const CheckpointSink& on_checkpoint = {});
  // One update block (K critic/policy steps, outer step, phi, psi/xi, targets)
  // on `game_id`; nullopt if its buffer is not ready.
  std::optional<BlockStats> update_block(int game_id);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  ReplayBuffer& buffer() { return buffer_; }
  const std::vector<std::string>& trace() const { return trace_; }
  void set_dump_dir(std::filesystem::path p) { dump_dir_ = std::move(p); }
  int blocks() const { return blocks_; }

 private:
  void check_finite(double v, const char* what, int game_id);
  void mark(const char* step);

  GameSet games_;
  Model model_;
  TrainConfig cfg_;
  ReplayBuffer buffer_;
  Rng root_;
  std::vector<AdamState> critic_opt_, phi_opt_, psi_opt_, xi_opt_;
  std::vector<std::string> trace_;
  std::filesystem::path dump_dir_ = ".";
  int blocks_ = 0;
  std::optional<double> last_mi_, last_aux_;
};

// Per-game episode budget: total / |M|, remainder to the lowest game ids.
std::vector<int> episode_budget(int total, int games);

}  // namespace mra
