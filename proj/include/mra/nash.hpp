#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mra/rng.hpp"
#include "mra/tabular.hpp"

namespace mra {

using AgentPolicy = std::vector<std::vector<double>>;  // [state][action]
using JointPolicy = std::vector<AgentPolicy>;         // [agent]

inline constexpr int kOracleMaxStates = 6;
inline constexpr int kOracleMaxAgents = 3;
inline constexpr int kOracleMaxActions = 3;

// Throws ScopeError beyond the exhaustive-computation limits.
void check_oracle_scope(const TabularMG& mg);
void check_policy(const TabularMG& mg, const JointPolicy& pi);

JointPolicy uniform_policy(const TabularMG& mg);
AgentPolicy deterministic_policy(const TabularMG& mg, int agent, const std::vector<int>& choice);
JointPolicy random_policy(const TabularMG& mg, Rng& rng);

// State-to-state matrix P_pi[s][s'] and expected reward of `agent` under pi.
Eigen::MatrixXd transition_matrix(const TabularMG& mg, const JointPolicy& pi);
Eigen::VectorXd expected_reward(const TabularMG& mg, const JointPolicy& pi, int agent);

// Exact value of `agent` by solving (I - gamma P_pi) v = r_pi.
Eigen::VectorXd policy_value(const TabularMG& mg, const JointPolicy& pi, int agent);

struct BestResponse {
  AgentPolicy policy;  // deterministic
  Eigen::VectorXd value;
  int iterations = 0;
};

// Value iteration on the MDP induced by fixing every other agent.
BestResponse best_response(const TabularMG& mg, const JointPolicy& pi, int agent, double tol = 1e-10);

double nashconv(const TabularMG& mg, const JointPolicy& pi);

// sup_s || a - b ||_1 over actions.
double kappa(const AgentPolicy& a, const AgentPolicy& b);

// Row s holds the discounted occupancy of a chain started in s; rows sum to 1/(1-gamma).
Eigen::MatrixXd state_visitation(const TabularMG& mg, const JointPolicy& pi);

// Induced L1 norm of the distribution-propagation operator for a difference
// of row-stochastic matrices: max over s of sum_{s'} |D[s][s']|.
double transition_operator_norm(const Eigen::MatrixXd& diff);

struct LipschitzEstimate {
  double value = 0.0;
  int probes = 0;
};

// max ||P(pi*_i, pi_-i) - P(pi)|| / kappa(pi_i) over probe joint policies and
// agents, skipping pairs with kappa <= 1e-6. Probes alternate random
// stochastic and random deterministic joint policies; `anchors` are probed
// first. The running maximum makes the estimate monotone in probe count.
LipschitzEstimate lipschitz_estimate(const TabularMG& mg, int probes, Rng& rng,
                                     const std::vector<JointPolicy>& anchors = {});

struct Lemma1Report {
  double lhs = 0.0;  // NashConv
  double rhs = 0.0;  // (gamma iota / (1-gamma)^2 + 1/(1-gamma)) * sum_i kappa_i
  double kappa_sum = 0.0;
  bool holds = false;
};

Lemma1Report lemma1_check(const TabularMG& mg, const JointPolicy& pi, double iota);

struct SigmaReport {
  double sigma = 0.0;
  double tol = 1e-3;
  double resolution = 0.05;
  std::size_t train_equilibria = 0;
  std::size_t eval_equilibria = 0;
};

// Grid of per-state action distributions with probabilities in multiples of `resolution`.
std::vector<AgentPolicy> policy_grid(const TabularMG& mg, int agent, double resolution);

// Approximate equilibria: grid joint policies with NashConv <= tol.
std::vector<JointPolicy> grid_equilibria(const TabularMG& mg, double resolution, double tol,
                                         std::size_t max_joint = 200000);

// max over (m', i) of min over (m, i' in role of i, pi in NE(m), pi' in NE(m'))
// of NashConv_{m'}(pi^{i'} substituted for agent i in pi'). Throws
// ResolutionError if some game has no grid equilibrium.
SigmaReport sigma_distance(const std::vector<TabularMG>& train_set, const std::vector<TabularMG>& eval_set,
                           double resolution = 0.05, double tol = 1e-3);

bool epsilon_range_member(const TabularMG& mg, const JointPolicy& pi, double epsilon);

// sigma - min over (iota_m, iota_m') of sigma gamma (iota_m' - iota_m) / (gamma iota_m' + 1 - gamma).
double epsilon_threshold(double sigma, const std::vector<double>& iota_train, const std::vector<double>& iota_eval,
                         double gamma);

}  // namespace mra
