#include "mra/nash.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mra/errors.hpp"

namespace mra {

void check_oracle_scope(const TabularMG& mg) {
  if (mg.states > kOracleMaxStates || mg.agents() > kOracleMaxAgents)
    throw ScopeError("oracle scope is <= " + std::to_string(kOracleMaxStates) + " states and <= " +
                     std::to_string(kOracleMaxAgents) + " agents");
  for (int a : mg.actions)
    if (a > kOracleMaxActions)
      throw ScopeError("oracle scope is <= " + std::to_string(kOracleMaxActions) + " actions per agent");
}

void check_policy(const TabularMG& mg, const JointPolicy& pi) {
  if (static_cast<int>(pi.size()) != mg.agents()) throw ContractError("joint policy has the wrong agent count");
  for (int i = 0; i < mg.agents(); ++i) {
    const auto& ai = pi[static_cast<std::size_t>(i)];
    if (static_cast<int>(ai.size()) != mg.states) throw ContractError("policy has the wrong state count");
    for (const auto& row : ai) {
      if (static_cast<int>(row.size()) != mg.actions[static_cast<std::size_t>(i)])
        throw ContractError("policy row has the wrong action count");
      double total = 0.0;
      for (double p : row) {
        if (p < -1e-12) throw ContractError("policy has a negative probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9) throw ContractError("policy row does not sum to 1");
    }
  }
}

JointPolicy uniform_policy(const TabularMG& mg) {
  JointPolicy pi;
  for (int a : mg.actions) pi.emplace_back(static_cast<std::size_t>(mg.states), std::vector<double>(a, 1.0 / a));
  return pi;
}

AgentPolicy deterministic_policy(const TabularMG& mg, int agent, const std::vector<int>& choice) {
  const int A = mg.actions.at(static_cast<std::size_t>(agent));
  AgentPolicy p(static_cast<std::size_t>(mg.states), std::vector<double>(A, 0.0));
  for (int s = 0; s < mg.states; ++s) p[s][static_cast<std::size_t>(choice.at(static_cast<std::size_t>(s)))] = 1.0;
  return p;
}

JointPolicy random_policy(const TabularMG& mg, Rng& rng) {
  JointPolicy pi;
  for (int a : mg.actions) {
    AgentPolicy ap;
    for (int s = 0; s < mg.states; ++s) {
      std::vector<double> row(static_cast<std::size_t>(a));
      double total = 0.0;
      for (double& x : row) total += x = -std::log(rng.open_uniform());
      for (double& x : row) x /= total;
      ap.push_back(std::move(row));
    }
    pi.push_back(std::move(ap));
  }
  return pi;
}

namespace {

double joint_prob(const TabularMG& mg, const JointPolicy& pi, int s, const std::vector<int>& joint, int skip = -1) {
  double p = 1.0;
  for (int i = 0; i < mg.agents(); ++i) {
    if (i == skip) continue;
    p *= pi[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)][static_cast<std::size_t>(joint[i])];
  }
  return p;
}

void check_gamma(const TabularMG& mg) {
  if (!(mg.gamma >= 0.0 && mg.gamma < 1.0)) throw ContractError("discount must lie in [0,1)");
}

// Single-agent MDP seen by `agent` when the others follow pi.
struct InducedMdp {
  int A = 0;
  std::vector<double> reward;  // [s][a]
  std::vector<double> trans;   // [s][a][s']
};

InducedMdp induce(const TabularMG& mg, const JointPolicy& pi, int agent) {
  InducedMdp m;
  const int S = mg.states;
  m.A = mg.actions[static_cast<std::size_t>(agent)];
  m.reward.assign(static_cast<std::size_t>(S) * m.A, 0.0);
  m.trans.assign(static_cast<std::size_t>(S) * m.A * S, 0.0);
  for (int s = 0; s < S; ++s)
    for (int j = 0; j < mg.joint_count(); ++j) {
      const auto joint = mg.decode(j);
      const double w = joint_prob(mg, pi, s, joint, agent);
      if (w == 0.0) continue;
      const int a = joint[static_cast<std::size_t>(agent)];
      m.reward[static_cast<std::size_t>(s) * m.A + a] += w * mg.r(agent, s, j);
      for (int n = 0; n < S; ++n) m.trans[(static_cast<std::size_t>(s) * m.A + a) * S + n] += w * mg.p(s, j, n);
    }
  return m;
}

}  // namespace

Eigen::MatrixXd transition_matrix(const TabularMG& mg, const JointPolicy& pi) {
  check_policy(mg, pi);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(mg.states, mg.states);
  for (int s = 0; s < mg.states; ++s)
    for (int j = 0; j < mg.joint_count(); ++j) {
      const double w = joint_prob(mg, pi, s, mg.decode(j));
      if (w == 0.0) continue;
      for (int n = 0; n < mg.states; ++n) P(s, n) += w * mg.p(s, j, n);
    }
  return P;
}

Eigen::VectorXd expected_reward(const TabularMG& mg, const JointPolicy& pi, int agent) {
  check_policy(mg, pi);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(mg.states);
  for (int s = 0; s < mg.states; ++s)
    for (int j = 0; j < mg.joint_count(); ++j) r(s) += joint_prob(mg, pi, s, mg.decode(j)) * mg.r(agent, s, j);
  return r;
}

Eigen::VectorXd policy_value(const TabularMG& mg, const JointPolicy& pi, int agent) {
  check_gamma(mg);
  const Eigen::MatrixXd P = transition_matrix(mg, pi);
  const Eigen::VectorXd r = expected_reward(mg, pi, agent);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(mg.states, mg.states) - mg.gamma * P;
  return A.partialPivLu().solve(r);
}

BestResponse best_response(const TabularMG& mg, const JointPolicy& pi, int agent, double tol) {
  check_gamma(mg);
  check_policy(mg, pi);
  const InducedMdp m = induce(mg, pi, agent);
  const int S = mg.states;
  auto q_value = [&](const Eigen::VectorXd& v, int s, int a) {
    double q = m.reward[static_cast<std::size_t>(s) * m.A + a];
    for (int n = 0; n < S; ++n) q += mg.gamma * m.trans[(static_cast<std::size_t>(s) * m.A + a) * S + n] * v(n);
    return q;
  };
  BestResponse br;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
  for (;;) {
    Eigen::VectorXd next(S);
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < m.A; ++a) best = std::max(best, q_value(v, s, a));
      next(s) = best;
    }
    ++br.iterations;
    const double delta = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (delta < tol) break;
  }
  // Polish the greedy policy by exact policy iteration so v* is exact.
  std::vector<int> choice(static_cast<std::size_t>(S), 0);
  auto greedy = [&](const Eigen::VectorXd& val) {
    bool changed = false;
    for (int s = 0; s < S; ++s) {
      int arg = choice[static_cast<std::size_t>(s)];
      double best = q_value(val, s, arg);
      for (int a = 0; a < m.A; ++a) {
        const double q = q_value(val, s, a);
        if (q > best + 1e-12) {
          best = q;
          arg = a;
        }
      }
      changed = changed || arg != choice[static_cast<std::size_t>(s)];
      choice[static_cast<std::size_t>(s)] = arg;
    }
    return changed;
  };
  auto evaluate = [&] {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(S, S);
    Eigen::VectorXd r(S);
    for (int s = 0; s < S; ++s) {
      const int a = choice[static_cast<std::size_t>(s)];
      r(s) = m.reward[static_cast<std::size_t>(s) * m.A + a];
      for (int n = 0; n < S; ++n) A(s, n) -= mg.gamma * m.trans[(static_cast<std::size_t>(s) * m.A + a) * S + n];
    }
    return Eigen::VectorXd(A.partialPivLu().solve(r));
  };
  // Seed with the value-iteration greedy choice (ties to the lowest action).
  for (int s = 0; s < S; ++s) {
    int arg = 0;
    double best = q_value(v, s, 0);
    for (int a = 1; a < m.A; ++a)
      if (const double q = q_value(v, s, a); q > best + 1e-12) {
        best = q;
        arg = a;
      }
    choice[static_cast<std::size_t>(s)] = arg;
  }
  Eigen::VectorXd exact = evaluate();
  for (int guard = 0; guard < 1000 && greedy(exact); ++guard) exact = evaluate();
  br.value = exact;
  br.policy = deterministic_policy(mg, agent, choice);
  return br;
}

double nashconv(const TabularMG& mg, const JointPolicy& pi) {
  double total = 0.0;
  for (int i = 0; i < mg.agents(); ++i) {
    const Eigen::VectorXd v = policy_value(mg, pi, i);
    const BestResponse br = best_response(mg, pi, i);
    total += (br.value - v).maxCoeff();
  }
  return total;
}

double kappa(const AgentPolicy& a, const AgentPolicy& b) {
  if (a.size() != b.size()) throw ContractError("kappa: policies over different state sets");
  double worst = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    if (a[s].size() != b[s].size()) throw ContractError("kappa: policies over different action sets");
    double l1 = 0.0;
    for (std::size_t k = 0; k < a[s].size(); ++k) l1 += std::abs(a[s][k] - b[s][k]);
    worst = std::max(worst, l1);
  }
  return worst;
}

Eigen::MatrixXd state_visitation(const TabularMG& mg, const JointPolicy& pi) {
  check_gamma(mg);
  const Eigen::MatrixXd P = transition_matrix(mg, pi);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(mg.states, mg.states) - mg.gamma * P;
  return A.partialPivLu().inverse();
}

double transition_operator_norm(const Eigen::MatrixXd& diff) {
  return diff.cwiseAbs().rowwise().sum().maxCoeff();
}

LipschitzEstimate lipschitz_estimate(const TabularMG& mg, int probes, Rng& rng, const std::vector<JointPolicy>& anchors) {
  LipschitzEstimate est;
  auto probe = [&](const JointPolicy& pi) {
    const Eigen::MatrixXd P = transition_matrix(mg, pi);
    for (int i = 0; i < mg.agents(); ++i) {
      const BestResponse br = best_response(mg, pi, i);
      const double k = kappa(br.policy, pi[static_cast<std::size_t>(i)]);
      if (k <= 1e-6) continue;
      JointPolicy dev = pi;
      dev[static_cast<std::size_t>(i)] = br.policy;
      const double ratio = transition_operator_norm(transition_matrix(mg, dev) - P) / k;
      est.value = std::max(est.value, ratio);
    }
    ++est.probes;
  };
  for (const auto& a : anchors) probe(a);
  for (int p = 0; p < probes; ++p) {
    Rng r = rng.split(static_cast<std::uint64_t>(p));
    if (p % 2 == 0) {
      probe(random_policy(mg, r));
    } else {
      JointPolicy pi;
      for (int i = 0; i < mg.agents(); ++i) {
        std::vector<int> choice;
        for (int s = 0; s < mg.states; ++s) choice.push_back(r.below(mg.actions[static_cast<std::size_t>(i)]));
        pi.push_back(deterministic_policy(mg, i, choice));
      }
      probe(pi);
    }
  }
  return est;
}

Lemma1Report lemma1_check(const TabularMG& mg, const JointPolicy& pi, double iota) {
  if (!mg.rewards_in_unit_interval()) throw ContractError("Lipschitz bound check requires rewards in [0,1]");
  if (iota < 0.0) throw ParameterError("Lipschitz coefficient must be >= 0");
  Lemma1Report rep;
  rep.lhs = nashconv(mg, pi);
  for (int i = 0; i < mg.agents(); ++i)
    rep.kappa_sum += kappa(best_response(mg, pi, i).policy, pi[static_cast<std::size_t>(i)]);
  const double g = mg.gamma;
  rep.rhs = (g * iota / ((1.0 - g) * (1.0 - g)) + 1.0 / (1.0 - g)) * rep.kappa_sum;
  rep.holds = rep.lhs <= rep.rhs + 1e-6;
  return rep;
}

namespace {

void simplex_points(int actions, int steps, std::vector<int>& cur, std::vector<std::vector<double>>& out) {
  const int used = [&] {
    int u = 0;
    for (int c : cur) u += c;
    return u;
  }();
  if (static_cast<int>(cur.size()) == actions - 1) {
    std::vector<double> row;
    for (int c : cur) row.push_back(static_cast<double>(c) / steps);
    row.push_back(static_cast<double>(steps - used) / steps);
    out.push_back(std::move(row));
    return;
  }
  for (int c = 0; c <= steps - used; ++c) {
    cur.push_back(c);
    simplex_points(actions, steps, cur, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<AgentPolicy> policy_grid(const TabularMG& mg, int agent, double resolution) {
  if (!(resolution > 0.0 && resolution <= 1.0)) throw ParameterError("grid resolution must lie in (0,1]");
  const int steps = static_cast<int>(std::lround(1.0 / resolution));
  if (std::abs(steps * resolution - 1.0) > 1e-9) throw ParameterError("grid resolution must divide 1");
  std::vector<std::vector<double>> rows;
  std::vector<int> cur;
  simplex_points(mg.actions.at(static_cast<std::size_t>(agent)), steps, cur, rows);
  std::vector<AgentPolicy> out{AgentPolicy{}};
  for (int s = 0; s < mg.states; ++s) {
    std::vector<AgentPolicy> next;
    if (out.size() * rows.size() > 5000000) throw ScopeError("policy grid too large at this resolution");
    for (const auto& partial : out)
      for (const auto& row : rows) {
        AgentPolicy p = partial;
        p.push_back(row);
        next.push_back(std::move(p));
      }
    out = std::move(next);
  }
  return out;
}

std::vector<JointPolicy> grid_equilibria(const TabularMG& mg, double resolution, double tol, std::size_t max_joint) {
  check_oracle_scope(mg);
  std::vector<std::vector<AgentPolicy>> grids;
  std::size_t total = 1;
  for (int i = 0; i < mg.agents(); ++i) {
    grids.push_back(policy_grid(mg, i, resolution));
    total *= grids.back().size();
    if (total > max_joint)
      throw ScopeError("joint policy grid exceeds " + std::to_string(max_joint) + " combinations");
  }
  std::vector<JointPolicy> out;
  std::vector<std::size_t> idx(grids.size(), 0);
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t rem = n;
    JointPolicy pi;
    for (std::size_t i = grids.size(); i-- > 0;) {
      idx[i] = rem % grids[i].size();
      rem /= grids[i].size();
    }
    for (std::size_t i = 0; i < grids.size(); ++i) pi.push_back(grids[i][idx[i]]);
    if (nashconv(mg, pi) <= tol) out.push_back(std::move(pi));
  }
  return out;
}

SigmaReport sigma_distance(const std::vector<TabularMG>& train_set, const std::vector<TabularMG>& eval_set,
                           double resolution, double tol) {
  if (train_set.empty() || eval_set.empty()) throw ContractError("sigma_distance needs nonempty game sets");
  SigmaReport rep;
  rep.tol = tol;
  rep.resolution = resolution;
  std::vector<std::vector<JointPolicy>> train_ne, eval_ne;
  for (const auto& m : train_set) {
    train_ne.push_back(grid_equilibria(m, resolution, tol));
    if (train_ne.back().empty()) throw ResolutionError("no grid equilibrium in a training game at this resolution");
    rep.train_equilibria += train_ne.back().size();
  }
  for (const auto& m : eval_set) {
    eval_ne.push_back(grid_equilibria(m, resolution, tol));
    if (eval_ne.back().empty()) throw ResolutionError("no grid equilibrium in an evaluation game at this resolution");
    rep.eval_equilibria += eval_ne.back().size();
  }
  double sigma = 0.0;
  for (std::size_t e = 0; e < eval_set.size(); ++e) {
    const TabularMG& mp = eval_set[e];
    for (int i = 0; i < mp.agents(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < train_set.size(); ++t) {
        const TabularMG& m = train_set[t];
        if (m.states != mp.states) continue;
        for (int ip = 0; ip < m.agents(); ++ip) {
          if (m.roles[static_cast<std::size_t>(ip)] != mp.roles[static_cast<std::size_t>(i)]) continue;
          if (m.actions[static_cast<std::size_t>(ip)] != mp.actions[static_cast<std::size_t>(i)]) continue;
          std::set<AgentPolicy> candidates;
          for (const auto& pi : train_ne[t]) candidates.insert(pi[static_cast<std::size_t>(ip)]);
          for (const auto& cand : candidates)
            for (const auto& pip : eval_ne[e]) {
              JointPolicy mixed = pip;
              mixed[static_cast<std::size_t>(i)] = cand;
              best = std::min(best, nashconv(mp, mixed));
            }
        }
      }
      if (!std::isfinite(best))
        throw ContractError("no training agent shares the role and action set of evaluation agent " +
                            std::to_string(i));
      sigma = std::max(sigma, best);
    }
  }
  rep.sigma = sigma;
  return rep;
}

bool epsilon_range_member(const TabularMG& mg, const JointPolicy& pi, double epsilon) {
  if (epsilon < 0.0) throw ParameterError("epsilon must be >= 0");
  return nashconv(mg, pi) <= epsilon;
}

double epsilon_threshold(double sigma, const std::vector<double>& iota_train, const std::vector<double>& iota_eval,
                         double gamma) {
  if (iota_train.empty() || iota_eval.empty()) throw ContractError("epsilon_threshold needs coefficient lists");
  double lowest = std::numeric_limits<double>::infinity();
  for (double it : iota_train)
    for (double ie : iota_eval) lowest = std::min(lowest, sigma * gamma * (ie - it) / (gamma * ie + 1.0 - gamma));
  return sigma - lowest;
}

}  // namespace mra
