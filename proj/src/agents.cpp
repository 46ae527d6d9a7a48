#include "mra/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mra/errors.hpp"

namespace mra {

using ad::Tensor;
using ad::Var;

ReplayBuffer::ReplayBuffer(std::size_t capacity_per_game) : capacity_(capacity_per_game) {
  if (capacity_ == 0) throw ParameterError("replay capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  auto p = std::make_shared<const Transition>(std::move(t));
  std::lock_guard<std::mutex> lock(mu_);
  auto& part = parts_[p->game_id];
  if (part.size() == capacity_) part.pop_front();
  part.push_back(std::move(p));
}

std::size_t ReplayBuffer::size(int game_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = parts_.find(game_id);
  return it == parts_.end() ? 0 : it->second.size();
}

std::vector<int> ReplayBuffer::games() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<int> out;
  for (const auto& [g, part] : parts_) out.push_back(g);
  return out;
}

std::optional<std::vector<TransitionPtr>> ReplayBuffer::sample(int game_id, std::size_t batch, Rng& rng) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = parts_.find(game_id);
  if (batch == 0 || it == parts_.end() || it->second.size() < batch) return std::nullopt;
  const auto& part = it->second;
  const std::size_t n = part.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<TransitionPtr> out;
  out.reserve(batch);
  for (std::size_t k = 0; k < batch; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(static_cast<int>(n - k)));
    std::swap(idx[k], idx[j]);
    out.push_back(part[idx[k]]);
  }
  return out;
}

void soft_update(ParamGroup& targets, const ParamGroup& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ParameterError("soft update coefficient must lie in (0,1]");
  targets.polyak_toward(online, tau);
}

namespace {

std::vector<double> to_probs(const Tensor& p, int row) {
  std::vector<double> out(kNumActions);
  for (int a = 0; a < kNumActions; ++a) out[static_cast<std::size_t>(a)] = p.at(row, a);
  return out;
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

ActResult policy_act(const RoleModel& rm, const ModelConfig& cfg, int entity_width, const std::vector<float>& entities,
                     const std::vector<float>& g, int z, Rng& rng, ActMode mode) {
  const int f = entity_width;
  if (entities.size() % static_cast<std::size_t>(f) != 0 || entities.empty())
    throw DimensionError("policy_act: entity buffer is not a whole number of entities");
  const int m = static_cast<int>(entities.size()) / f - 1;
  if (static_cast<int>(g.size()) != m) throw ContractError("policy_act: graph length differs from entity count");
  ad::Tape tape;
  Var selfs = tape.constant(Tensor({1, f}, std::vector<float>(entities.begin(), entities.begin() + f)));
  Var others = tape.constant(Tensor({m, f}, std::vector<float>(entities.begin() + f, entities.end())));
  Var gv = tape.constant(Tensor({1, m}, g));
  Var zrep = tape.constant(one_hot_rows(std::vector<int>(static_cast<std::size_t>(m), z), cfg.latent));
  PolicyVars th{rm.theta.bind(tape, false)};
  Var logits = policy_logits(th, selfs, gv, m == 0 ? others : augment_entities(others, zrep, cfg.variant), m);
  Var logp = ad::log_softmax(logits, 1);
  ActResult out;
  for (int a = 0; a < kNumActions; ++a) out.probs.push_back(std::exp(static_cast<double>(logp.value().at(0, a))));
  out.action = mode == ActMode::greedy ? argmax(out.probs) : rng.categorical(std::span<const double>(out.probs));
  out.log_prob = logp.value().at(0, out.action);
  return out;
}

RoleAct act_role(const Model& model, int role, const GameSpec& spec, const JointObs& obs,
                 const std::vector<int>& latent, Rng& rng, ActMode mode) {
  const RoleModel& rm = model.role.at(static_cast<std::size_t>(role));
  const int m = obs.agents - 1;
  const int first = spec.first_of_role(role);
  const int n = spec.populations.at(static_cast<std::size_t>(role));
  std::vector<int> sample(static_cast<std::size_t>(n), 0), agent(static_cast<std::size_t>(n));
  std::vector<int> z(static_cast<std::size_t>(n)), zrep;
  for (int k = 0; k < n; ++k) {
    agent[static_cast<std::size_t>(k)] = first + k;
    z[static_cast<std::size_t>(k)] = latent.at(static_cast<std::size_t>(first + k));
    for (int j = 0; j < m; ++j) zrep.push_back(z[static_cast<std::size_t>(k)]);
  }
  Tensor selfs_t, others_t;
  gather_entities({&obs}, sample, agent, selfs_t, others_t);
  ad::Tape tape;
  Var selfs = tape.constant(std::move(selfs_t));
  Var others = tape.constant(std::move(others_t));
  Var zv = tape.constant(one_hot_rows(z, model.config.latent));
  PhiVars phi = bind_phi(tape, rm.phi, false);
  Var g = generate_graph(phi, selfs, others, zv, m, model.config.variant);
  Var others_aug = m == 0 ? others : augment_entities(others, tape.constant(one_hot_rows(zrep, model.config.latent)), model.config.variant);
  PolicyVars th{rm.theta.bind(tape, false)};
  Var probs = ad::softmax(policy_logits(th, selfs, g, others_aug, m), 1);
  RoleAct out;
  out.graphs.assign(g.value().data().begin(), g.value().data().end());
  for (int k = 0; k < n; ++k) {
    auto p = to_probs(probs.value(), k);
    out.actions.push_back(mode == ActMode::greedy ? argmax(p) : rng.categorical(std::span<const double>(p)));
    out.probs.push_back(std::move(p));
  }
  return out;
}

void gather_entities(const std::vector<const JointObs*>& obs, const std::vector<int>& sample,
                     const std::vector<int>& agent, Tensor& selfs, Tensor& others) {
  if (obs.empty()) throw ContractError("gather_entities: no observations");
  const int f = obs[0]->width;
  const int m = obs[0]->agents - 1;
  const int rows = static_cast<int>(agent.size());
  selfs = Tensor({rows, f});
  others = Tensor({rows * m, f});
  for (int i = 0; i < rows; ++i) {
    const JointObs& o = *obs.at(static_cast<std::size_t>(sample[static_cast<std::size_t>(i)]));
    if (o.width != f || o.agents != m + 1) throw ContractError("gather_entities: mixed populations in one batch");
    const int a = agent[static_cast<std::size_t>(i)];
    std::copy_n(o.entity(a, 0), f, selfs.data().data() + static_cast<std::size_t>(i) * f);
    if (m > 0) std::copy_n(o.entity(a, 1), static_cast<std::size_t>(m) * f, others.data().data() + static_cast<std::size_t>(i) * m * f);
  }
}

Tensor critic_other_rows(const Tensor& others, const std::vector<int>& sample, const std::vector<int>& agent,
                         const std::vector<std::vector<int>>& joint_actions, const Tensor& graph, int m) {
  const int rows = static_cast<int>(agent.size());
  const int f = m > 0 ? others.cols() : 0;
  const int w = f + kNumActions + 1;
  Tensor out({rows * m, w});
  for (int i = 0; i < rows; ++i) {
    const int a = agent[static_cast<std::size_t>(i)];
    const auto& acts = joint_actions.at(static_cast<std::size_t>(sample[static_cast<std::size_t>(i)]));
    int k = 0;
    for (int j = 0; j <= m; ++j) {
      if (j == a) continue;
      float* dst = out.data().data() + (static_cast<std::size_t>(i) * m + k) * w;
      std::copy_n(others.data().data() + (static_cast<std::size_t>(i) * m + k) * f, f, dst);
      dst[f + acts.at(static_cast<std::size_t>(j))] = 1.0f;
      dst[f + kNumActions] = graph.at(i, k);
      ++k;
    }
  }
  return out;
}

double critic_eval(const Model& model, const GameSpec& spec, const JointObs& obs, const std::vector<int>& actions,
                   const std::vector<float>& graph, int agent) {
  if (obs.agents != spec.total_agents() || static_cast<int>(actions.size()) != obs.agents)
    throw ContractError("critic_eval: population mismatch");
  const int m = obs.agents - 1;
  if (static_cast<int>(graph.size()) != m) throw ContractError("critic_eval: graph length mismatch");
  const int role = spec.role_of(agent);
  Tensor selfs, others;
  gather_entities({&obs}, {0}, {agent}, selfs, others);
  Tensor g({1, m}, graph);
  ad::Tape tape;
  CriticVars ze{model.role.at(static_cast<std::size_t>(role)).zeta.bind(tape, false)};
  Var q = critic_q(ze, tape.constant(selfs), tape.constant(critic_other_rows(others, {0}, {agent}, {actions}, g, m)), m);
  return q.value().at(0, actions[static_cast<std::size_t>(agent)]);
}

RoleRows gather_role(const std::vector<TransitionPtr>& batch, const GameSpec& spec, int role, int latent) {
  if (batch.empty()) throw ContractError("gather_role: empty batch");
  RoleRows rr;
  const int n_role = spec.populations.at(static_cast<std::size_t>(role));
  const int first = spec.first_of_role(role);
  rr.m = spec.total_agents() - 1;
  rr.rows = static_cast<int>(batch.size()) * n_role;
  std::vector<const JointObs*> obs, next;
  for (const auto& t : batch) {
    obs.push_back(&t->obs);
    next.push_back(&t->next_obs);
  }
  for (int b = 0; b < static_cast<int>(batch.size()); ++b)
    for (int k = 0; k < n_role; ++k) {
      rr.sample.push_back(b);
      rr.agent.push_back(first + k);
    }
  gather_entities(obs, rr.sample, rr.agent, rr.selfs, rr.others);
  gather_entities(next, rr.sample, rr.agent, rr.next_selfs, rr.next_others);
  rr.graph = Tensor({rr.rows, rr.m});
  rr.reward = Tensor({rr.rows, 1});
  std::vector<int> z;
  for (int i = 0; i < rr.rows; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(rr.sample[static_cast<std::size_t>(i)])];
    const int a = rr.agent[static_cast<std::size_t>(i)];
    for (int j = 0; j < rr.m; ++j) rr.graph.at(i, j) = t.graphs[static_cast<std::size_t>(a) * rr.m + j];
    rr.reward[static_cast<std::size_t>(i)] = t.rewards[static_cast<std::size_t>(a)];
    rr.own_action.push_back(t.actions[static_cast<std::size_t>(a)]);
    z.push_back(t.latent[static_cast<std::size_t>(a)]);
  }
  rr.z = one_hot_rows(z, latent);
  rr.own_onehot = one_hot_rows(rr.own_action, kNumActions);
  return rr;
}

}  // namespace mra
