#include "mra/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mra/errors.hpp"

namespace mra {

using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ParameterError(what);
  };
  need(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0,1]");
  need(beta > 0.0, "beta must be positive");
  need(K >= 1, "K must be >= 1");
  need(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0,1)");
  need(batch >= 1, "batch must be >= 1");
  need(rollouts >= 1, "rollouts must be >= 1");
  need(min_steps_per_update >= 1, "min_steps_per_update must be >= 1");
  need(mi_samples >= 1, "mi_samples must be >= 1");
  need(total_episodes >= 0, "total_episodes must be >= 0");
  need(tau > 0.0 && tau <= 1.0, "tau must lie in (0,1]");
  need(buffer_capacity >= static_cast<std::size_t>(batch), "buffer capacity must hold one batch");
  need(threads >= 1, "threads must be >= 1");
  need(checkpoint_every >= 0, "checkpoint_every must be >= 0");
}

double bellman_target(double reward, double gamma, double q_bar) { return reward + gamma * q_bar; }

Var critic_loss_from(Var q, const Tensor& y) {
  if (q.shape() != y.shape()) throw DimensionError("critic_loss_from: q and y differ in shape");
  return ad::mean(ad::square(ad::sub(q, q.tape()->constant(y))));
}

Var policy_surrogate(Var logits, const Tensor& q_all) {
  if (logits.shape() != q_all.shape()) throw DimensionError("policy_surrogate: logits and Q differ in shape");
  Var probs = ad::softmax(logits, 1);
  Var expected = ad::sum(ad::mul(probs, logits.tape()->constant(q_all)));
  return ad::scale(expected, -1.0f / static_cast<float>(logits.rows()));
}

ParamGroup reptile_outer_update(const ParamGroup& theta_init, const ParamGroup& theta_inner, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in (0,1]");
  ParamGroup out = theta_init;
  out.polyak_toward(theta_inner, alpha);
  return out;
}

Eigen::VectorXd reptile_expansion(const std::vector<Eigen::VectorXd>& grads, const std::vector<Eigen::MatrixXd>& hessians,
                                  double beta) {
  if (grads.empty() || grads.size() != hessians.size()) throw DimensionError("reptile_expansion: need one Hessian per gradient");
  Eigen::VectorXd first = Eigen::VectorXd::Zero(grads[0].size());
  Eigen::VectorXd second = Eigen::VectorXd::Zero(grads[0].size());
  Eigen::VectorXd prefix = Eigen::VectorXd::Zero(grads[0].size());  // sum_{j<k} g_j
  for (std::size_t k = 0; k < grads.size(); ++k) {
    first += grads[k];
    second += hessians[k] * prefix;
    prefix += grads[k];
  }
  return beta * first + beta * beta * second;
}

namespace {

Var others_augmented(Var others, Var z, int m, PhiVariant v) {
  if (m == 0) return others;
  return augment_entities(others, ad::repeat_rows(z, m), v);
}

std::vector<Tensor> negated(std::vector<Tensor> g) {
  for (auto& t : g)
    for (auto& x : t.data()) x = -x;
  return g;
}

// Fills joint[b][agent] for every row of `rows` by sampling from probs [S,5].
void sample_rows(const RoleRows& rows, const Tensor& probs, std::vector<std::vector<int>>& joint, Rng& rng) {
  for (int i = 0; i < rows.rows; ++i) {
    std::vector<double> p(kNumActions);
    for (int a = 0; a < kNumActions; ++a) p[static_cast<std::size_t>(a)] = probs.at(i, a);
    joint[static_cast<std::size_t>(rows.sample[static_cast<std::size_t>(i)])]
         [static_cast<std::size_t>(rows.agent[static_cast<std::size_t>(i)])] = rng.categorical(std::span<const double>(p));
  }
}

// Policy probabilities [S,5] under `theta` at (selfs, others, g, z).
Tensor policy_probs(const Model& model, const ParamGroup& theta, const Tensor& selfs, const Tensor& others,
                    const Tensor& g, const Tensor& z, int m) {
  ad::Tape tape;
  PolicyVars th{theta.bind(tape, false)};
  Var zv = tape.constant(z);
  Var logits = policy_logits(th, tape.constant(selfs), tape.constant(g),
                             others_augmented(tape.constant(others), zv, m, model.config.variant), m);
  return ad::softmax(logits, 1).value();
}

Tensor graph_of(const Model& model, int role, const Tensor& selfs, const Tensor& others, const Tensor& z, int m) {
  ad::Tape tape;
  PhiVars phi = bind_phi(tape, model.role[static_cast<std::size_t>(role)].phi, false);
  return generate_graph(phi, tape.constant(selfs), tape.constant(others), tape.constant(z), m, model.config.variant)
      .value();
}

Tensor critic_all(const ParamGroup& zeta, const Tensor& selfs, const Tensor& others_in, int m) {
  ad::Tape tape;
  CriticVars ze{zeta.bind(tape, false)};
  return critic_q(ze, tape.constant(selfs), tape.constant(others_in), m).value();
}

}  // namespace

BlockData make_block(const Model& model, const GameSpec& spec, std::vector<TransitionPtr> batch) {
  if (spec.roles() != model.roles) throw ContractError("make_block: role count differs from the model");
  BlockData b;
  b.spec = spec;
  b.batch = std::move(batch);
  for (int r = 0; r < model.roles; ++r) {
    b.rows.push_back(gather_role(b.batch, spec, r, model.config.latent));
    b.critic_graph.push_back(b.rows.back().graph);
  }
  for (const auto& t : b.batch) b.joint_actions.push_back(t->actions);
  return b;
}

void refresh_critic_graphs(const Model& model, BlockData& block) {
  for (int r = 0; r < model.roles; ++r) {
    const RoleRows& rr = block.rows[static_cast<std::size_t>(r)];
    block.critic_graph[static_cast<std::size_t>(r)] = graph_of(model, r, rr.selfs, rr.others, rr.z, rr.m);
  }
}

std::vector<Tensor> critic_targets(const Model& model, const BlockData& block, double gamma, Rng& rng) {
  const int roles = model.roles;
  std::vector<Tensor> pi_bar(static_cast<std::size_t>(roles));
  auto next_actions = block.joint_actions;
  for (int r = 0; r < roles; ++r) {
    const RoleRows& rr = block.rows[static_cast<std::size_t>(r)];
    const RoleModel& rm = model.role[static_cast<std::size_t>(r)];
    Tensor g_next = graph_of(model, r, rr.next_selfs, rr.next_others, rr.z, rr.m);
    pi_bar[static_cast<std::size_t>(r)] =
        policy_probs(model, rm.theta_bar, rr.next_selfs, rr.next_others, g_next, rr.z, rr.m);
    sample_rows(rr, pi_bar[static_cast<std::size_t>(r)], next_actions, rng);
  }
  std::vector<Tensor> ys;
  for (int r = 0; r < roles; ++r) {
    const RoleRows& rr = block.rows[static_cast<std::size_t>(r)];
    Tensor in = critic_other_rows(rr.next_others, rr.sample, rr.agent, next_actions,
                                  block.critic_graph[static_cast<std::size_t>(r)], rr.m);
    Tensor q = critic_all(model.role[static_cast<std::size_t>(r)].zeta_bar, rr.next_selfs, in, rr.m);
    const Tensor& p = pi_bar[static_cast<std::size_t>(r)];
    Tensor y({rr.rows, 1});
    for (int i = 0; i < rr.rows; ++i) {
      double v = 0.0;
      for (int a = 0; a < kNumActions; ++a) v += static_cast<double>(p.at(i, a)) * q.at(i, a);
      y[static_cast<std::size_t>(i)] = static_cast<float>(bellman_target(rr.reward[static_cast<std::size_t>(i)], gamma, v));
    }
    ys.push_back(std::move(y));
  }
  return ys;
}

double critic_update(Model& model, int role, const BlockData& block, const Tensor& y, AdamState& state, double lr) {
  const RoleRows& rr = block.rows.at(static_cast<std::size_t>(role));
  RoleModel& rm = model.role[static_cast<std::size_t>(role)];
  Tensor in = critic_other_rows(rr.others, rr.sample, rr.agent, block.joint_actions,
                                block.critic_graph[static_cast<std::size_t>(role)], rr.m);
  ad::Tape tape;
  auto vars = rm.zeta.bind(tape, true);
  CriticVars ze{vars};
  Var q_all = critic_q(ze, tape.constant(rr.selfs), tape.constant(in), rr.m);
  Var q = ad::sum_cols(ad::mul(q_all, tape.constant(rr.own_onehot)));
  Var loss = critic_loss_from(q, y);
  auto grads = ParamGroup::gradients(tape.backward(loss), vars);
  adam_step(rm.zeta, grads, state, lr);
  return loss.value().item();
}

std::vector<std::vector<int>> resample_actions(const Model& model, const BlockData& block, Rng& rng) {
  auto joint = block.joint_actions;
  for (int r = 0; r < model.roles; ++r) {
    const RoleRows& rr = block.rows[static_cast<std::size_t>(r)];
    Tensor p = policy_probs(model, model.role[static_cast<std::size_t>(r)].theta, rr.selfs, rr.others,
                            block.critic_graph[static_cast<std::size_t>(r)], rr.z, rr.m);
    sample_rows(rr, p, joint, rng);
  }
  return joint;
}

double policy_update(Model& model, int role, const BlockData& block, const std::vector<std::vector<int>>& actions,
                     AdamState& theta_state, double lr, AdamState* phi_state, bool update_theta) {
  const RoleRows& rr = block.rows.at(static_cast<std::size_t>(role));
  RoleModel& rm = model.role[static_cast<std::size_t>(role)];
  const Tensor& g_critic = block.critic_graph[static_cast<std::size_t>(role)];
  Tensor q_all = critic_all(rm.zeta, rr.selfs, critic_other_rows(rr.others, rr.sample, rr.agent, actions, g_critic, rr.m), rr.m);

  ad::Tape tape;
  auto theta_vars = rm.theta.bind(tape, true);
  PolicyVars th{theta_vars};
  Var selfs = tape.constant(rr.selfs);
  Var others = tape.constant(rr.others);
  Var z = tape.constant(rr.z);
  Var g;
  PhiVars phi;
  if (phi_state) {
    phi = bind_phi(tape, rm.phi, true);
    g = generate_graph(phi, selfs, others, z, rr.m, model.config.variant);
  } else {
    g = tape.constant(rr.graph);
  }
  Var loss = policy_surrogate(policy_logits(th, selfs, g, others_augmented(others, z, rr.m, model.config.variant), rr.m), q_all);
  auto grads = tape.backward(loss);
  if (update_theta) adam_step(rm.theta, ParamGroup::gradients(grads, theta_vars), theta_state, lr);
  if (phi_state) {
    std::vector<Tensor> pg;
    for (std::size_t h = 0; h < phi.q.size(); ++h) {
      pg.push_back(grads[phi.q[h]]);
      pg.push_back(grads[phi.k[h]]);
    }
    adam_step(rm.phi, pg, *phi_state, lr);
  }
  return -static_cast<double>(loss.value().item());
}

MiResult mi_action_bound(const Model& model, int role, const RoleRows& rows, int game_id, MiMode mode, int n, Rng& rng,
                         bool want_grad) {
  if (n < 1) throw ParameterError("mi_action_bound: n must be >= 1");
  const RoleModel& rm = model.role.at(static_cast<std::size_t>(role));
  const int zc = model.config.latent;
  const int s = rows.rows;
  const std::vector<double> pz = latent_probs(model.latent_spec(role), game_id);

  // Per-row weight of each latent in the marginal, and in the outer expectation.
  std::vector<Tensor> marg(static_cast<std::size_t>(zc), Tensor({s, 1}));
  std::vector<Tensor> outer(static_cast<std::size_t>(zc), Tensor({s, 1}));
  if (mode == MiMode::enumerate) {
    for (int z = 0; z < zc; ++z)
      for (int i = 0; i < s; ++i) {
        marg[static_cast<std::size_t>(z)][static_cast<std::size_t>(i)] = static_cast<float>(pz[static_cast<std::size_t>(z)]);
        outer[static_cast<std::size_t>(z)][static_cast<std::size_t>(i)] = static_cast<float>(pz[static_cast<std::size_t>(z)]);
      }
  } else {
    for (int i = 0; i < s; ++i) {
      for (int z = 0; z < zc; ++z)
        if (rows.z.at(i, z) > 0.5f) outer[static_cast<std::size_t>(z)][static_cast<std::size_t>(i)] = 1.0f;
      std::vector<int> counts(static_cast<std::size_t>(zc), 0);
      for (int k = 0; k < n; ++k) ++counts[static_cast<std::size_t>(rng.categorical(std::span<const double>(pz)))];
      for (int z = 0; z < zc; ++z)
        marg[static_cast<std::size_t>(z)][static_cast<std::size_t>(i)] =
            static_cast<float>(static_cast<double>(counts[static_cast<std::size_t>(z)]) / n);
    }
  }

  ad::Tape tape;
  PhiVars phi = bind_phi(tape, rm.phi, want_grad);
  PolicyVars th_bar{rm.theta_bar.bind(tape, false)};
  PolicyVars th{rm.theta.bind(tape, false)};
  Var selfs = tape.constant(rows.selfs);
  Var others = tape.constant(rows.others);
  constexpr float kFloor = 1e-20f;

  // The online policy weights stay differentiable in phi (theta frozen), so
  // the gradient is that of the exact expectation, including the change of
  // the action distribution with the graph.
  std::vector<Var> log_pi;
  std::vector<Var> weight;
  Var marginal, wsum;
  for (int z = 0; z < zc; ++z) {
    const auto zi = static_cast<std::size_t>(z);
    bool used = false;
    for (int i = 0; i < s && !used; ++i) used = marg[zi][static_cast<std::size_t>(i)] != 0.0f || outer[zi][static_cast<std::size_t>(i)] != 0.0f;
    if (!used) {
      log_pi.emplace_back();
      weight.emplace_back();
      continue;
    }
    Var zr = tape.constant(one_hot_rows(std::vector<int>(static_cast<std::size_t>(s), z), zc));
    Var g = generate_graph(phi, selfs, others, zr, rows.m, model.config.variant);
    Var aug = others_augmented(others, zr, rows.m, model.config.variant);
    Var p_bar = ad::softmax(policy_logits(th_bar, selfs, g, aug, rows.m), 1);
    Var w = ad::mul_col(ad::softmax(policy_logits(th, selfs, g, aug, rows.m), 1), tape.constant(outer[zi]));
    log_pi.push_back(ad::log(ad::add_scalar(p_bar, kFloor)));
    weight.push_back(w);
    wsum = wsum.valid() ? ad::add(wsum, w) : w;
    Var term = ad::mul_col(p_bar, tape.constant(marg[zi]));
    marginal = marginal.valid() ? ad::add(marginal, term) : term;
  }
  Var log_marg = ad::log(ad::add_scalar(marginal, kFloor));
  Var total;
  for (int z = 0; z < zc; ++z) {
    const auto zi = static_cast<std::size_t>(z);
    if (!log_pi[zi].valid()) continue;
    Var t = ad::sum(ad::mul(weight[zi], log_pi[zi]));
    total = total.valid() ? ad::add(total, t) : t;
  }
  total = ad::sub(total, ad::sum(ad::mul(wsum, log_marg)));
  Var bound = ad::scale(total, 1.0f / static_cast<float>(s));

  MiResult out;
  out.bound = bound.value().item();
  if (want_grad) {
    auto grads = tape.backward(bound);
    for (std::size_t h = 0; h < phi.q.size(); ++h) {
      out.phi_grads.push_back(grads[phi.q[h]]);
      out.phi_grads.push_back(grads[phi.k[h]]);
    }
  }
  return out;
}

AuxResult aux_inference_loss(const Model& model, int role, const std::vector<AuxBatch>& batches, Rng& rng,
                             bool want_grad) {
  if (batches.empty()) throw ContractError("aux_inference_loss: no batches");
  const RoleModel& rm = model.role.at(static_cast<std::size_t>(role));
  const LatentSpec spec = model.latent_spec(role);
  ad::Tape tape;
  auto psi = rm.psi.bind(tape, want_grad && !spec.uniform);
  auto xi_vars = rm.xi.bind(tape, want_grad);
  AuxVars xi{xi_vars};
  PhiVars phi = bind_phi(tape, rm.phi, false);
  Var total;
  int rows = 0;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    const AuxBatch& ab = batches[k];
    if (ab.game_id < 0 || ab.game_id >= model.games) throw ContractError("aux_inference_loss: unknown game id");
    const RoleRows& rr = ab.rows;
    Rng br = rng.split(k);
    Var z = spec.uniform
                ? ad::gumbel_softmax(tape.constant(Tensor({rr.rows, model.config.latent})), spec.temperature, false, br)
                : sample_latent_soft(psi[0], ab.game_id, rr.rows, spec.temperature, br);
    Var selfs = tape.constant(rr.selfs);
    Var others = tape.constant(rr.others);
    Var g = generate_graph(phi, selfs, others, z, rr.m, model.config.variant);
    Var logp = ad::log_softmax(aux_logits(xi, selfs, g, others, rr.m), 1);
    Tensor target = one_hot_rows(std::vector<int>(static_cast<std::size_t>(rr.rows), ab.game_id), model.games);
    Var ce = ad::neg(ad::sum(ad::mul(tape.constant(target), logp)));
    total = total.valid() ? ad::add(total, ce) : ce;
    rows += rr.rows;
  }
  Var loss = ad::scale(total, 1.0f / static_cast<float>(rows));
  AuxResult out;
  out.loss = loss.value().item();
  if (want_grad) {
    auto grads = tape.backward(loss);
    out.psi_grads = ParamGroup::gradients(grads, psi);
    out.xi_grads = ParamGroup::gradients(grads, xi_vars);
  }
  return out;
}

std::vector<int> episode_budget(int total, int games) {
  if (games <= 0) throw ParameterError("episode_budget: need at least one game");
  std::vector<int> out(static_cast<std::size_t>(games), total / games);
  for (int m = 0; m < total % games; ++m) ++out[static_cast<std::size_t>(m)];
  return out;
}

Trainer::Trainer(GameSet games, Model model, TrainConfig cfg)
    : games_(std::move(games)), model_(std::move(model)), cfg_(cfg), buffer_(cfg.buffer_capacity), root_(cfg.seed) {
  cfg_.validate();
  if (games_.size() == 0) throw ContractError("Trainer: empty game set");
  if (games_.roles() != model_.roles) throw ContractError("Trainer: role count differs from the model");
  if (games_.size() != model_.games) throw ContractError("Trainer: game count differs from the model");
  if (games_.entity_width() != model_.entity_width) throw ContractError("Trainer: entity width differs from the model");
  const auto r = static_cast<std::size_t>(model_.roles);
  critic_opt_.resize(r);
  phi_opt_.resize(r);
  psi_opt_.resize(r);
  xi_opt_.resize(r);
}

void Trainer::mark(const char* step) {
  if (cfg_.record_trace) trace_.emplace_back(step);
}

void Trainer::check_finite(double v, const char* what, int game_id) {
  if (std::isfinite(v)) return;
  std::filesystem::create_directories(dump_dir_);
  const auto path = dump_dir_ / "nonfinite_dump.json";
  nlohmann::json j{{"quantity", what}, {"game_id", game_id}, {"block", blocks_}, {"value", std::to_string(v)}};
  std::ofstream(path) << j.dump(2) << "\n";
  throw TrainingAborted(std::string("non-finite ") + what + " in update block " + std::to_string(blocks_), path.string());
}

std::optional<BlockStats> Trainer::update_block(int game_id) {
  const Rng rng = root_.split("update").split(static_cast<std::uint64_t>(blocks_));
  Rng batch_rng = rng.split("batch");
  auto batch = buffer_.sample(game_id, static_cast<std::size_t>(cfg_.batch), batch_rng);
  if (!batch) return std::nullopt;
  const int roles = model_.roles;
  BlockData block = make_block(model_, games_.games.at(static_cast<std::size_t>(game_id)), std::move(*batch));
  Rng target_rng = rng.split("target");
  const auto y = critic_targets(model_, block, cfg_.gamma, target_rng);

  BlockStats stats;
  std::vector<ParamGroup> theta_init;
  std::vector<AdamState> theta_opt(static_cast<std::size_t>(roles));
  for (const auto& rm : model_.role) theta_init.push_back(rm.theta);
  for (int k = 0; k < cfg_.K; ++k) {
    double closs = 0.0;
    for (int r = 0; r < roles; ++r)
      closs += critic_update(model_, r, block, y[static_cast<std::size_t>(r)], critic_opt_[static_cast<std::size_t>(r)], cfg_.beta);
    mark("critic");
    check_finite(closs, "critic loss", game_id);
    Rng act_rng = rng.split("resample").split(static_cast<std::uint64_t>(k));
    const auto acts = resample_actions(model_, block, act_rng);
    double obj = 0.0;
    for (int r = 0; r < roles; ++r)
      obj += policy_update(model_, r, block, acts, theta_opt[static_cast<std::size_t>(r)], cfg_.beta);
    mark("policy");
    check_finite(obj, "policy objective", game_id);
    stats.critic_loss = closs / roles;
    stats.policy_objective = obj / roles;
  }
  for (int r = 0; r < roles; ++r) {
    auto& rm = model_.role[static_cast<std::size_t>(r)];
    rm.theta = reptile_outer_update(theta_init[static_cast<std::size_t>(r)], rm.theta, cfg_.alpha);
  }
  mark("reptile");

  double mi = 0.0;
  for (int r = 0; r < roles; ++r) {
    Rng mi_rng = rng.split("mi").split(static_cast<std::uint64_t>(r));
    auto res = mi_action_bound(model_, r, block.rows[static_cast<std::size_t>(r)], game_id, cfg_.mi_mode,
                               cfg_.mi_samples, mi_rng, true);
    check_finite(res.bound, "mutual information bound", game_id);
    adam_step(model_.role[static_cast<std::size_t>(r)].phi, negated(std::move(res.phi_grads)),
              phi_opt_[static_cast<std::size_t>(r)], cfg_.beta);
    mi += res.bound;
  }
  stats.mi_bound = mi / roles;
  mark("phi");

  if (games_.size() > 1) {
    const int per_game = std::max(1, cfg_.batch / games_.size());
    std::vector<std::vector<AuxBatch>> per_role(static_cast<std::size_t>(roles));
    for (int m = 0; m < games_.size(); ++m) {
      Rng sub_rng = rng.split("aux_batch").split(static_cast<std::uint64_t>(m));
      auto sub = buffer_.sample(m, static_cast<std::size_t>(per_game), sub_rng);
      if (!sub) continue;
      for (int r = 0; r < roles; ++r)
        per_role[static_cast<std::size_t>(r)].push_back(
            {m, gather_role(*sub, games_.games[static_cast<std::size_t>(m)], r, model_.config.latent)});
    }
    if (!per_role[0].empty()) {
      double aux = 0.0;
      for (int r = 0; r < roles; ++r) {
        Rng aux_rng = rng.split("aux").split(static_cast<std::uint64_t>(r));
        auto res = aux_inference_loss(model_, r, per_role[static_cast<std::size_t>(r)], aux_rng, true);
        check_finite(res.loss, "auxiliary loss", game_id);
        auto& rm = model_.role[static_cast<std::size_t>(r)];
        if (!model_.config.uniform_latent) adam_step(rm.psi, res.psi_grads, psi_opt_[static_cast<std::size_t>(r)], cfg_.beta);
        adam_step(rm.xi, res.xi_grads, xi_opt_[static_cast<std::size_t>(r)], cfg_.beta);
        aux += res.loss;
      }
      stats.aux_loss = aux / roles;
      mark("psi_xi");
    }
  }

  for (auto& rm : model_.role) {
    soft_update(rm.theta_bar, rm.theta, cfg_.tau);
    soft_update(rm.zeta_bar, rm.zeta, cfg_.tau);
  }
  mark("targets");
  ++blocks_;
  return stats;
}

void Trainer::run(const EpisodeSink& on_episode, const CheckpointSink& on_checkpoint) {
  const int games = games_.size();
  const auto budget = episode_budget(cfg_.total_episodes, games);
  std::vector<int> done(static_cast<std::size_t>(games), 0);
  std::vector<int> pending(static_cast<std::size_t>(games), 0);
  const auto start = std::chrono::steady_clock::now();
  int global = 0;
  bool remaining = true;
  while (remaining) {
    remaining = false;
    for (int m = 0; m < games; ++m) {
      const auto mi = static_cast<std::size_t>(m);
      if (done[mi] >= budget[mi]) continue;
      const int count = std::min(cfg_.rollouts, budget[mi] - done[mi]);
      EpisodeOptions opts;
      opts.psi_row = m;
      const Rng base = root_.split("rollout").split(static_cast<std::uint64_t>(m));
      auto results = run_episodes(model_, games_.games[mi], base, static_cast<std::uint64_t>(done[mi]), count, opts,
                                  cfg_.threads);
      for (auto& res : results) {
        pending[mi] += res.steps;
        for (auto& t : res.transitions) buffer_.push(std::move(t));
      }
      for (; pending[mi] >= cfg_.min_steps_per_update; pending[mi] -= cfg_.min_steps_per_update) {
        auto stats = update_block(m);
        if (!stats) continue;
        last_mi_ = stats->mi_bound;
        if (stats->aux_loss) last_aux_ = stats->aux_loss;
      }
      for (auto& res : results) {
        EpisodeRecord rec;
        rec.episode = global++;
        rec.game_id = m;
        rec.role_returns = res.role_returns;
        rec.mi_bound = last_mi_;
        rec.aux_loss = last_aux_;
        if (cfg_.wall_time)
          rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (on_episode) on_episode(rec);
        if (on_checkpoint && cfg_.checkpoint_every > 0 && global % cfg_.checkpoint_every == 0)
          on_checkpoint(model_, global);
      }
      done[mi] += count;
      if (done[mi] < budget[mi]) remaining = true;
    }
  }
}

}  // namespace mra
