#include "mra/model.hpp"

#include <cmath>

#include "mra/envs.hpp"
#include "mra/errors.hpp"

namespace mra {

using ad::Tensor;
using ad::Var;

nlohmann::json ModelConfig::to_json() const {
  return {{"d", d},
          {"hidden", hidden},
          {"critic_hidden", critic_hidden},
          {"aux_hidden", aux_hidden},
          {"latent", latent},
          {"variant", to_string(variant)},
          {"temperature", temperature},
          {"uniform_latent", uniform_latent}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.at("d").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.critic_hidden = j.at("critic_hidden").get<int>();
  c.aux_hidden = j.at("aux_hidden").get<int>();
  c.latent = j.at("latent").get<int>();
  c.variant = parse_phi_variant(j.at("variant").get<std::string>());
  c.temperature = j.at("temperature").get<float>();
  c.uniform_latent = j.at("uniform_latent").get<bool>();
  return c;
}

int critic_other_width(int entity_width) { return entity_width + kNumActions + 1; }

namespace {

Tensor bias(int n) { return Tensor({n}); }

void build_role(RoleModel& rm, const ModelConfig& c, int f, int games, int r, Rng& rng) {
  const std::string rs = std::to_string(r);
  const int fa = augmented_width(f, c.latent, c.variant);
  const int heads = head_count(c.latent, c.variant);
  Rng rp = rng.split("phi");
  for (int h = 0; h < heads; ++h) {
    const std::string base = "relnet/" + rs + "/h" + std::to_string(h) + "/";
    rm.phi.add(base + "q", ad::init_uniform({fa, c.d}, fa, rp));
    rm.phi.add(base + "k", ad::init_uniform({fa, c.d}, fa, rp));
  }
  Rng rt = rng.split("theta");
  const int in = f + c.d;
  rm.theta.add("relnet/" + rs + "/v", ad::init_uniform({fa, c.d}, fa, rt));
  rm.theta.add("policy/" + rs + "/w1", ad::init_uniform({in, c.hidden}, in, rt));
  rm.theta.add("policy/" + rs + "/b1", bias(c.hidden));
  rm.theta.add("policy/" + rs + "/w2", ad::init_uniform({c.hidden, c.hidden}, c.hidden, rt));
  rm.theta.add("policy/" + rs + "/b2", bias(c.hidden));
  rm.theta.add("policy/" + rs + "/w3", ad::init_uniform({c.hidden, kNumActions}, c.hidden, rt));
  rm.theta.add("policy/" + rs + "/b3", bias(kNumActions));
  Rng rz = rng.split("zeta");
  const int fo = critic_other_width(f);
  const std::string cb = "critic/" + rs + "/";
  rm.zeta.add(cb + "self_w", ad::init_uniform({f, c.d}, f, rz));
  rm.zeta.add(cb + "self_b", bias(c.d));
  rm.zeta.add(cb + "other_w", ad::init_uniform({fo, c.d}, fo, rz));
  rm.zeta.add(cb + "other_b", bias(c.d));
  rm.zeta.add(cb + "q", ad::init_uniform({c.d, c.d}, c.d, rz));
  rm.zeta.add(cb + "k", ad::init_uniform({c.d, c.d}, c.d, rz));
  rm.zeta.add(cb + "v", ad::init_uniform({c.d, c.d}, c.d, rz));
  rm.zeta.add(cb + "h_w", ad::init_uniform({2 * c.d, c.critic_hidden}, 2 * c.d, rz));
  rm.zeta.add(cb + "h_b", bias(c.critic_hidden));
  rm.zeta.add(cb + "out_w", ad::init_uniform({c.critic_hidden, kNumActions}, c.critic_hidden, rz));
  rm.zeta.add(cb + "out_b", bias(kNumActions));
  for (const auto& e : rm.theta.entries()) rm.theta_bar.add("target/" + e.name, e.value);
  for (const auto& e : rm.zeta.entries()) rm.zeta_bar.add("target/" + e.name, e.value);
  rm.psi.add("latent/" + rs + "/psi", Tensor({games, c.latent}));
  Rng rx = rng.split("xi");
  rm.xi.add("aux/" + rs + "/w1", ad::init_uniform({2 * f, c.aux_hidden}, 2 * f, rx));
  rm.xi.add("aux/" + rs + "/b1", bias(c.aux_hidden));
  rm.xi.add("aux/" + rs + "/w2", Tensor({c.aux_hidden, games}));
  rm.xi.add("aux/" + rs + "/b2", bias(games));
}

}  // namespace

Model init_model(const ModelConfig& cfg, int entity_width, int roles,
                 const std::vector<std::vector<int>>& game_populations, const std::string& env_kind, Rng& rng) {
  if (cfg.latent < 1 || cfg.d < 1 || cfg.hidden < 1) throw ParameterError("model widths must be >= 1");
  if (game_populations.empty()) throw ParameterError("model needs at least one training game");
  Model m;
  m.config = cfg;
  m.entity_width = entity_width;
  m.roles = roles;
  m.games = static_cast<int>(game_populations.size());
  m.env_kind = env_kind;
  m.game_populations = game_populations;
  m.role.resize(static_cast<std::size_t>(roles));
  for (int r = 0; r < roles; ++r) {
    Rng rr = rng.split("role").split(static_cast<std::uint64_t>(r));
    build_role(m.role[static_cast<std::size_t>(r)], cfg, entity_width, m.games, r, rr);
  }
  return m;
}

LatentSpec Model::latent_spec(int r) const {
  LatentSpec s;
  s.psi = role.at(static_cast<std::size_t>(r)).psi[0];
  s.temperature = config.temperature;
  s.uniform = config.uniform_latent;
  return s;
}

std::vector<ParamGroup*> Model::all_groups() {
  std::vector<ParamGroup*> out;
  for (auto& r : role)
    for (ParamGroup* g : {&r.phi, &r.theta, &r.zeta, &r.theta_bar, &r.zeta_bar, &r.psi, &r.xi}) out.push_back(g);
  return out;
}

std::vector<const ParamGroup*> Model::all_groups() const {
  std::vector<const ParamGroup*> out;
  for (const auto& r : role)
    for (const ParamGroup* g : {&r.phi, &r.theta, &r.zeta, &r.theta_bar, &r.zeta_bar, &r.psi, &r.xi}) out.push_back(g);
  return out;
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint c;
  for (const ParamGroup* g : all_groups())
    for (const auto& e : g->entries()) c.tensors.push_back(e);
  c.meta["model"] = config.to_json();
  c.meta["entity_width"] = entity_width;
  c.meta["roles"] = roles;
  c.meta["games"] = games;
  c.meta["env_kind"] = env_kind;
  c.meta["game_populations"] = game_populations;
  return c;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
  const auto& meta = ckpt.meta;
  if (!meta.contains("model")) throw ContractError("checkpoint carries no model metadata");
  Rng dummy(0);
  Model m = init_model(ModelConfig::from_json(meta.at("model")), meta.at("entity_width").get<int>(),
                       meta.at("roles").get<int>(),
                       meta.at("game_populations").get<std::vector<std::vector<int>>>(),
                       meta.at("env_kind").get<std::string>(), dummy);
  for (ParamGroup* g : m.all_groups())
    for (auto& e : g->entries()) {
      const Tensor& t = ckpt.get(e.name);
      if (t.shape() != e.value.shape()) throw DimensionError("checkpoint tensor '" + e.name + "' has the wrong shape");
      e.value = t;
    }
  return m;
}

PhiVars bind_phi(ad::Tape& tape, const ParamGroup& phi, bool requires_grad) {
  PhiVars v;
  auto vars = phi.bind(tape, requires_grad);
  for (std::size_t i = 0; i + 1 < vars.size(); i += 2) {
    v.q.push_back(vars[i]);
    v.k.push_back(vars[i + 1]);
  }
  return v;
}

namespace {
Var linear(Var x, Var w, Var b) { return ad::add_row(ad::matmul(x, w), b); }
}  // namespace

Var policy_logits(const PolicyVars& th, Var selfs, Var g, Var others_aug, int m) {
  using namespace theta_idx;
  Var e = relational_embedding(g, others_aug, th.p[v], m);
  const Var parts[] = {selfs, e};
  Var h = ad::relu(linear(ad::concat_cols(parts), th.p[w1], th.p[b1]));
  h = ad::relu(linear(h, th.p[w2], th.p[b2]));
  return linear(h, th.p[w3], th.p[b3]);
}

Var critic_q(const CriticVars& ze, Var selfs, Var others_in, int m) {
  using namespace zeta_idx;
  Var s = ad::relu(linear(selfs, ze.p[self_w], ze.p[self_b]));
  Var pooled;
  if (m == 0) {
    pooled = selfs.tape()->constant(Tensor({selfs.rows(), ze.p[v].cols()}));
  } else {
    Var o = ad::relu(linear(others_in, ze.p[other_w], ze.p[other_b]));
    Var att = ad::softmax(ad::group_dot(ad::matmul(s, ze.p[q]), ad::matmul(o, ze.p[k]), m), 1);
    pooled = ad::group_weighted_sum(att, ad::matmul(o, ze.p[v]), m);
  }
  const Var parts[] = {s, pooled};
  Var h = ad::relu(linear(ad::concat_cols(parts), ze.p[h_w], ze.p[h_b]));
  return linear(h, ze.p[out_w], ze.p[out_b]);
}

Var aux_logits(const AuxVars& xi, Var selfs, Var g, Var others, int m) {
  using namespace xi_idx;
  Var ctx = m == 0 ? selfs.tape()->constant(Tensor({selfs.rows(), selfs.cols()})) : ad::group_weighted_sum(g, others, m);
  const Var parts[] = {selfs, ctx};
  Var h = ad::relu(linear(ad::concat_cols(parts), xi.p[w1], xi.p[b1]));
  return linear(h, xi.p[w2], xi.p[b2]);
}

}  // namespace mra
