#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mra/checkpoint.hpp"
#include "mra/params.hpp"
#include "mra/relnet.hpp"

namespace mra {

struct ModelConfig {
  int d = 64;               // attention embedding width
  int hidden = 64;          // policy hidden width
  int critic_hidden = 64;
  int aux_hidden = 64;
  int latent = 6;           // |Z|
  PhiVariant variant = PhiVariant::option;
  float temperature = 1.0f;
  bool uniform_latent = false;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Parameter index layout inside each group.
namespace theta_idx {
inline constexpr int v = 0, w1 = 1, b1 = 2, w2 = 3, b2 = 4, w3 = 5, b3 = 6;
}
namespace zeta_idx {
inline constexpr int self_w = 0, self_b = 1, other_w = 2, other_b = 3, q = 4, k = 5, v = 6, h_w = 7, h_b = 8,
                     out_w = 9, out_b = 10;
}
namespace xi_idx {
inline constexpr int w1 = 0, b1 = 1, w2 = 2, b2 = 3;
}

// Parameters shared by every agent of one role.
struct RoleModel {
  ParamGroup phi;        // relnet/<role>/h<k>/{q,k}
  ParamGroup theta;      // relnet/<role>/v, policy/<role>/...
  ParamGroup zeta;       // critic/<role>/...
  ParamGroup theta_bar;  // target/policy copy of theta
  ParamGroup zeta_bar;   // target/critic copy of zeta
  ParamGroup psi;        // latent/<role>/psi [games, Z]
  ParamGroup xi;         // aux/<role>/...
};

struct Model {
  ModelConfig config;
  int entity_width = 0;
  int roles = 0;
  int games = 1;
  std::string env_kind;
  std::vector<std::vector<int>> game_populations;  // training populations, index = game id
  std::vector<RoleModel> role;

  LatentSpec latent_spec(int r) const;
  int augmented() const { return augmented_width(entity_width, config.latent, config.variant); }

  Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const Checkpoint& ckpt);
  std::vector<ParamGroup*> all_groups();
  std::vector<const ParamGroup*> all_groups() const;
};

Model init_model(const ModelConfig& cfg, int entity_width, int roles,
                 const std::vector<std::vector<int>>& game_populations, const std::string& env_kind, Rng& rng);

// Bound views of the parameter groups on a tape.
struct PolicyVars {
  std::vector<ad::Var> p;  // theta_idx layout
};
struct CriticVars {
  std::vector<ad::Var> p;  // zeta_idx layout
};
struct AuxVars {
  std::vector<ad::Var> p;  // xi_idx layout
};

PhiVars bind_phi(ad::Tape& tape, const ParamGroup& phi, bool requires_grad);

// Policy logits [S,5] from raw self entities [S,F], the graph g [S,m] and
// latent-augmented others [S*m,Fa].
ad::Var policy_logits(const PolicyVars& th, ad::Var selfs, ad::Var g, ad::Var others_aug, int m);

// Centralized critic: Q for each own action, [S,5]. others_in rows are
// [entity features | one-hot action | g weight] for every other agent.
ad::Var critic_q(const CriticVars& ze, ad::Var selfs, ad::Var others_in, int m);

// Aux inference logits [S,|M|] from [self | sum_j g_j o_j].
ad::Var aux_logits(const AuxVars& xi, ad::Var selfs, ad::Var g, ad::Var others, int m);

int critic_other_width(int entity_width);

}  // namespace mra
