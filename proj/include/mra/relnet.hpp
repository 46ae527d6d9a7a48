#pragma once

#include <string>
#include <vector>

#include "mra/autodiff.hpp"
#include "mra/rng.hpp"

namespace mra {

enum class PhiVariant { option, concat, bilinear };

std::string to_string(PhiVariant v);
PhiVariant parse_phi_variant(const std::string& name);

// Width of an entity after the latent is mixed in.
int augmented_width(int entity_width, int latent, PhiVariant v);
// Option: one head per latent class. Concat/bilinear: a single head.
int head_count(int latent, PhiVariant v);

// Query/key transforms per head (phi). The value transform lives with the
// policy parameters because the embedding feeds the policy.
struct PhiVars {
  std::vector<ad::Var> q;
  std::vector<ad::Var> k;
};

// ents [R,F], z [R,Z] -> [R,Fa]. Option leaves entities untouched.
ad::Var augment_entities(ad::Var ents, ad::Var z, PhiVariant v);

// g[i, j] = softmax_j( (self_i Wq) . (other_{i,j} Wk) ), shape [S, m].
ad::Var attention_graph(ad::Var self_aug, ad::Var others_aug, ad::Var wq, ad::Var wk, int m);

// Higher-level graph g = phi(o, z). selfs [S,F], others [S*m,F], z [S,Z]
// (one-hot or soft). Option blends head graphs linearly by z, which selects a
// single head for one-hot z. m == 0 yields a constant [S,0] graph.
ad::Var generate_graph(const PhiVars& phi, ad::Var selfs, ad::Var others, ad::Var z, int m, PhiVariant v);

// e_i = sum_j g[i,j] V(other_{i,j}); m == 0 yields zeros [S,d].
ad::Var relational_embedding(ad::Var g, ad::Var others_aug, ad::Var wv, int m);

struct LatentSpec {
  ad::Tensor psi;  // [games, Z] categorical logits
  float temperature = 1.0f;
  bool uniform = false;  // ignore psi and sample uniformly

  int latent() const { return psi.cols(); }
  int games() const { return psi.rows(); }
};

std::vector<double> latent_probs(const LatentSpec& spec, int game_id);
// Hard categorical sample.
int sample_latent(const LatentSpec& spec, int game_id, Rng& rng);
// Differentiable Gumbel-softmax samples for `rows` rows from a psi leaf [games, Z].
ad::Var sample_latent_soft(ad::Var psi, int game_id, int rows, float temperature, Rng& rng);

ad::Tensor one_hot(int index, int size);
ad::Tensor one_hot_rows(const std::vector<int>& indices, int size);

}  // namespace mra
