#include "mra/relnet.hpp"

#include <cmath>

#include "mra/errors.hpp"

namespace mra {

using ad::Tensor;
using ad::Var;

std::string to_string(PhiVariant v) {
  switch (v) {
    case PhiVariant::option: return "option";
    case PhiVariant::concat: return "concat";
    case PhiVariant::bilinear: return "bilinear";
  }
  return "?";
}

PhiVariant parse_phi_variant(const std::string& name) {
  if (name == "option") return PhiVariant::option;
  if (name == "concat") return PhiVariant::concat;
  if (name == "bilinear") return PhiVariant::bilinear;
  throw ParameterError("unknown phi variant '" + name + "'");
}

int augmented_width(int entity_width, int latent, PhiVariant v) {
  switch (v) {
    case PhiVariant::option: return entity_width;
    case PhiVariant::concat: return entity_width + latent;
    case PhiVariant::bilinear: return entity_width * latent;
  }
  return entity_width;
}

int head_count(int latent, PhiVariant v) { return v == PhiVariant::option ? latent : 1; }

Var augment_entities(Var ents, Var z, PhiVariant v) {
  if (v == PhiVariant::option) return ents;
  if (ents.rows() != z.rows()) throw DimensionError("augment_entities: entity and latent row counts differ");
  if (v == PhiVariant::concat) {
    const Var parts[] = {ents, z};
    return ad::concat_cols(parts);
  }
  return ad::outer_rows(ents, z);
}

Var attention_graph(Var self_aug, Var others_aug, Var wq, Var wk, int m) {
  Var q = ad::matmul(self_aug, wq);
  Var k = ad::matmul(others_aug, wk);
  return ad::softmax(ad::group_dot(q, k, m), 1);
}

namespace {

// Index of the shared one-hot row, or -1 if rows differ or are not one-hot.
int shared_hard_index(const Tensor& z) {
  const int s = z.rows(), k = z.cols();
  int found = -1;
  for (int i = 0; i < s; ++i) {
    int idx = -1;
    for (int j = 0; j < k; ++j) {
      const float v = z.at(i, j);
      if (v == 1.0f && idx < 0) idx = j;
      else if (v != 0.0f) return -1;
    }
    if (idx < 0 || (found >= 0 && idx != found)) return -1;
    found = idx;
  }
  return found;
}

}  // namespace

Var generate_graph(const PhiVars& phi, Var selfs, Var others, Var z, int m, PhiVariant v) {
  ad::Tape& tape = *selfs.tape();
  const int s = selfs.rows();
  const int heads = static_cast<int>(phi.q.size());
  if (heads == 0 || phi.k.size() != phi.q.size()) throw ContractError("generate_graph: malformed phi parameters");
  const int latent = z.cols();
  if (z.rows() != s) throw DimensionError("generate_graph: latent rows differ from observation rows");
  if (v == PhiVariant::option && latent != heads)
    throw ContractError("latent width " + std::to_string(latent) + " differs from head count " + std::to_string(heads));
  if (m == 0) return tape.constant(Tensor({s, 0}));
  if (v != PhiVariant::option) {
    const int fa = phi.q[0].rows();
    const int f = selfs.cols();
    if (augmented_width(f, latent, v) != fa)
      throw ContractError("latent width " + std::to_string(latent) + " does not match the phi input width");
    Var z_rep = ad::repeat_rows(z, m);
    return attention_graph(augment_entities(selfs, z, v), augment_entities(others, z_rep, v), phi.q[0], phi.k[0], m);
  }
  // Option: hard shared z short-circuits to a single head when no gradient
  // needs to reach z.
  if (!tape.requires_grad(z.id())) {
    const int h = shared_hard_index(z.value());
    if (h >= 0) return attention_graph(selfs, others, phi.q[static_cast<std::size_t>(h)], phi.k[static_cast<std::size_t>(h)], m);
  }
  Var total;
  for (int h = 0; h < heads; ++h) {
    Var gh = attention_graph(selfs, others, phi.q[static_cast<std::size_t>(h)], phi.k[static_cast<std::size_t>(h)], m);
    Var weighted = ad::mul_col(gh, ad::slice_cols(z, h, 1));
    total = total.valid() ? ad::add(total, weighted) : weighted;
  }
  return total;
}

Var relational_embedding(Var g, Var others_aug, Var wv, int m) {
  const int s = g.rows();
  if (m == 0) return g.tape()->constant(Tensor({s, wv.cols()}));
  return ad::group_weighted_sum(g, ad::matmul(others_aug, wv), m);
}

std::vector<double> latent_probs(const LatentSpec& spec, int game_id) {
  const int z = spec.latent();
  if (spec.uniform) return std::vector<double>(static_cast<std::size_t>(z), 1.0 / z);
  if (game_id < 0 || game_id >= spec.games())
    throw ContractError("game id " + std::to_string(game_id) + " has no latent row");
  std::vector<double> p(static_cast<std::size_t>(z));
  double mx = -INFINITY, total = 0.0;
  for (int j = 0; j < z; ++j) mx = std::max(mx, static_cast<double>(spec.psi.at(game_id, j)));
  for (int j = 0; j < z; ++j) total += p[static_cast<std::size_t>(j)] = std::exp(spec.psi.at(game_id, j) - mx);
  for (double& x : p) x /= total;
  return p;
}

int sample_latent(const LatentSpec& spec, int game_id, Rng& rng) {
  const auto p = latent_probs(spec, game_id);
  return rng.categorical(std::span<const double>(p));
}

Var sample_latent_soft(Var psi, int game_id, int rows, float temperature, Rng& rng) {
  if (game_id < 0 || game_id >= psi.rows()) throw ContractError("game id has no latent row");
  Var logits = ad::repeat_rows(ad::slice_rows(psi, game_id, 1), rows);
  return ad::gumbel_softmax(logits, temperature, false, rng);
}

Tensor one_hot(int index, int size) {
  Tensor t({size});
  t[static_cast<std::size_t>(index)] = 1.0f;
  return t;
}

Tensor one_hot_rows(const std::vector<int>& indices, int size) {
  Tensor t({static_cast<int>(indices.size()), size});
  for (std::size_t i = 0; i < indices.size(); ++i) t.at(static_cast<int>(i), indices[i]) = 1.0f;
  return t;
}

}  // namespace mra
