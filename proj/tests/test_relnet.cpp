#include <gtest/gtest.h>

#include <cmath>

#include "mra/agents.hpp"
#include "mra/errors.hpp"
#include "mra/model.hpp"
#include "mra/relnet.hpp"
#include "support.hpp"

using namespace mra;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(ad::Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

Model small_model(PhiVariant v, int latent = 3, int games = 2, int f = 7) {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.hidden = 8;
  cfg.critic_hidden = 8;
  cfg.aux_hidden = 8;
  cfg.latent = latent;
  cfg.variant = v;
  std::vector<std::vector<int>> pops;
  for (int g = 0; g < games; ++g) pops.push_back({2 + g});
  Rng rng(21);
  return init_model(cfg, f, 1, pops, "treasure", rng);
}

}  // namespace

TEST(Relnet, Widths) {
  EXPECT_EQ(augmented_width(7, 3, PhiVariant::option), 7);
  EXPECT_EQ(augmented_width(7, 3, PhiVariant::concat), 10);
  EXPECT_EQ(augmented_width(7, 3, PhiVariant::bilinear), 21);
  EXPECT_EQ(head_count(3, PhiVariant::option), 3);
  EXPECT_EQ(head_count(3, PhiVariant::concat), 1);
  EXPECT_EQ(parse_phi_variant(to_string(PhiVariant::bilinear)), PhiVariant::bilinear);
}

class GraphProperties : public ::testing::TestWithParam<PhiVariant> {};

TEST_P(GraphProperties, RowsSumToOneAndPermutationEquivariant) {
  const PhiVariant v = GetParam();
  Model model = small_model(v);
  const int f = model.entity_width;
  Rng rng(5);
  for (int m : {1, 2, 5, 23}) {
    const int s = 3;
    Tensor selfs = random_tensor({s, f}, rng), others = random_tensor({s * m, f}, rng);
    std::vector<int> zi{0, 1, 2};
    ad::Tape tape;
    PhiVars phi = bind_phi(tape, model.role[0].phi, false);
    Var z = tape.constant(one_hot_rows(zi, 3));
    Var g = generate_graph(phi, tape.constant(selfs), tape.constant(others), z, m, v);
    ASSERT_EQ(g.value().shape(), (ad::Shape{s, m}));
    for (int i = 0; i < s; ++i) {
      double sum = 0;
      for (int j = 0; j < m; ++j) sum += g.value().at(i, j);
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
    // Reverse the other-entity order of every row.
    Tensor perm({s * m, f});
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < m; ++j)
        for (int c = 0; c < f; ++c) perm.at(i * m + j, c) = others.at(i * m + (m - 1 - j), c);
    Var gp = generate_graph(phi, tape.constant(selfs), tape.constant(perm), z, m, v);
    PolicyVars th{model.role[0].theta.bind(tape, false)};
    Var zrep = tape.constant(one_hot_rows([&] {
      std::vector<int> r;
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < m; ++j) r.push_back(zi[static_cast<std::size_t>(i)]);
      return r;
    }(), 3));
    Var e1 = relational_embedding(g, augment_entities(tape.constant(others), zrep, v), th.p[theta_idx::v], m);
    Var e2 = relational_embedding(gp, augment_entities(tape.constant(perm), zrep, v), th.p[theta_idx::v], m);
    for (int i = 0; i < s; ++i) {
      for (int j = 0; j < m; ++j) EXPECT_NEAR(g.value().at(i, j), gp.value().at(i, m - 1 - j), 1e-6);
      for (int c = 0; c < e1.cols(); ++c) EXPECT_NEAR(e1.value().at(i, c), e2.value().at(i, c), 1e-5);
    }
    EXPECT_EQ(e1.cols(), model.config.d);  // width fixed for every population
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, GraphProperties,
                         ::testing::Values(PhiVariant::option, PhiVariant::concat, PhiVariant::bilinear));

TEST(Relnet, OptionSelectsHeadForOneHotLatent) {
  Model model = small_model(PhiVariant::option);
  Rng rng(6);
  const int f = model.entity_width, m = 3;
  Tensor selfs = random_tensor({1, f}, rng), others = random_tensor({m, f}, rng);
  ad::Tape tape;
  PhiVars phi = bind_phi(tape, model.role[0].phi, false);
  for (int h = 0; h < 3; ++h) {
    Var g = generate_graph(phi, tape.constant(selfs), tape.constant(others), tape.constant(one_hot_rows({h}, 3)), m,
                           PhiVariant::option);
    Var direct = attention_graph(tape.constant(selfs), tape.constant(others), phi.q[static_cast<std::size_t>(h)],
                                 phi.k[static_cast<std::size_t>(h)], m);
    EXPECT_EQ(g.value(), direct.value());
  }
}

TEST(Relnet, SoftLatentBlendsHeadsAndCarriesGradient) {
  Model model = small_model(PhiVariant::option);
  Rng rng(7);
  const int f = model.entity_width, m = 2;
  Tensor selfs = random_tensor({2, f}, rng), others = random_tensor({2 * m, f}, rng);
  auto loss = [&](ad::Tape& tape, const std::vector<Var>& v) {
    PhiVars phi = bind_phi(tape, model.role[0].phi, false);
    Var z = ad::softmax(v[0], 1);
    Var g = generate_graph(phi, tape.constant(selfs), tape.constant(others), z, m, PhiVariant::option);
    return ad::sum(ad::mul(g, tape.constant(Tensor::matrix(2, 2, {1, -1, 0.5f, 2}))));
  };
  EXPECT_LT(mra::testing::gradcheck(loss, {random_tensor({2, 3}, rng)}), 1e-3);
}

TEST(Relnet, LatentWidthMismatchIsContractError) {
  Model model = small_model(PhiVariant::option);
  ad::Tape tape;
  PhiVars phi = bind_phi(tape, model.role[0].phi, false);
  Var s = tape.constant(Tensor({1, model.entity_width}));
  Var o = tape.constant(Tensor({2, model.entity_width}));
  EXPECT_THROW(generate_graph(phi, s, o, tape.constant(one_hot_rows({0}, 4)), 2, PhiVariant::option), ContractError);
  Model concat = small_model(PhiVariant::concat);
  PhiVars phc = bind_phi(tape, concat.role[0].phi, false);
  EXPECT_THROW(generate_graph(phc, s, o, tape.constant(one_hot_rows({0}, 4)), 2, PhiVariant::concat), ContractError);
}

TEST(Relnet, SingleAgentGraphIsEmpty) {
  Model model = small_model(PhiVariant::option);
  ad::Tape tape;
  PhiVars phi = bind_phi(tape, model.role[0].phi, false);
  Var g = generate_graph(phi, tape.constant(Tensor({2, model.entity_width})), tape.constant(Tensor({0, model.entity_width})),
                         tape.constant(one_hot_rows({0, 1}, 3)), 0, PhiVariant::option);
  EXPECT_EQ(g.value().shape(), (ad::Shape{2, 0}));
}

TEST(Relnet, LatentDistribution) {
  LatentSpec spec;
  spec.psi = Tensor::matrix(2, 3, {0, 0, 0, std::log(1.0f), std::log(2.0f), std::log(1.0f)});
  auto p0 = latent_probs(spec, 0), p1 = latent_probs(spec, 1);
  for (double x : p0) EXPECT_NEAR(x, 1.0 / 3, 1e-12);
  EXPECT_NEAR(p1[1], 0.5, 1e-6);
  EXPECT_THROW(latent_probs(spec, 2), ContractError);
  spec.uniform = true;
  EXPECT_NEAR(latent_probs(spec, 7)[2], 1.0 / 3, 1e-12);
}

TEST(Relnet, SoftLatentSamplesAreDistributions) {
  ad::Tape tape;
  Rng rng(8);
  Var psi = tape.leaf(Tensor::matrix(2, 4, {0, 1, 2, 3, 3, 2, 1, 0}));
  Var z = sample_latent_soft(psi, 1, 5, 0.5f, rng);
  ASSERT_EQ(z.value().shape(), (ad::Shape{5, 4}));
  for (int i = 0; i < 5; ++i) {
    double s = 0;
    for (int j = 0; j < 4; ++j) s += z.value().at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  auto g = tape.backward(ad::sum(ad::mul(z, tape.constant(Tensor::matrix(5, 4, {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4})))));
  double norm_other = 0, norm_row = 0;
  for (int j = 0; j < 4; ++j) {
    norm_other += std::abs(g[psi].at(0, j));
    norm_row += std::abs(g[psi].at(1, j));
  }
  EXPECT_EQ(norm_other, 0.0);
  EXPECT_GT(norm_row, 0.0);
}

TEST(Model, CheckpointRoundTrip) {
  Model model = small_model(PhiVariant::concat);
  Model back = Model::from_checkpoint(model.to_checkpoint());
  auto a = model.all_groups();
  auto b = back.all_groups();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  EXPECT_EQ(back.game_populations, model.game_populations);
  EXPECT_EQ(back.config.variant, PhiVariant::concat);
}

TEST(Model, AuxStartsAsUniformPredictor) {
  Model model = small_model(PhiVariant::option, 3, 4);
  Rng rng(9);
  ad::Tape tape;
  AuxVars xi{model.role[0].xi.bind(tape, false)};
  Var logits = aux_logits(xi, tape.constant(random_tensor({3, model.entity_width}, rng)), tape.constant(Tensor({3, 2}, 0.5f)),
                          tape.constant(random_tensor({6, model.entity_width}, rng)), 2);
  Var lp = ad::log_softmax(logits, 1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(lp.value().at(i, j), -std::log(4.0), 1e-6);
}
