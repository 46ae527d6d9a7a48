#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "mra/errors.hpp"
#include "mra/metrics.hpp"
#include "mra/train.hpp"
#include "support.hpp"
#include "toys.hpp"

using namespace mra;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(ad::Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

TrainConfig small_train(int episodes) {
  TrainConfig cfg;
  cfg.K = 2;
  cfg.batch = 32;
  cfg.rollouts = 2;
  cfg.min_steps_per_update = 20;
  cfg.total_episodes = episodes;
  cfg.seed = 7;
  cfg.beta = 1e-3;
  cfg.tau = 0.1;
  return cfg;
}

Model small_model(const GameSet& games, int latent = 3) {
  ModelConfig mc;
  mc.d = 8;
  mc.hidden = 8;
  mc.critic_hidden = 8;
  mc.aux_hidden = 8;
  mc.latent = latent;
  std::vector<std::vector<int>> pops;
  for (const auto& g : games.games) pops.push_back(g.populations);
  Rng rng(11);
  return init_model(mc, games.entity_width(), games.roles(), pops, "treasure", rng);
}

RoleRows random_rows(const Model& model, int s, int m, Rng& rng) {
  RoleRows rr;
  rr.rows = s;
  rr.m = m;
  rr.selfs = random_tensor({s, model.entity_width}, rng);
  rr.others = random_tensor({s * m, model.entity_width}, rng);
  std::vector<int> zs;
  for (int i = 0; i < s; ++i) zs.push_back(i % model.config.latent);
  rr.z = one_hot_rows(zs, model.config.latent);
  return rr;
}

}  // namespace

TEST(Critic, BellmanTargetAndLoss) {
  EXPECT_DOUBLE_EQ(bellman_target(2.0, 0.9, 1.0), 2.9);
  EXPECT_DOUBLE_EQ(bellman_target(-1.5, 0.0, 123.0), -1.5);
  ad::Tape tape;
  Var q = tape.leaf(Tensor::matrix(2, 1, {3.0f, 1.0f}));
  Var loss = critic_loss_from(q, Tensor::matrix(2, 1, {2.9f, 1.0f}));
  EXPECT_NEAR(loss.value().item(), 0.005, 1e-6);  // mean of 0.01 and 0
}

TEST(Policy, ZeroCriticGivesZeroGradient) {
  ad::Tape tape;
  Var logits = tape.leaf(Tensor::matrix(2, 5, {1, 2, 3, 4, 5, -1, 0, 1, 0, -1}));
  auto g = tape.backward(policy_surrogate(logits, Tensor({2, 5})));
  for (float x : g[logits].data()) EXPECT_EQ(x, 0.0f);
}

TEST(Policy, SurrogateGradientMatchesDifferences) {
  Rng rng(1);
  Tensor q = random_tensor({3, 5}, rng);
  auto f = [&](ad::Tape&, const std::vector<Var>& v) { return policy_surrogate(v[0], q); };
  EXPECT_LT(mra::testing::gradcheck(f, {random_tensor({3, 5}, rng)}), 1e-3);
}

TEST(Policy, BanditAscentRaisesBestActionProbability) {
  ParamGroup p;
  p.add("logits", Tensor({1, 5}));
  Tensor q = Tensor::matrix(1, 5, {1, 0, 0, 0, 0});
  AdamState st;
  for (int t = 0; t < 100; ++t) {
    ad::Tape tape;
    auto vars = p.bind(tape, true);
    auto g = tape.backward(policy_surrogate(vars[0], q));
    adam_step(p, ParamGroup::gradients(g, vars), st, 0.01);
  }
  ad::Tape tape;
  auto probs = ad::softmax(tape.constant(p[0]), 1).value();
  EXPECT_GT(probs.at(0, 0), 0.5f);
}

TEST(Reptile, OuterUpdate) {
  ParamGroup init, inner;
  init.add("w", Tensor::vector({1, 2}));
  inner.add("w", Tensor::vector({3, -2}));
  EXPECT_EQ(reptile_outer_update(init, inner, 1.0)[0], inner[0]);
  EXPECT_EQ(reptile_outer_update(init, init, 0.7)[0], init[0]);
  auto half = reptile_outer_update(init, inner, 0.5);
  EXPECT_FLOAT_EQ(half[0][0], 2.0f);
  EXPECT_FLOAT_EQ(half[0][1], 0.0f);
}

TEST(Reptile, ExpansionTwoSteps) {
  Eigen::VectorXd g0(2), g1(2);
  g0 << 1, 2;
  g1 << -1, 0.5;
  Eigen::MatrixXd h0 = Eigen::MatrixXd::Identity(2, 2), h1(2, 2);
  h1 << 2, 1, 1, 3;
  const double beta = 0.1;
  Eigen::VectorXd expect = beta * (g0 + g1) + beta * beta * h1 * g0;
  Eigen::VectorXd got = reptile_expansion({g0, g1}, {h0, h1}, beta);
  EXPECT_LT((got - expect).norm(), 1e-12);
}

TEST(MutualInformation, EnumeratedToyIsLog2) {
  Model model = mra::testing::toy_model(1, false);
  RoleRows rows = mra::testing::toy_rows(4, {0, 1});
  Rng rng(1);
  MiResult res = mi_action_bound(model, 0, rows, 0, MiMode::enumerate, 10, rng, false);
  EXPECT_NEAR(res.bound, std::log(2.0), 1e-6);
}

TEST(MutualInformation, PolicyIgnoringGraphGivesZero) {
  Model model = mra::testing::toy_model(1, true);
  RoleRows rows = mra::testing::toy_rows(4, {0, 1});
  Rng rng(2);
  EXPECT_EQ(mi_action_bound(model, 0, rows, 0, MiMode::enumerate, 10, rng, false).bound, 0.0);
  EXPECT_EQ(mi_action_bound(model, 0, rows, 0, MiMode::sampled, 10, rng, false).bound, 0.0);
}

TEST(MutualInformation, SampledMarginalConvergesToEnumerated) {
  Model model = mra::testing::toy_model(1, false);
  RoleRows rows = mra::testing::toy_rows(400, {0, 1});
  Rng rng(3);
  // With a sharp policy a marginal sample that misses the row's own class
  // scores log of the floor, so only large n approaches the exact value.
  double b = mi_action_bound(model, 0, rows, 0, MiMode::sampled, 200, rng, false).bound;
  EXPECT_NEAR(b, std::log(2.0), 0.05);
}

TEST(MutualInformation, SingleLatentGivesZero) {
  GameSet games = make_game_set(EnvKind::treasure, {{3}});
  Model model = small_model(games, 1);
  Rng rng(4);
  RoleRows rows = random_rows(model, 5, 2, rng);
  EXPECT_NEAR(mi_action_bound(model, 0, rows, 0, MiMode::enumerate, 4, rng, false).bound, 0.0, 1e-6);
}

TEST(MutualInformation, PhiGradientMatchesDifferences) {
  GameSet games = make_game_set(EnvKind::treasure, {{3}});
  Model model = small_model(games, 3);
  Rng rng(5);
  RoleRows rows = random_rows(model, 4, 2, rng);
  // Scale phi and theta up so the graph, and the policy's response to it,
  // move the bound well above float noise.
  auto& rm = model.role[0];
  for (int i = 0; i < static_cast<int>(rm.phi.size()); ++i)
    for (auto& x : rm.phi[i].data()) x *= 4.0f;
  for (int i = 0; i < static_cast<int>(rm.theta.size()); ++i) {
    for (auto& x : rm.theta[i].data()) x *= 3.0f;
    rm.theta_bar[i] = rm.theta[i];
  }
  Rng r0(6);
  MiResult res = mi_action_bound(model, 0, rows, 0, MiMode::enumerate, 1, r0, true);
  double diff = 0, na = 0, nn = 0;
  const float h = 1e-2f;
  for (int t = 0; t < static_cast<int>(model.role[0].phi.size()); ++t)
    for (std::size_t j = 0; j < model.role[0].phi[t].size(); j += 3) {
      Model plus = model, minus = model;
      plus.role[0].phi[t][j] += h;
      minus.role[0].phi[t][j] -= h;
      Rng a(6), b(6);
      const double num = (mi_action_bound(plus, 0, rows, 0, MiMode::enumerate, 1, a, false).bound -
                          mi_action_bound(minus, 0, rows, 0, MiMode::enumerate, 1, b, false).bound) /
                         (2.0 * h);
      const double ana = res.phi_grads[static_cast<std::size_t>(t)][j];
      diff += (ana - num) * (ana - num);
      na += ana * ana;
      nn += num * num;
    }
  ASSERT_GT(na, 0.0);
  EXPECT_LT(std::sqrt(diff) / (std::sqrt(na) + std::sqrt(nn)), 1e-2);
}

TEST(Auxiliary, UniformLatentStartsAtLogGames) {
  GameSet games = make_game_set(EnvKind::treasure, {{2}, {3}, {4}, {5}});
  Model model = small_model(games);
  model.config.uniform_latent = true;
  Rng rng(7);
  std::vector<AuxBatch> batches;
  for (int m = 0; m < 4; ++m) batches.push_back({m, random_rows(model, 6, m + 1, rng)});
  AuxResult res = aux_inference_loss(model, 0, batches, rng, true);
  EXPECT_NEAR(res.loss, std::log(4.0), 1e-6);
  for (const auto& g : res.psi_grads)
    for (float x : g.data()) EXPECT_EQ(x, 0.0f);
}

TEST(Auxiliary, TwoGameToyLearnsToIdentifyGame) {
  auto losses = mra::testing::train_aux_toy(400, 0.05, 32, 1);
  EXPECT_NEAR(losses.front(), std::log(2.0), 1e-6);
  EXPECT_LT(losses.back(), 0.2 * std::log(2.0));
}

TEST(Auxiliary, UnknownGameIsContractError) {
  GameSet games = make_game_set(EnvKind::treasure, {{2}});
  Model model = small_model(games);
  Rng rng(8);
  std::vector<AuxBatch> batches{{3, random_rows(model, 2, 1, rng)}};
  EXPECT_THROW(aux_inference_loss(model, 0, batches, rng, false), ContractError);
  EXPECT_THROW(aux_inference_loss(model, 0, {}, rng, false), ContractError);
}

TEST(Budget, RemainderGoesToLowestIds) {
  EXPECT_EQ(episode_budget(10, 3), (std::vector<int>{4, 3, 3}));
  EXPECT_EQ(episode_budget(2, 4), (std::vector<int>{1, 1, 0, 0}));
}

TEST(TrainConfigCheck, RejectsBadValues) {
  TrainConfig cfg;
  cfg.gamma = 1.5;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = TrainConfig{};
  cfg.K = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = TrainConfig{};
  cfg.tau = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Trainer, BlockStepsRunInOrder) {
  GameSet games = make_game_set(EnvKind::treasure, {{2}, {3}});
  TrainConfig cfg = small_train(8);
  cfg.record_trace = true;
  Trainer tr(games, small_model(games), cfg);
  tr.run(nullptr);
  ASSERT_GT(tr.blocks(), 0);
  const auto& t = tr.trace();
  // The first block can run before the second game's buffer holds a batch,
  // so the auxiliary step is optional there; later blocks include it.
  std::vector<std::string> expect{"critic", "policy", "critic", "policy", "reptile", "phi"};
  EXPECT_EQ(std::vector<std::string>(t.begin(), t.begin() + 6), expect);
  const std::vector<std::string> full{"critic", "policy", "critic", "policy", "reptile", "phi", "psi_xi", "targets"};
  bool found_full = false;
  for (std::size_t i = 0; i + full.size() <= t.size(); ++i)
    found_full = found_full || std::equal(full.begin(), full.end(), t.begin() + static_cast<long>(i));
  EXPECT_TRUE(found_full);
}

TEST(Trainer, SingleGameSkipsAuxiliaryStep) {
  GameSet games = make_game_set(EnvKind::treasure, {{2}});
  TrainConfig cfg = small_train(6);
  cfg.record_trace = true;
  std::vector<EpisodeRecord> recs;
  Trainer tr(games, small_model(games), cfg);
  tr.run([&](const EpisodeRecord& r) { recs.push_back(r); });
  for (const auto& s : tr.trace()) EXPECT_NE(s, "psi_xi");
  ASSERT_EQ(recs.size(), 6u);
  for (const auto& r : recs) EXPECT_FALSE(r.aux_loss);
  EXPECT_TRUE(recs.back().mi_bound);
}

TEST(Trainer, ReplaysAreByteIdentical) {
  GameSet games = make_game_set(EnvKind::treasure, {{2}, {3}});
  auto once = [&] {
    std::vector<std::string> lines;
    Trainer tr(games, small_model(games), small_train(8));
    tr.run([&](const EpisodeRecord& r) { lines.push_back(to_json(r).dump()); });
    return std::make_pair(lines, encode_tensors(tr.model().to_checkpoint().tensors));
  };
  auto a = once(), b = once();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, ThreadsDoNotChangeResults) {
  GameSet games = make_game_set(EnvKind::treasure, {{2}});
  auto once = [&](int threads) {
    TrainConfig cfg = small_train(6);
    cfg.threads = threads;
    Trainer tr(games, small_model(games), cfg);
    tr.run(nullptr);
    return encode_tensors(tr.model().to_checkpoint().tensors);
  };
  EXPECT_EQ(once(1), once(2));
}

TEST(Trainer, NonFiniteAbortsWithDump) {
  GameSet games = make_game_set(EnvKind::treasure, {{2}});
  Model model = small_model(games);
  model.role[0].zeta[zeta_idx::out_b][0] = std::numeric_limits<float>::quiet_NaN();
  model.role[0].zeta_bar[zeta_idx::out_b][0] = std::numeric_limits<float>::quiet_NaN();
  const auto dir = std::filesystem::temp_directory_path() / "mra_nonfinite_test";
  std::filesystem::create_directories(dir);
  std::filesystem::remove(dir / "nonfinite_dump.json");
  Trainer tr(games, model, small_train(6));
  tr.set_dump_dir(dir);
  EXPECT_THROW(tr.run(nullptr), TrainingAborted);
  EXPECT_TRUE(std::filesystem::exists(dir / "nonfinite_dump.json"));
}
