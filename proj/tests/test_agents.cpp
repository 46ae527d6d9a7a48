#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mra/agents.hpp"
#include "mra/errors.hpp"
#include "mra/rollout.hpp"

using namespace mra;

namespace {

Transition tagged(int game, float tag) {
  Transition t;
  t.game_id = game;
  t.rewards = {tag};
  return t;
}

Model tiny_model(const GameSet& games) {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.hidden = 8;
  cfg.critic_hidden = 8;
  cfg.aux_hidden = 8;
  cfg.latent = 2;
  std::vector<std::vector<int>> pops;
  for (const auto& g : games.games) pops.push_back(g.populations);
  Rng rng(3);
  return init_model(cfg, games.entity_width(), games.roles(), pops, "treasure", rng);
}

}  // namespace

TEST(Buffer, FifoEvictionPerGame) {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push(tagged(0, static_cast<float>(i)));
  buf.push(tagged(1, 99));
  EXPECT_EQ(buf.size(0), 3u);
  EXPECT_EQ(buf.size(1), 1u);
  Rng rng(1);
  auto s = buf.sample(0, 3, rng);
  ASSERT_TRUE(s);
  std::set<float> tags;
  for (const auto& t : *s) tags.insert(t->rewards[0]);
  EXPECT_EQ(tags, (std::set<float>{2, 3, 4}));  // oldest two evicted
  EXPECT_EQ(buf.games(), (std::vector<int>{0, 1}));
}

TEST(Buffer, SamplesWithoutReplacementAndRefusesShortPartitions) {
  ReplayBuffer buf(100);
  for (int i = 0; i < 20; ++i) buf.push(tagged(0, static_cast<float>(i)));
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    auto s = buf.sample(0, 20, rng);
    ASSERT_TRUE(s);
    std::set<float> tags;
    for (const auto& t : *s) tags.insert(t->rewards[0]);
    EXPECT_EQ(tags.size(), 20u);
  }
  EXPECT_FALSE(buf.sample(0, 21, rng));
  EXPECT_FALSE(buf.sample(5, 1, rng));
  EXPECT_FALSE(buf.ready(0, 21));
  EXPECT_TRUE(buf.ready(0, 20));
}

TEST(Buffer, SampleIsUniform) {
  ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.push(tagged(0, static_cast<float>(i)));
  Rng rng(4);
  std::vector<int> counts(10, 0);
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    auto s = buf.sample(0, 3, rng);
    for (const auto& t : *s) ++counts[static_cast<std::size_t>(t->rewards[0])];
  }
  for (int c : counts) EXPECT_NEAR(c / double(reps), 0.3, 0.015);
}

TEST(SoftUpdate, InterpolatesAndValidatesTau) {
  ParamGroup target, online;
  target.add("w", ad::Tensor::vector({0, 10}));
  online.add("w", ad::Tensor::vector({1, 0}));
  soft_update(target, online, 0.25);
  EXPECT_FLOAT_EQ(target[0][0], 0.25f);
  EXPECT_FLOAT_EQ(target[0][1], 7.5f);
  soft_update(target, online, 1.0);
  EXPECT_EQ(target[0], online[0]);
  EXPECT_THROW(soft_update(target, online, 0.0), ParameterError);
  EXPECT_THROW(soft_update(target, online, 1.5), ParameterError);
}

TEST(Act, DeterministicGivenRngAndGreedyIsArgmax) {
  GameSet games = make_game_set(EnvKind::treasure, {{3}});
  Model model = tiny_model(games);
  Env env(games.games[0]);
  Rng rng(5);
  JointObs obs = env.reset(rng);
  Rng a(9), b(9);
  RoleAct ra = act_role(model, 0, games.games[0], obs, {0, 1, 0}, a, ActMode::sample);
  RoleAct rb = act_role(model, 0, games.games[0], obs, {0, 1, 0}, b, ActMode::sample);
  EXPECT_EQ(ra.actions, rb.actions);
  EXPECT_EQ(ra.graphs, rb.graphs);
  ASSERT_EQ(ra.graphs.size(), 3u * 2u);
  for (int i = 0; i < 3; ++i) {
    float s = ra.graphs[static_cast<std::size_t>(2 * i)] + ra.graphs[static_cast<std::size_t>(2 * i + 1)];
    EXPECT_NEAR(s, 1.0f, 1e-6);  // hard graph: one edge per agent
    double ps = 0;
    for (double p : ra.probs[static_cast<std::size_t>(i)]) ps += p;
    EXPECT_NEAR(ps, 1.0, 1e-9);
  }
  Rng c(10);
  RoleAct greedy = act_role(model, 0, games.games[0], obs, {0, 1, 0}, c, ActMode::greedy);
  for (int i = 0; i < 3; ++i) {
    const auto& p = greedy.probs[static_cast<std::size_t>(i)];
    int best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    EXPECT_EQ(greedy.actions[static_cast<std::size_t>(i)], best);
  }
}

TEST(GatherRole, RowsAreSampleMajorWithStoredGraphs) {
  GameSet games = make_game_set(EnvKind::treasure, {{3}});
  Model model = tiny_model(games);
  EpisodeOptions opts;
  EpisodeResult ep = run_episode(model, games.games[0], Rng(11), opts);
  ASSERT_EQ(ep.transitions.size(), 20u);
  std::vector<TransitionPtr> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(std::make_shared<const Transition>(ep.transitions[static_cast<std::size_t>(i)]));
  RoleRows rows = gather_role(batch, games.games[0], 0, 2);
  EXPECT_EQ(rows.rows, 12);
  EXPECT_EQ(rows.m, 2);
  for (int r = 0; r < rows.rows; ++r) {
    EXPECT_EQ(rows.sample[static_cast<std::size_t>(r)], r / 3);
    EXPECT_EQ(rows.agent[static_cast<std::size_t>(r)], r % 3);
    const Transition& t = *batch[static_cast<std::size_t>(r / 3)];
    EXPECT_EQ(rows.own_action[static_cast<std::size_t>(r)], t.actions[static_cast<std::size_t>(r % 3)]);
    EXPECT_FLOAT_EQ(rows.reward.at(r, 0), t.rewards[static_cast<std::size_t>(r % 3)]);
    EXPECT_FLOAT_EQ(rows.z.at(r, t.latent[static_cast<std::size_t>(r % 3)]), 1.0f);
    for (int j = 0; j < 2; ++j)
      EXPECT_FLOAT_EQ(rows.graph.at(r, j), t.graphs[static_cast<std::size_t>((r % 3) * 2 + j)]);
  }
}

TEST(Rollout, ThreadCountDoesNotChangeResults) {
  GameSet games = make_game_set(EnvKind::treasure, {{2}});
  Model model = tiny_model(games);
  EpisodeOptions opts;
  auto one = run_episodes(model, games.games[0], Rng(12), 0, 6, opts, 1);
  auto three = run_episodes(model, games.games[0], Rng(12), 0, 6, opts, 3);
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].agent_returns, three[i].agent_returns);
    EXPECT_EQ(one[i].transitions, three[i].transitions);
  }
  auto offset = run_episodes(model, games.games[0], Rng(12), 3, 1, opts, 1);
  EXPECT_EQ(offset[0].transitions, one[3].transitions);
}
