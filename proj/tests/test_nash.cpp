#include <gtest/gtest.h>

#include <cmath>

#include "mra/errors.hpp"
#include "mra/nash.hpp"
#include "mra/tabular.hpp"
#include "support.hpp"

using namespace mra;

namespace {

AgentPolicy pure(int states, int actions, int a) {
  AgentPolicy p(static_cast<std::size_t>(states), std::vector<double>(static_cast<std::size_t>(actions), 0.0));
  for (auto& row : p) row[static_cast<std::size_t>(a)] = 1.0;
  return p;
}

TabularMG one_state(const std::vector<int>& actions, const std::vector<std::vector<double>>& payoff, double gamma) {
  TabularMG mg;
  mg.states = 1;
  mg.actions = actions;
  for (std::size_t i = 0; i < actions.size(); ++i) mg.roles.push_back(static_cast<int>(i));
  mg.gamma = gamma;
  mg.transitions.assign(static_cast<std::size_t>(mg.joint_count()), 1.0);
  for (const auto& row : payoff) mg.rewards.insert(mg.rewards.end(), row.begin(), row.end());
  mg.validate();
  return mg;
}

}  // namespace

TEST(Tabular, TextRoundTrip) {
  Rng rng(1);
  TabularMG mg = random_tabular(3, {2, 3}, 0.9, rng);
  TabularMG back = parse_tabular(to_text(mg));
  EXPECT_EQ(back.states, mg.states);
  EXPECT_EQ(back.actions, mg.actions);
  EXPECT_EQ(back.roles, mg.roles);
  EXPECT_EQ(back.gamma, mg.gamma);
  EXPECT_EQ(back.transitions, mg.transitions);
  EXPECT_EQ(back.rewards, mg.rewards);
}

TEST(Tabular, ParseErrorsCarryLineNumbers) {
  try {
    parse_tabular("states 1\nagents 1\nactions 2\nbogus 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 4);
  }
  EXPECT_THROW(parse_tabular("states 1\nagents 1\nactions 1\ntransitions\n0.5\nrewards\n0\n"), ContractError);
}

TEST(Tabular, RolesDefaultToOnePerAgent) {
  TabularMG mg = parse_tabular("# comment\nstates 1\nagents 2\nactions 1 1\ngamma 0\ntransitions\n1\nrewards\n0\n0\n");
  EXPECT_EQ(mg.roles, (std::vector<int>{0, 1}));
}

TEST(Tabular, JointEncodingIsMixedRadix) {
  TabularMG mg = one_state({2, 3}, {{0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0}}, 0.0);
  EXPECT_EQ(mg.encode({1, 2}), 5);
  EXPECT_EQ(mg.decode(4), (std::vector<int>{1, 1}));
}

TEST(Nash, ScopeLimitsAreEnforced) {
  Rng rng(2);
  EXPECT_THROW(check_oracle_scope(random_tabular(7, {2}, 0.5, rng)), ScopeError);
  EXPECT_THROW(check_oracle_scope(random_tabular(2, {2, 2, 2, 2}, 0.5, rng)), ScopeError);
  EXPECT_THROW(check_oracle_scope(random_tabular(2, {4}, 0.5, rng)), ScopeError);
}

TEST(Nash, PolicyValueExamples) {
  TabularMG pennies = matching_pennies();
  auto v = policy_value(pennies, uniform_policy(pennies), 0);
  EXPECT_NEAR(v(0), 0.0, 1e-12);
  TabularMG ones = one_state({1}, {{1.0}}, 0.9);
  EXPECT_NEAR(policy_value(ones, uniform_policy(ones), 0)(0), 10.0, 1e-9);
  TabularMG bad = ones;
  bad.gamma = 1.0;
  EXPECT_THROW(policy_value(bad, uniform_policy(bad), 0), ContractError);
}

TEST(Nash, PolicyValueMatchesMonteCarlo) {
  Rng rng(3);
  TabularMG mg = random_tabular(3, {2, 2}, 0.8, rng);
  Rng prng(4);
  JointPolicy pi = random_policy(mg, prng);
  const auto v = policy_value(mg, pi, 1);
  Rng sim(5);
  const int n = 1000000;
  const int horizon = 80;  // 0.8^80 < 2e-8
  double sum = 0, sum2 = 0;
  for (int k = 0; k < n; ++k) {
    int s = 0;
    double ret = 0, disc = 1;
    for (int t = 0; t < horizon; ++t) {
      std::vector<int> a(2);
      for (int i = 0; i < 2; ++i) a[static_cast<std::size_t>(i)] = sim.categorical(std::span<const double>(pi[i][s]));
      const int j = mg.encode(a);
      ret += disc * mg.r(1, s, j);
      disc *= mg.gamma;
      std::vector<double> row(3);
      for (int n2 = 0; n2 < 3; ++n2) row[static_cast<std::size_t>(n2)] = mg.p(s, j, n2);
      s = sim.categorical(std::span<const double>(row));
    }
    sum += ret;
    sum2 += ret * ret;
  }
  const double mean = sum / n, sd = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(v(0), mean, 3 * sd);
}

TEST(Nash, BestResponseExamples) {
  TabularMG pennies = matching_pennies();
  auto br = best_response(pennies, uniform_policy(pennies), 1);
  EXPECT_NEAR(br.value(0), 0.0, 1e-12);
  JointPolicy heads = uniform_policy(pennies);
  heads[0] = pure(1, 2, 0);
  br = best_response(pennies, heads, 1);
  EXPECT_EQ(br.policy[0][1], 1.0);  // tails
  EXPECT_NEAR(br.value(0), 1.0, 1e-12);
}

TEST(Nash, BestResponseDominatesRandomPolicies) {
  Rng rng(6);
  TabularMG mg = random_tabular(4, {3}, 0.9, rng);
  auto br = best_response(mg, uniform_policy(mg), 0);
  Rng prng(7);
  for (int k = 0; k < 100; ++k) {
    auto v = policy_value(mg, random_policy(mg, prng), 0);
    for (int s = 0; s < 4; ++s) EXPECT_GE(br.value(s), v(s) - 1e-9);
  }
}

TEST(Nash, NashConvExamples) {
  TabularMG pennies = matching_pennies();
  EXPECT_NEAR(nashconv(pennies, uniform_policy(pennies)), 0.0, 1e-8);
  JointPolicy hh{pure(1, 2, 0), pure(1, 2, 0)};
  EXPECT_EQ(nashconv(pennies, hh), 2.0);
  EXPECT_NEAR(mra::testing::brute_force_nashconv(pennies, hh), 2.0, 1e-12);
}

TEST(Nash, NashConvMatchesBruteForceAndIsNonNegative) {
  Rng rng(8);
  for (int k = 0; k < 30; ++k) {
    Rng g = rng.split(static_cast<std::uint64_t>(k));
    const int states = 1 + g.below(4);
    std::vector<int> actions(static_cast<std::size_t>(1 + g.below(3)));
    for (auto& a : actions) a = 1 + g.below(3);
    TabularMG mg = random_tabular(states, actions, g.uniform(0.0, 0.95), g);
    JointPolicy pi = random_policy(mg, g);
    const double d = nashconv(mg, pi);
    EXPECT_GE(d, -1e-8);
    EXPECT_NEAR(d, mra::testing::brute_force_nashconv(mg, pi), 1e-6);
  }
}

TEST(Nash, KappaExamples) {
  AgentPolicy a{{0.6, 0.4}, {1.0, 0.0}}, b{{0.9, 0.1}, {1.0, 0.0}};
  EXPECT_NEAR(kappa(a, b), 0.6, 1e-12);
  EXPECT_EQ(kappa(a, a), 0.0);
  EXPECT_EQ(kappa(AgentPolicy{{1, 0}}, AgentPolicy{{0, 1}}), 2.0);
}

TEST(Nash, StateVisitationMass) {
  Rng rng(9);
  TabularMG mg = random_tabular(5, {2, 2}, 0.9, rng);
  Rng prng(10);
  auto rho = state_visitation(mg, random_policy(mg, prng));
  for (int s = 0; s < 5; ++s) {
    EXPECT_NEAR(rho.row(s).sum(), 10.0, 1e-6);
    EXPECT_GE(rho.row(s).minCoeff(), -1e-12);
  }
}

TEST(Nash, LipschitzExamples) {
  // Transitions ignore actions: no influence.
  TabularMG flat;
  flat.states = 2;
  flat.actions = {2};
  flat.roles = {0};
  flat.gamma = 0.5;
  flat.transitions = {0.3, 0.7, 0.3, 0.7, 0.6, 0.4, 0.6, 0.4};
  flat.rewards = {0, 1, 1, 0};
  Rng rng(11);
  EXPECT_NEAR(lipschitz_estimate(flat, 50, rng).value, 0.0, 1e-12);

  // Action 0 stays, action 1 flips the state.
  TabularMG flip = flat;
  flip.transitions = {1, 0, 0, 1, 0, 1, 1, 0};
  // Hand enumeration over deterministic pairs: P rows differ by 2 at each
  // state where the actions differ, kappa is 2 there too.
  Rng r2(12);
  EXPECT_NEAR(lipschitz_estimate(flip, 200, r2).value, 1.0, 1e-12);
}

TEST(Nash, LipschitzEstimateIsMonotoneInProbes) {
  Rng rng(13);
  TabularMG mg = random_tabular(3, {2, 2}, 0.9, rng);
  Rng a(14), b(14);
  EXPECT_GE(lipschitz_estimate(mg, 1000, a).value, lipschitz_estimate(mg, 10, b).value);
}

TEST(Nash, NashConvBoundExamples) {
  TabularMG pennies = matching_pennies();
  for (auto& r : pennies.rewards) r = (r + 1) / 2;  // into [0,1]
  auto rep = lemma1_check(pennies, uniform_policy(pennies), 0.0);
  EXPECT_NEAR(rep.lhs, 0.0, 1e-9);
  EXPECT_TRUE(rep.holds);
  EXPECT_THROW(lemma1_check(matching_pennies(), uniform_policy(pennies), 0.0), ContractError);
}

TEST(Nash, EpsilonRange) {
  TabularMG pennies = matching_pennies();
  EXPECT_TRUE(epsilon_range_member(pennies, uniform_policy(pennies), 0.0));
  JointPolicy hh{pure(1, 2, 0), pure(1, 2, 0)};
  EXPECT_FALSE(epsilon_range_member(pennies, hh, 1.0));
  EXPECT_DOUBLE_EQ(epsilon_threshold(0.3, {0.5}, {0.5}, 0.9), 0.3);
  // sigma - sigma*gamma*(i' - i)/(gamma i' + 1 - gamma) with i = 0, i' = 1
  EXPECT_NEAR(epsilon_threshold(1.0, {0.0}, {1.0}, 0.5), 1.0 - 0.5 / 1.0, 1e-12);
}

TEST(Nash, SigmaSelfDistanceIsWithinTolerance) {
  TabularMG coord = one_state({2, 2}, {{1, 0, 0, 1}, {1, 0, 0, 1}}, 0.0);
  auto rep = sigma_distance({coord}, {coord}, 0.25, 1e-3);
  EXPECT_LE(rep.sigma, 1e-3);
  EXPECT_GT(rep.train_equilibria, 0u);
}

TEST(Nash, SigmaMatchesHandEnumeration) {
  TabularMG coord = one_state({2, 2}, {{1, 0, 0, 1}, {1, 0, 0, 1}}, 0.0);
  TabularMG scaled = one_state({2, 2}, {{2, 0, 0, 0.5}, {2, 0, 0, 0.5}}, 0.0);
  const double res = 0.25, tol = 1e-3;
  // Independent max-min over grid equilibria found by brute-force NashConv.
  auto grid_ne = [&](const TabularMG& mg) {
    std::vector<JointPolicy> out;
    for (int a = 0; a <= 4; ++a)
      for (int b = 0; b <= 4; ++b) {
        JointPolicy pi{{{a * res, 1 - a * res}}, {{b * res, 1 - b * res}}};
        if (mra::testing::brute_force_nashconv(mg, pi) <= tol) out.push_back(pi);
      }
    return out;
  };
  const auto ne_train = grid_ne(coord), ne_eval = grid_ne(scaled);
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    double best = INFINITY;
    for (const auto& p : ne_train)
      for (const auto& q : ne_eval) {
        JointPolicy mixed = q;
        mixed[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(i)];  // roles differ per agent
        best = std::min(best, mra::testing::brute_force_nashconv(scaled, mixed));
      }
    expect = std::max(expect, best);
  }
  auto rep = sigma_distance({coord}, {scaled}, res, tol);
  EXPECT_NEAR(rep.sigma, expect, 1e-9);
}

TEST(Nash, SigmaIsDirectional) {
  // A strictly dominant with payoff 1 versus B strictly dominant with payoff 2:
  // importing the other game's equilibrium action costs 2 in one direction, 1 in the other.
  TabularMG dom_a = one_state({2, 2}, {{1, 1, 0, 0}, {1, 0, 1, 0}}, 0.0);
  TabularMG dom_b = one_state({2, 2}, {{0, 0, 2, 2}, {0, 2, 0, 2}}, 0.0);
  const double ab = sigma_distance({dom_a}, {dom_b}, 0.5, 1e-3).sigma;
  const double ba = sigma_distance({dom_b}, {dom_a}, 0.5, 1e-3).sigma;
  EXPECT_NEAR(ab, 2.0, 1e-12);
  EXPECT_NEAR(ba, 1.0, 1e-12);
}

TEST(Nash, SigmaWithoutGridEquilibriumRaises) {
  // Matching pennies has its only NE at 1/2, missing from a 1/3 grid.
  EXPECT_THROW(sigma_distance({matching_pennies()}, {matching_pennies()}, 1.0 / 3.0, 1e-3), ResolutionError);
}
