#include "mra/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mra/errors.hpp"

namespace mra {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::treasure: return "treasure";
    case EnvKind::resource: return "resource";
    case EnvKind::pacman: return "pacman";
    case EnvKind::tabular: return "tabular";
  }
  return "?";
}

EnvKind parse_env_kind(const std::string& name) {
  if (name == "treasure") return EnvKind::treasure;
  if (name == "resource") return EnvKind::resource;
  if (name == "pacman") return EnvKind::pacman;
  if (name == "tabular") return EnvKind::tabular;
  throw ParameterError("unknown environment kind '" + name + "'");
}

int default_landmarks(EnvKind kind) {
  switch (kind) {
    case EnvKind::treasure: return 2;
    case EnvKind::resource: return 6;
    case EnvKind::pacman: return 20;
    case EnvKind::tabular: return 0;
  }
  return 0;
}

int GameSpec::total_agents() const {
  int n = 0;
  for (int p : populations) n += p;
  return n;
}

int GameSpec::role_of(int agent) const {
  int acc = 0;
  for (int r = 0; r < roles(); ++r) {
    acc += populations[static_cast<std::size_t>(r)];
    if (agent < acc) return r;
  }
  throw ContractError("agent index " + std::to_string(agent) + " out of range");
}

int GameSpec::first_of_role(int role) const {
  int acc = 0;
  for (int r = 0; r < role; ++r) acc += populations[static_cast<std::size_t>(r)];
  return acc;
}

int GameSpec::entity_width() const {
  const int per_landmark = kind == EnvKind::resource ? 3 : 2;
  return 4 + roles() + per_landmark * landmarks;
}

void GameSpec::validate() const {
  if (populations.empty()) throw ParameterError("game spec needs at least one role");
  for (int p : populations)
    if (p < 1) throw ParameterError("every role population must be >= 1");
  if (horizon < 1) throw ParameterError("horizon must be >= 1");
  if (landmarks < 0) throw ParameterError("landmark count must be >= 0");
  if (kind == EnvKind::pacman && roles() != 2) throw ParameterError("pacman games have exactly two roles");
  if ((kind == EnvKind::treasure || kind == EnvKind::resource) && roles() != 1)
    throw ParameterError(to_string(kind) + " games have exactly one role");
}

GameSet make_game_set(EnvKind kind, const std::vector<std::vector<int>>& populations, int horizon, int landmarks,
                      bool sparse) {
  if (populations.empty()) throw ParameterError("game set needs at least one population entry");
  GameSet set;
  set.kind = kind;
  std::set<std::vector<int>> seen;
  for (std::size_t i = 0; i < populations.size(); ++i) {
    GameSpec g;
    g.kind = kind;
    g.populations = populations[i];
    g.horizon = horizon;
    g.landmarks = landmarks < 0 ? default_landmarks(kind) : landmarks;
    g.sparse = sparse;
    g.game_id = static_cast<int>(i);
    g.validate();
    if (!seen.insert(g.populations).second)
      set.warnings.push_back("duplicate population entry at game " + std::to_string(i));
    set.games.push_back(std::move(g));
  }
  for (const auto& g : set.games)
    if (g.roles() != set.games.front().roles()) throw ParameterError("all games in a set must share the role count");
  return set;
}

Vec2 action_direction(int action) {
  switch (action) {
    case 0: return {0.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {0.0, -1.0};
    case 3: return {-1.0, 0.0};
    case 4: return {1.0, 0.0};
  }
  throw ContractError("action index " + std::to_string(action) + " outside [0,5)");
}

namespace {

double dist(const Vec2& a, const Vec2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

Vec2 random_position(Rng& rng) { return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}; }

}  // namespace

Env::Env(GameSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind == EnvKind::tabular) throw ContractError("tabular games are not particle worlds");
}

JointObs Env::reset(Rng& rng) {
  const int n = spec_.total_agents();
  state_ = WorldState{};
  state_.pos.resize(static_cast<std::size_t>(n));
  state_.vel.assign(static_cast<std::size_t>(n), Vec2{0.0, 0.0});
  for (auto& p : state_.pos) p = random_position(rng);
  for (int k = 0; k < spec_.landmarks; ++k) {
    state_.landmark_pos.push_back(random_position(rng));
    state_.landmark_size.push_back(spec_.kind == EnvKind::resource ? 0.1 * (k + 1) : spec_.dynamics.landmark_radius);
  }
  state_.touches.assign(static_cast<std::size_t>(n), 0);
  state_.rng = rng.split("world");
  return observe_all();
}

StepResult Env::step(const std::vector<int>& actions) {
  const int n = spec_.total_agents();
  if (static_cast<int>(actions.size()) != n)
    throw ContractError("expected " + std::to_string(n) + " actions, got " + std::to_string(actions.size()));
  if (state_.t >= spec_.horizon)
    throw ContractError("step " + std::to_string(state_.t + 1) + " exceeds horizon " + std::to_string(spec_.horizon));
  const Dynamics& d = spec_.dynamics;
  for (int i = 0; i < n; ++i) {
    const Vec2 dir = action_direction(actions[static_cast<std::size_t>(i)]);
    Vec2& v = state_.vel[static_cast<std::size_t>(i)];
    Vec2& p = state_.pos[static_cast<std::size_t>(i)];
    for (int c = 0; c < 2; ++c) v[c] = v[c] * (1.0 - d.damping) + d.accel * dir[c] * d.dt;
    const double speed = std::hypot(v[0], v[1]);
    if (speed > d.max_speed) {
      v[0] *= d.max_speed / speed;
      v[1] *= d.max_speed / speed;
    }
    for (int c = 0; c < 2; ++c) p[c] = std::clamp(p[c] + v[c] * d.dt, -d.bound, d.bound);
  }
  ++state_.t;
  StepResult out;
  out.rewards = rewards_after_move();
  out.obs = observe_all();
  out.done = state_.t >= spec_.horizon;
  return out;
}

std::vector<double> Env::rewards_after_move() {
  const int n = spec_.total_agents();
  const Dynamics& d = spec_.dynamics;
  const RewardTable& rt = spec_.rewards;
  const double touch = d.agent_radius + d.landmark_radius;
  std::vector<double> r(static_cast<std::size_t>(n), 0.0);
  std::fill(state_.touches.begin(), state_.touches.end(), 0);
  auto& lp = state_.landmark_pos;

  auto nearest_landmark = [&](int i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& l : lp) best = std::min(best, dist(state_.pos[static_cast<std::size_t>(i)], l));
    return std::isfinite(best) ? best : 0.0;
  };

  // Collectors that may touch landmarks; landmarks regenerate after rewards.
  auto collect = [&](int first, int count, double value) {
    std::vector<char> touched(lp.size(), 0);
    for (std::size_t k = 0; k < lp.size(); ++k) {
      for (int i = first; i < first + count; ++i) {
        if (dist(state_.pos[static_cast<std::size_t>(i)], lp[k]) < touch) {
          r[static_cast<std::size_t>(i)] += value;
          ++state_.touches[static_cast<std::size_t>(i)];
          touched[k] = 1;
        }
      }
    }
    return touched;
  };
  auto regenerate = [&](const std::vector<char>& touched) {
    for (std::size_t k = 0; k < lp.size(); ++k)
      if (touched[k]) lp[k] = random_position(state_.rng);
  };

  switch (spec_.kind) {
    case EnvKind::treasure: {
      auto touched = collect(0, n, rt.treasure_touch);
      if (!spec_.sparse)
        for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] -= rt.treasure_shaping * nearest_landmark(i);
      regenerate(touched);
      break;
    }
    case EnvKind::resource: {
      for (std::size_t k = 0; k < lp.size(); ++k) {
        std::vector<int> inside;
        for (int i = 0; i < n; ++i)
          if (dist(state_.pos[static_cast<std::size_t>(i)], lp[k]) < state_.landmark_size[k]) inside.push_back(i);
        for (int i : inside)
          r[static_cast<std::size_t>(i)] += state_.landmark_size[k] / static_cast<double>(inside.size());
      }
      break;
    }
    case EnvKind::pacman: {
      const int pac = spec_.populations[0];
      auto touched = collect(0, pac, rt.food);
      const double catch_dist = 2.0 * d.agent_radius;
      for (int p = 0; p < pac; ++p) {
        for (int g = pac; g < n; ++g) {
          if (dist(state_.pos[static_cast<std::size_t>(p)], state_.pos[static_cast<std::size_t>(g)]) < catch_dist) {
            r[static_cast<std::size_t>(p)] -= rt.caught;
            r[static_cast<std::size_t>(g)] += rt.catch_bonus;
            ++state_.touches[static_cast<std::size_t>(g)];
          }
        }
      }
      if (!spec_.sparse)
        for (int p = 0; p < pac; ++p) r[static_cast<std::size_t>(p)] -= rt.pacman_shaping * nearest_landmark(p);
      regenerate(touched);
      break;
    }
    case EnvKind::tabular: break;
  }
  return r;
}

std::vector<float> Env::observe(int agent) const {
  const int n = spec_.total_agents();
  if (agent < 0 || agent >= n) throw ContractError("observe: agent index out of range");
  const int w = spec_.entity_width();
  const int h = spec_.roles();
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(n) * w);
  const Vec2& me = state_.pos[static_cast<std::size_t>(agent)];
  const Vec2& mv = state_.vel[static_cast<std::size_t>(agent)];

  auto landmarks_from = [&](const Vec2& origin) {
    for (std::size_t k = 0; k < state_.landmark_pos.size(); ++k) {
      out.push_back(static_cast<float>(state_.landmark_pos[k][0] - origin[0]));
      out.push_back(static_cast<float>(state_.landmark_pos[k][1] - origin[1]));
      if (spec_.kind == EnvKind::resource) out.push_back(static_cast<float>(state_.landmark_size[k]));
    }
  };
  auto role_hot = [&](int who) {
    const int role = spec_.role_of(who);
    for (int r = 0; r < h; ++r) out.push_back(r == role ? 1.0f : 0.0f);
  };

  out.push_back(static_cast<float>(me[0]));
  out.push_back(static_cast<float>(me[1]));
  out.push_back(static_cast<float>(mv[0]));
  out.push_back(static_cast<float>(mv[1]));
  role_hot(agent);
  landmarks_from(me);
  for (int j = 0; j < n; ++j) {
    if (j == agent) continue;
    const Vec2& p = state_.pos[static_cast<std::size_t>(j)];
    const Vec2& v = state_.vel[static_cast<std::size_t>(j)];
    out.push_back(static_cast<float>(p[0] - me[0]));
    out.push_back(static_cast<float>(p[1] - me[1]));
    out.push_back(static_cast<float>(v[0] - mv[0]));
    out.push_back(static_cast<float>(v[1] - mv[1]));
    role_hot(j);
    landmarks_from(p);
  }
  return out;
}

JointObs Env::observe_all() const {
  JointObs o;
  o.agents = spec_.total_agents();
  o.width = spec_.entity_width();
  o.data.reserve(static_cast<std::size_t>(o.agents) * o.agent_stride());
  for (int i = 0; i < o.agents; ++i) {
    auto v = observe(i);
    o.data.insert(o.data.end(), v.begin(), v.end());
  }
  return o;
}

}  // namespace mra
