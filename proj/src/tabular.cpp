#include "mra/tabular.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mra/errors.hpp"

namespace mra {

int TabularMG::joint_count() const {
  int j = 1;
  for (int a : actions) j *= a;
  return j;
}

std::vector<int> TabularMG::decode(int joint) const {
  std::vector<int> out(actions.size());
  for (std::size_t i = actions.size(); i-- > 0;) {
    out[i] = joint % actions[i];
    joint /= actions[i];
  }
  return out;
}

int TabularMG::encode(const std::vector<int>& joint) const {
  int j = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) j = j * actions[i] + joint[i];
  return j;
}

void TabularMG::validate() const {
  if (states < 1) throw ContractError("tabular game needs at least one state");
  if (actions.empty()) throw ContractError("tabular game needs at least one agent");
  for (int a : actions)
    if (a < 1) throw ContractError("every agent needs at least one action");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("discount must lie in [0,1)");
  if (roles.size() != actions.size()) throw ContractError("role list length differs from agent count");
  const std::size_t J = static_cast<std::size_t>(joint_count());
  if (transitions.size() != static_cast<std::size_t>(states) * J * states)
    throw ContractError("transition table has " + std::to_string(transitions.size()) + " entries");
  if (rewards.size() != actions.size() * states * J)
    throw ContractError("reward table has " + std::to_string(rewards.size()) + " entries");
  for (int s = 0; s < states; ++s) {
    for (int j = 0; j < joint_count(); ++j) {
      double total = 0.0;
      for (int n = 0; n < states; ++n) {
        const double v = p(s, j, n);
        if (v < 0.0) throw ContractError("negative transition probability");
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw ContractError("transition row (s=" + std::to_string(s) + ", joint=" + std::to_string(j) +
                            ") sums to " + std::to_string(total));
    }
  }
}

bool TabularMG::rewards_in_unit_interval() const {
  for (double v : rewards)
    if (v < 0.0 || v > 1.0) return false;
  return true;
}

namespace {

struct Tokens {
  std::vector<std::pair<std::string, int>> items;  // token, line
  std::size_t pos = 0;

  bool done() const { return pos >= items.size(); }
  const std::string& peek() const { return items[pos].first; }
  int line() const { return done() ? (items.empty() ? 0 : items.back().second) : items[pos].second; }
  std::string next(const char* what) {
    if (done()) throw ConfigError(std::string("unexpected end of input, expected ") + what, line());
    return items[pos++].first;
  }
  double number(const char* what) {
    const int ln = line();
    std::string t = next(what);
    try {
      std::size_t used = 0;
      double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("expected a number for ") + what + ", got '" + t + "'", ln);
    }
  }
  int integer(const char* what) {
    const int ln = line();
    double v = number(what);
    if (v != std::floor(v)) throw ConfigError(std::string("expected an integer for ") + what, ln);
    return static_cast<int>(v);
  }
};

}  // namespace

TabularMG parse_tabular(const std::string& text) {
  Tokens tk;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string t;
    while (ls >> t) tk.items.emplace_back(t, line);
  }
  TabularMG mg;
  bool have_states = false, have_agents = false, have_actions = false, have_t = false, have_r = false;
  int agents = 0;
  while (!tk.done()) {
    const int ln = tk.line();
    const std::string key = tk.next("keyword");
    if (key == "states") {
      mg.states = tk.integer("states");
      have_states = true;
    } else if (key == "agents") {
      agents = tk.integer("agents");
      have_agents = true;
    } else if (key == "actions") {
      if (!have_agents) throw ConfigError("'actions' must follow 'agents'", ln);
      mg.actions.clear();
      for (int i = 0; i < agents; ++i) mg.actions.push_back(tk.integer("actions"));
      have_actions = true;
    } else if (key == "roles") {
      if (!have_agents) throw ConfigError("'roles' must follow 'agents'", ln);
      mg.roles.clear();
      for (int i = 0; i < agents; ++i) mg.roles.push_back(tk.integer("roles"));
    } else if (key == "gamma") {
      mg.gamma = tk.number("gamma");
    } else if (key == "transitions") {
      if (!have_states || !have_actions) throw ConfigError("'transitions' needs states and actions first", ln);
      const std::size_t count = static_cast<std::size_t>(mg.states) * mg.joint_count() * mg.states;
      mg.transitions.clear();
      for (std::size_t i = 0; i < count; ++i) mg.transitions.push_back(tk.number("transition entry"));
      have_t = true;
    } else if (key == "rewards") {
      if (!have_states || !have_actions) throw ConfigError("'rewards' needs states and actions first", ln);
      const std::size_t count = static_cast<std::size_t>(agents) * mg.states * mg.joint_count();
      mg.rewards.clear();
      for (std::size_t i = 0; i < count; ++i) mg.rewards.push_back(tk.number("reward entry"));
      have_r = true;
    } else {
      throw ConfigError("unknown keyword '" + key + "'", ln);
    }
  }
  if (!have_states || !have_agents || !have_actions || !have_t || !have_r)
    throw ConfigError("tabular spec needs states, agents, actions, transitions and rewards");
  if (mg.roles.empty())
    for (int i = 0; i < agents; ++i) mg.roles.push_back(i);
  mg.validate();
  return mg;
}

TabularMG load_tabular(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open tabular game " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_tabular(ss.str());
}

std::string to_text(const TabularMG& mg) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "states " << mg.states << "\nagents " << mg.agents() << "\nactions";
  for (int a : mg.actions) os << ' ' << a;
  os << "\nroles";
  for (int r : mg.roles) os << ' ' << r;
  os << "\ngamma " << mg.gamma << "\ntransitions\n";
  const int J = mg.joint_count();
  for (int s = 0; s < mg.states; ++s)
    for (int j = 0; j < J; ++j) {
      for (int n = 0; n < mg.states; ++n) os << (n ? " " : "") << mg.p(s, j, n);
      os << '\n';
    }
  os << "rewards\n";
  for (int i = 0; i < mg.agents(); ++i)
    for (int s = 0; s < mg.states; ++s) {
      for (int j = 0; j < J; ++j) os << (j ? " " : "") << mg.r(i, s, j);
      os << '\n';
    }
  return os.str();
}

TabularMG matching_pennies() {
  TabularMG mg;
  mg.states = 1;
  mg.actions = {2, 2};
  mg.roles = {0, 1};
  mg.gamma = 0.0;
  mg.transitions.assign(4, 1.0);
  // joint index = a0 * 2 + a1; agent 0 is the matcher
  mg.rewards = {1, -1, -1, 1, -1, 1, 1, -1};
  return mg;
}

TabularMG random_tabular(int states, const std::vector<int>& actions, double gamma, Rng& rng) {
  TabularMG mg;
  mg.states = states;
  mg.actions = actions;
  for (std::size_t i = 0; i < actions.size(); ++i) mg.roles.push_back(static_cast<int>(i));
  mg.gamma = gamma;
  const int J = mg.joint_count();
  mg.transitions.resize(static_cast<std::size_t>(states) * J * states);
  for (int s = 0; s < states; ++s)
    for (int j = 0; j < J; ++j) {
      double total = 0.0;
      double* row = &mg.transitions[(static_cast<std::size_t>(s) * J + j) * states];
      for (int n = 0; n < states; ++n) total += row[n] = -std::log(rng.open_uniform());
      for (int n = 0; n < states; ++n) row[n] /= total;
    }
  mg.rewards.resize(actions.size() * states * J);
  for (double& r : mg.rewards) r = rng.uniform();
  return mg;
}

}  // namespace mra
