#pragma once

// Independent oracles shared by the unit and acceptance suites. None of these
// call into the code they check except to read inputs.

#include <cmath>
#include <functional>
#include <vector>

#include "mra/autodiff.hpp"
#include "mra/nash.hpp"
#include "mra/tabular.hpp"

namespace mra::testing {

// Central differences of f at every entry of every input, compared with the
// tape gradient. Returns ||analytic - numeric|| / (||analytic|| + ||numeric||)
// over all entries jointly (0 when both vanish). Values are float, so a
// norm-wise ratio keeps rounding in near-zero entries from dominating.
inline double gradcheck(const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>& f,
                        std::vector<ad::Tensor> inputs, double h = 1e-2) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
  ad::Var out = f(tape, vars);
  ad::Gradients g = tape.backward(out);
  auto eval = [&](const std::vector<ad::Tensor>& in) {
    ad::Tape t2;
    std::vector<ad::Var> v2;
    for (const auto& t : in) v2.push_back(t2.leaf(t, false));
    return static_cast<double>(f(t2, v2).value().item());
  };
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t j = 0; j < inputs[k].size(); ++j) {
      auto plus = inputs, minus = inputs;
      plus[k][j] += static_cast<float>(h);
      minus[k][j] -= static_cast<float>(h);
      const double step = static_cast<double>(plus[k][j]) - minus[k][j];
      const double num = (eval(plus) - eval(minus)) / step;
      const double ana = g[vars[k]][j];
      diff += (ana - num) * (ana - num);
      na += ana * ana;
      nn += num * num;
    }
  const double denom = std::sqrt(na) + std::sqrt(nn);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

// Value of `agent` by summing the discounted series until the tail is below 1e-14.
inline std::vector<double> series_value(const TabularMG& mg, const JointPolicy& pi, int agent) {
  const int s_n = mg.states;
  std::vector<std::vector<double>> p(s_n, std::vector<double>(s_n, 0.0));
  std::vector<double> r(s_n, 0.0);
  for (int s = 0; s < s_n; ++s)
    for (int j = 0; j < mg.joint_count(); ++j) {
      const auto a = mg.decode(j);
      double w = 1.0;
      for (int i = 0; i < mg.agents(); ++i) w *= pi[i][s][a[i]];
      r[s] += w * mg.r(agent, s, j);
      for (int t = 0; t < s_n; ++t) p[s][t] += w * mg.p(s, j, t);
    }
  std::vector<double> v(s_n, 0.0), term = r;
  double disc = 1.0;
  for (int step = 0; step < 100000 && disc > 1e-16; ++step) {
    for (int s = 0; s < s_n; ++s) v[s] += disc * term[s];
    std::vector<double> next(s_n, 0.0);
    for (int s = 0; s < s_n; ++s)
      for (int t = 0; t < s_n; ++t) next[s] += p[s][t] * term[t];
    term = next;
    disc *= mg.gamma;
  }
  return v;
}

// NashConv by trying every deterministic deviation of every agent.
inline double brute_force_nashconv(const TabularMG& mg, const JointPolicy& pi) {
  double total = 0.0;
  for (int i = 0; i < mg.agents(); ++i) {
    const auto base = series_value(mg, pi, i);
    std::vector<double> best = base;
    std::vector<int> choice(mg.states, 0);
    for (;;) {
      JointPolicy dev = pi;
      for (int s = 0; s < mg.states; ++s) {
        dev[i][s].assign(mg.actions[i], 0.0);
        dev[i][s][choice[s]] = 1.0;
      }
      const auto v = series_value(mg, dev, i);
      for (int s = 0; s < mg.states; ++s) best[s] = std::max(best[s], v[s]);
      int s = 0;
      while (s < mg.states && ++choice[s] == mg.actions[i]) choice[s++] = 0;
      if (s == mg.states) break;
    }
    double gain = 0.0;
    for (int s = 0; s < mg.states; ++s) gain = std::max(gain, best[s] - base[s]);
    total += gain;
  }
  return total;
}

}  // namespace mra::testing
