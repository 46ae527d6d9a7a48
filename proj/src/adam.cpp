#include "mra/adam.hpp"

#include <cmath>

#include "mra/errors.hpp"

namespace mra {

void adam_step(std::span<ad::Tensor* const> params, std::span<const ad::Tensor> grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const ad::Tensor* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size()) throw DimensionError("adam_step: state tracks a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || state.first_moment[i].shape() != params[i]->shape())
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(i) + " " +
                           ad::shape_str(params[i]->shape()) + " vs gradient " + ad::shape_str(grads[i].shape()));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + state.eps);
      p[j] = static_cast<float>(p[j] - update);
    }
  }
}

void adam_step(ParamGroup& params, std::span<const ad::Tensor> grads, AdamState& state, double lr) {
  std::vector<ad::Tensor*> ptrs;
  ptrs.reserve(params.size());
  for (auto& p : params.entries()) ptrs.push_back(&p.value);
  adam_step(std::span<ad::Tensor* const>(ptrs), grads, state, lr);
}

}  // namespace mra
