#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mra/autodiff.hpp"
#include "mra/params.hpp"

namespace mra {

struct AdamState {
  std::int64_t step = 0;
  std::vector<ad::Tensor> first_moment;
  std::vector<ad::Tensor> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void reset() {
    step = 0;
    first_moment.clear();
    second_moment.clear();
  }
};

// Bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
// Moments are allocated on first use; shapes must match afterwards.
void adam_step(std::span<ad::Tensor* const> params, std::span<const ad::Tensor> grads, AdamState& state, double lr);
void adam_step(ParamGroup& params, std::span<const ad::Tensor> grads, AdamState& state, double lr);

}  // namespace mra
