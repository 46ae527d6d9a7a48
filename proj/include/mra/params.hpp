#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "mra/autodiff.hpp"
#include "mra/errors.hpp"

namespace mra {

struct NamedTensor {
  std::string name;
  ad::Tensor value;
};

// Ordered, named parameter tensors. Order is the serialization order.
class ParamGroup {
 public:
  int add(std::string name, ad::Tensor value) {
    entries_.push_back({std::move(name), std::move(value)});
    return static_cast<int>(entries_.size()) - 1;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::vector<NamedTensor>& entries() { return entries_; }
  const std::vector<NamedTensor>& entries() const { return entries_; }
  ad::Tensor& operator[](int i) { return entries_.at(static_cast<std::size_t>(i)).value; }
  const ad::Tensor& operator[](int i) const { return entries_.at(static_cast<std::size_t>(i)).value; }

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  // Records every tensor as a leaf; returned vars are index-aligned.
  std::vector<ad::Var> bind(ad::Tape& tape, bool requires_grad) const {
    std::vector<ad::Var> vars;
    vars.reserve(entries_.size());
    for (const auto& e : entries_) vars.push_back(tape.leaf(e.value, requires_grad));
    return vars;
  }

  static std::vector<ad::Tensor> gradients(const ad::Gradients& grads, const std::vector<ad::Var>& vars) {
    std::vector<ad::Tensor> out;
    out.reserve(vars.size());
    for (const auto& v : vars) out.push_back(grads[v]);
    return out;
  }

  // Elementwise this = (1 - tau) * this + tau * other.
  void polyak_toward(const ParamGroup& other, double tau) {
    check_congruent(other);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto dst = entries_[i].value.data();
      auto src = other.entries_[i].value.data();
      if (tau == 1.0) {
        std::copy(src.begin(), src.end(), dst.begin());
        continue;
      }
      for (std::size_t j = 0; j < dst.size(); ++j)
        dst[j] = static_cast<float>((1.0 - tau) * dst[j] + tau * src[j]);
    }
  }

  void check_congruent(const ParamGroup& other) const {
    if (other.entries_.size() != entries_.size()) throw DimensionError("parameter groups differ in tensor count");
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (other.entries_[i].value.shape() != entries_[i].value.shape())
        throw DimensionError("parameter '" + entries_[i].name + "' has mismatched shape");
  }

  friend bool operator==(const ParamGroup& a, const ParamGroup& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i)
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    return true;
  }

 private:
  std::vector<NamedTensor> entries_;
};

}  // namespace mra
