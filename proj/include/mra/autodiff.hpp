#pragma once

// Dense float tensors and a define-by-run reverse-mode tape.
//
// Values are stored as float; reductions (matmul inner products, sums,
// softmax normalizers) accumulate in double. A Tape is rebuilt for every
// forward pass and is confined to one thread.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mra/rng.hpp"

namespace mra::ad {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float v) { return Tensor({}, std::vector<float>{v}); }
  static Tensor vector(std::initializer_list<float> v);
  static Tensor matrix(int rows, int cols, std::initializer_list<float> v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty() && shape_.empty(); }

  // 2-D view helpers; a rank-1 tensor is a single row.
  int rows() const;
  int cols() const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  float at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  float item() const;

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight initialisation.
Tensor init_uniform(Shape shape, int fan_in, Rng& rng);

class Tape;

class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Gradients {
 public:
  // Gradient of the loss w.r.t. `v`; zeros if `v` did not influence it.
  const Tensor& operator[](const Var& v) const;

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
  mutable std::vector<Tensor> zeros_;
};

class Tape {
 public:
  // Accumulates into `grads[input]` given the node's output gradient.
  using BackwardFn =
      std::function<void(const Tape& tape, const Tensor& out_grad, std::vector<Tensor>& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Gradient of a scalar `loss` w.r.t. every node. Does not mutate the tape,
  // so repeated calls return identical results.
  Gradients backward(const Var& loss) const;

  Var record(Tensor value, std::vector<int> inputs, BackwardFn fn);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- operations ------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float c);
Var add_scalar(Var a, float c);
Var neg(Var a);
// a[m,n] + bias[n] (bias broadcast over rows)
Var add_row(Var a, Var bias);
// a[m,n] * c[m,1] (column broadcast over columns)
Var mul_col(Var a, Var c);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softmax(Var x, int axis);
Var log_softmax(Var x, int axis);
Var sum(Var a);
Var mean(Var a);
// Sum over columns of a 2-D tensor: [m,n] -> [m,1].
Var sum_cols(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, int start, int len);
Var slice_rows(Var a, int start, int len);
// Repeat each row `times` times consecutively: [s,n] -> [s*times,n].
Var repeat_rows(Var a, int times);
// Row-wise outer product flattened: [s,p] x [s,q] -> [s,p*q].
Var outer_rows(Var a, Var b);
// q[s,d], k[s*m,d] -> logits[s,m] with logits[i,j] = q_i . k_{i*m+j}
Var group_dot(Var q, Var k, int m);
// w[s,m], v[s*m,d] -> out[s,d] with out_i = sum_j w[i,j] v_{i*m+j}
Var group_weighted_sum(Var w, Var v, int m);
Var reshape(Var a, Shape shape);
Var detach(Var a);

// Gumbel-softmax sample over the last axis of logits ([k] or [s,k]).
// hard=true returns a one-hot whose gradient is that of the soft sample.
Var gumbel_softmax(Var logits, float temperature, bool hard, Rng& rng);

}  // namespace mra::ad
