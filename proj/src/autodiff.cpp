#include "mra/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mra/errors.hpp"

namespace mra::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
}

Tensor Tensor::vector(std::initializer_list<float> v) {
  return Tensor({static_cast<int>(v.size())}, std::vector<float>(v));
}

Tensor Tensor::matrix(int rows, int cols, std::initializer_list<float> v) {
  return Tensor({rows, cols}, std::vector<float>(v));
}

int Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() == 1) return 1;
  if (rank() == 0) return 1;
  throw DimensionError("rows() on tensor of rank " + std::to_string(rank()));
}

int Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  if (rank() == 0) return 1;
  throw DimensionError("cols() on tensor of rank " + std::to_string(rank()));
}

float Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

Tensor init_uniform(Shape shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (float& x : t.data()) x = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("value() on an unbound Var");
  return tape_->value(id_);
}

const Tensor& Gradients::operator[](const Var& v) const {
  auto i = static_cast<std::size_t>(v.id());
  if (i >= grads_.size()) throw ContractError("gradient requested for a Var of another tape");
  if (grads_[i].size() > 0) return grads_[i];
  if (zeros_[i].shape() != shapes_[i] || zeros_[i].size() != shape_size(shapes_[i])) zeros_[i] = Tensor(shapes_[i]);
  return zeros_[i];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Tensor value, std::vector<int> inputs, BackwardFn fn) {
  bool rg = false;
  for (int i : inputs) rg = rg || nodes_[static_cast<std::size_t>(i)].requires_grad;
  nodes_.push_back(Node{std::move(value), std::move(inputs), rg ? std::move(fn) : nullptr, rg});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Gradients Tape::backward(const Var& loss) const {
  if (loss.tape() != this) throw ContractError("loss does not belong to this tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) throw ContractError("backward requires a scalar loss, got shape " + shape_str(lv.shape()));
  Gradients out;
  out.grads_.resize(nodes_.size());
  out.zeros_.resize(nodes_.size());
  out.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) out.shapes_.push_back(n.value.shape());
  auto li = static_cast<std::size_t>(loss.id());
  out.grads_[li] = Tensor(lv.shape(), 1.0f);
  for (std::size_t i = li + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.backward || out.grads_[i].size() == 0) continue;
    n.backward(*this, out.grads_[i], out.grads_);
  }
  return out;
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

void same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
}

Tensor& grad_slot(const Tape& tape, std::vector<Tensor>& grads, int id) {
  auto& g = grads[static_cast<std::size_t>(id)];
  if (g.size() == 0) g = Tensor(tape.value(id).shape());
  return g;
}

void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

template <class F>
Var unary(Var a, F&& f, std::function<float(float x, float y)> dfdx) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  int ia = a.id();
  return t.record(std::move(y), {ia}, [ia, dfdx](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& x = tp.value(ia);
    Tensor& dx = grad_slot(tp, grads, ia);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += g[i] * dfdx(x[i], 0.0f);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_2d(A, "matmul");
  require_2d(B, "matmul");
  const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k)
    throw DimensionError("matmul inner dimensions disagree: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  Tensor C({m, n});
  std::vector<double> acc(static_cast<std::size_t>(n));
  const float* pa = A.data().data();
  const float* pb = B.data().data();
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int kk = 0; kk < k; ++kk) {
      const double aik = pa[static_cast<std::size_t>(i) * k + kk];
      if (aik == 0.0) continue;
      const float* brow = pb + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) acc[j] += aik * brow[j];
    }
    float* crow = C.data().data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
  int ia = a.id(), ib = b.id();
  return t.record(std::move(C), {ia, ib}, [ia, ib, m, k, n](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    const float* pa = tp.value(ia).data().data();
    const float* pb = tp.value(ib).data().data();
    const float* pg = g.data().data();
    if (tp.requires_grad(ia)) {
      // dA = G . B^T
      Tensor& dA = grad_slot(tp, grads, ia);
      for (int i = 0; i < m; ++i) {
        const float* grow = pg + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
          const float* brow = pb + static_cast<std::size_t>(kk) * n;
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += static_cast<double>(grow[j]) * brow[j];
          dA[static_cast<std::size_t>(i) * k + kk] += static_cast<float>(s);
        }
      }
    }
    if (tp.requires_grad(ib)) {
      // dB = A^T . G
      std::vector<double> acc(static_cast<std::size_t>(k) * n, 0.0);
      for (int i = 0; i < m; ++i) {
        const float* grow = pg + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
          const double aik = pa[static_cast<std::size_t>(i) * k + kk];
          if (aik == 0.0) continue;
          double* arow = acc.data() + static_cast<std::size_t>(kk) * n;
          for (int j = 0; j < n; ++j) arow[j] += aik * grow[j];
        }
      }
      Tensor& dB = grad_slot(tp, grads, ib);
      for (std::size_t x = 0; x < acc.size(); ++x) dB[x] += static_cast<float>(acc[x]);
    }
  });
}

namespace {
void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class Fwd, class Da, class Db>
Var binary(Var a, Var b, const char* op, Fwd fwd, Da da, Db db) {
  same_tape(a, b);
  same_shape(a, b, op);
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor z(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = fwd(x[i], y[i]);
  int ia = a.id(), ib = b.id();
  return t.record(std::move(z), {ia, ib}, [ia, ib, da, db](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor& dx = grad_slot(tp, grads, ia);
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] += g[i] * da(x[i], y[i]);
    }
    if (tp.requires_grad(ib)) {
      Tensor& dy = grad_slot(tp, grads, ib);
      for (std::size_t i = 0; i < x.size(); ++i) dy[i] += g[i] * db(x[i], y[i]);
    }
  });
}
}  // namespace

Var add(Var a, Var b) {
  return binary(a, b, "add", [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
                [](float, float) { return 1.0f; });
}

Var sub(Var a, Var b) {
  return binary(a, b, "sub", [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
                [](float, float) { return -1.0f; });
}

Var mul(Var a, Var b) {
  return binary(a, b, "mul", [](float x, float y) { return x * y; }, [](float, float y) { return y; },
                [](float x, float) { return x; });
}

Var scale(Var a, float c) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  for (float& v : y.data()) v *= c;
  int ia = a.id();
  return t.record(std::move(y), {ia}, [ia, c](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& dx = grad_slot(tp, grads, ia);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
  });
}

Var add_scalar(Var a, float c) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  for (float& v : y.data()) v += c;
  int ia = a.id();
  return t.record(std::move(y), {ia}, [ia](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& dx = grad_slot(tp, grads, ia);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Var neg(Var a) { return scale(a, -1.0f); }

Var add_row(Var a, Var bias) {
  same_tape(a, bias);
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  require_2d(x, "add_row");
  const int m = x.dim(0), n = x.dim(1);
  if (static_cast<int>(bias.value().size()) != n)
    throw DimensionError("add_row bias of shape " + shape_str(bias.shape()) + " for input " + shape_str(x.shape()));
  Tensor y = x;
  const Tensor& bv = bias.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y[static_cast<std::size_t>(i) * n + j] += bv[static_cast<std::size_t>(j)];
  int ia = a.id(), ib = bias.id();
  return t.record(std::move(y), {ia, ib}, [ia, ib, m, n](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    if (tp.requires_grad(ia)) {
      Tensor& dx = grad_slot(tp, grads, ia);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) acc[j] += g[static_cast<std::size_t>(i) * n + j];
      Tensor& db = grad_slot(tp, grads, ib);
      for (int j = 0; j < n; ++j) db[static_cast<std::size_t>(j)] += static_cast<float>(acc[j]);
    }
  });
}

Var mul_col(Var a, Var c) {
  same_tape(a, c);
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  require_2d(x, "mul_col");
  const int m = x.dim(0), n = x.dim(1);
  if (static_cast<int>(c.value().size()) != m)
    throw DimensionError("mul_col column of shape " + shape_str(c.shape()) + " for input " + shape_str(x.shape()));
  Tensor y = x;
  const Tensor& cv = c.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y[static_cast<std::size_t>(i) * n + j] *= cv[static_cast<std::size_t>(i)];
  int ia = a.id(), ic = c.id();
  return t.record(std::move(y), {ia, ic}, [ia, ic, m, n](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& x = tp.value(ia);
    const Tensor& cv = tp.value(ic);
    if (tp.requires_grad(ia)) {
      Tensor& dx = grad_slot(tp, grads, ia);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          auto p = static_cast<std::size_t>(i) * n + j;
          dx[p] += g[p] * cv[static_cast<std::size_t>(i)];
        }
    }
    if (tp.requires_grad(ic)) {
      Tensor& dc = grad_slot(tp, grads, ic);
      for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
          auto p = static_cast<std::size_t>(i) * n + j;
          s += static_cast<double>(g[p]) * x[p];
        }
        dc[static_cast<std::size_t>(i)] += static_cast<float>(s);
      }
    }
  });
}

Var relu(Var a) {
  return unary(a, [](float x) { return x > 0.0f ? x : 0.0f; }, [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Var tanh(Var a) {
  return unary(a, [](float x) { return std::tanh(x); },
               [](float x, float) {
                 float y = std::tanh(x);
                 return 1.0f - y * y;
               });
}

Var exp(Var a) {
  return unary(a, [](float x) { return std::exp(x); }, [](float x, float) { return std::exp(x); });
}

Var log(Var a) {
  return unary(a, [](float x) { return std::log(x); }, [](float x, float) { return 1.0f / x; });
}

Var square(Var a) {
  return unary(a, [](float x) { return x * x; }, [](float x, float) { return 2.0f * x; });
}

namespace {
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape));
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(i)]);
  s.len = static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= static_cast<std::size_t>(shape[i]);
  if (s.len == 0) throw DimensionError(std::string(op) + ": empty axis");
  return s;
}

Tensor softmax_values(const Tensor& x, const AxisSplit& s, bool log_space) {
  Tensor y(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      auto idx = [&](std::size_t j) { return (o * s.len + j) * s.inner + in; };
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, x[idx(j)]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) z += std::exp(static_cast<double>(x[idx(j)]) - mx);
      if (log_space) {
        double lz = std::log(z) + mx;
        for (std::size_t j = 0; j < s.len; ++j) y[idx(j)] = static_cast<float>(x[idx(j)] - lz);
      } else {
        for (std::size_t j = 0; j < s.len; ++j)
          y[idx(j)] = static_cast<float>(std::exp(static_cast<double>(x[idx(j)]) - mx) / z);
      }
    }
  return y;
}
}  // namespace

Var softmax(Var x, int axis) {
  Tape& t = tape_of(x);
  AxisSplit s = split_axis(x.shape(), axis, "softmax");
  Tensor y = softmax_values(x.value(), s, false);
  int ix = x.id();
  int iy = static_cast<int>(t.size());
  return t.record(std::move(y), {ix}, [ix, iy, s](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& y = tp.value(iy);
    Tensor& dx = grad_slot(tp, grads, ix);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        auto idx = [&](std::size_t j) { return (o * s.len + j) * s.inner + in; };
        double dot = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) dot += static_cast<double>(g[idx(j)]) * y[idx(j)];
        for (std::size_t j = 0; j < s.len; ++j) dx[idx(j)] += static_cast<float>(y[idx(j)] * (g[idx(j)] - dot));
      }
  });
}

Var log_softmax(Var x, int axis) {
  Tape& t = tape_of(x);
  AxisSplit s = split_axis(x.shape(), axis, "log_softmax");
  Tensor y = softmax_values(x.value(), s, true);
  int ix = x.id();
  int iy = static_cast<int>(t.size());
  return t.record(std::move(y), {ix}, [ix, iy, s](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& y = tp.value(iy);
    Tensor& dx = grad_slot(tp, grads, ix);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        auto idx = [&](std::size_t j) { return (o * s.len + j) * s.inner + in; };
        double gs = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) gs += g[idx(j)];
        for (std::size_t j = 0; j < s.len; ++j)
          dx[idx(j)] += static_cast<float>(g[idx(j)] - std::exp(static_cast<double>(y[idx(j)])) * gs);
      }
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (float v : a.value().data()) s += v;
  int ia = a.id();
  return t.record(Tensor::scalar(static_cast<float>(s)), {ia},
                  [ia](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    Tensor& dx = grad_slot(tp, grads, ia);
                    const float gv = g[0];
                    for (float& v : dx.data()) v += gv;
                  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0f / static_cast<float>(n));
}

Var sum_cols(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  require_2d(x, "sum_cols");
  const int m = x.dim(0), n = x.dim(1);
  Tensor y({m, 1});
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += x[static_cast<std::size_t>(i) * n + j];
    y[static_cast<std::size_t>(i)] = static_cast<float>(s);
  }
  int ia = a.id();
  return t.record(std::move(y), {ia}, [ia, m, n](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& dx = grad_slot(tp, grads, ia);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) dx[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(i)];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Tape& t = tape_of(parts[0]);
  const int m = parts[0].value().rows();
  int total = 0;
  std::vector<int> widths, ids;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.value().rank() != 2 || p.value().rows() != m)
      throw DimensionError("concat_cols row mismatch: " + shape_str(p.shape()));
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += p.value().cols();
  }
  Tensor y({m, total});
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    for (int i = 0; i < m; ++i)
      std::copy_n(x.data().data() + static_cast<std::size_t>(i) * widths[k], widths[k],
                  y.data().data() + static_cast<std::size_t>(i) * total + off);
    off += widths[k];
  }
  std::vector<int> inputs = ids;
  return t.record(std::move(y), std::move(inputs),
                  [ids, widths, m, total](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
                    int off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (tp.requires_grad(ids[k])) {
                        Tensor& dx = grad_slot(tp, grads, ids[k]);
                        for (int i = 0; i < m; ++i)
                          for (int j = 0; j < widths[k]; ++j)
                            dx[static_cast<std::size_t>(i) * widths[k] + j] += g[static_cast<std::size_t>(i) * total + off + j];
                      }
                      off += widths[k];
                    }
                  });
}

Var slice_cols(Var a, int start, int len) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  require_2d(x, "slice_cols");
  const int m = x.dim(0), n = x.dim(1);
  if (start < 0 || len < 0 || start + len > n) throw DimensionError("slice_cols out of range");
  Tensor y({m, len});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j) y[static_cast<std::size_t>(i) * len + j] = x[static_cast<std::size_t>(i) * n + start + j];
  int ia = a.id();
  return t.record(std::move(y), {ia}, [ia, m, n, start, len](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& dx = grad_slot(tp, grads, ia);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < len; ++j) dx[static_cast<std::size_t>(i) * n + start + j] += g[static_cast<std::size_t>(i) * len + j];
  });
}

Var slice_rows(Var a, int start, int len) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  require_2d(x, "slice_rows");
  const int m = x.dim(0), n = x.dim(1);
  if (start < 0 || len < 0 || start + len > m) throw DimensionError("slice_rows out of range");
  Tensor y({len, n});
  std::copy_n(x.data().data() + static_cast<std::size_t>(start) * n, static_cast<std::size_t>(len) * n, y.data().data());
  int ia = a.id();
  return t.record(std::move(y), {ia}, [ia, n, start, len](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& dx = grad_slot(tp, grads, ia);
    for (std::size_t p = 0; p < static_cast<std::size_t>(len) * n; ++p) dx[static_cast<std::size_t>(start) * n + p] += g[p];
  });
}

Var repeat_rows(Var a, int times) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  require_2d(x, "repeat_rows");
  const int m = x.dim(0), n = x.dim(1);
  Tensor y({m * times, n});
  for (int i = 0; i < m; ++i)
    for (int r = 0; r < times; ++r)
      std::copy_n(x.data().data() + static_cast<std::size_t>(i) * n, n,
                  y.data().data() + (static_cast<std::size_t>(i) * times + r) * n);
  int ia = a.id();
  return t.record(std::move(y), {ia}, [ia, m, n, times](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& dx = grad_slot(tp, grads, ia);
    for (int i = 0; i < m; ++i)
      for (int r = 0; r < times; ++r)
        for (int j = 0; j < n; ++j)
          dx[static_cast<std::size_t>(i) * n + j] += g[(static_cast<std::size_t>(i) * times + r) * n + j];
  });
}

Var outer_rows(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  require_2d(x, "outer_rows");
  require_2d(z, "outer_rows");
  if (x.dim(0) != z.dim(0)) throw DimensionError("outer_rows row mismatch");
  const int s = x.dim(0), p = x.dim(1), q = z.dim(1);
  Tensor y({s, p * q});
  for (int i = 0; i < s; ++i)
    for (int u = 0; u < p; ++u)
      for (int v = 0; v < q; ++v)
        y[static_cast<std::size_t>(i) * p * q + static_cast<std::size_t>(u) * q + v] =
            x[static_cast<std::size_t>(i) * p + u] * z[static_cast<std::size_t>(i) * q + v];
  int ia = a.id(), ib = b.id();
  return t.record(std::move(y), {ia, ib}, [ia, ib, s, p, q](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& x = tp.value(ia);
    const Tensor& z = tp.value(ib);
    auto gi = [&](int i, int u, int v) { return g[static_cast<std::size_t>(i) * p * q + static_cast<std::size_t>(u) * q + v]; };
    if (tp.requires_grad(ia)) {
      Tensor& dx = grad_slot(tp, grads, ia);
      for (int i = 0; i < s; ++i)
        for (int u = 0; u < p; ++u) {
          double acc = 0.0;
          for (int v = 0; v < q; ++v) acc += static_cast<double>(gi(i, u, v)) * z[static_cast<std::size_t>(i) * q + v];
          dx[static_cast<std::size_t>(i) * p + u] += static_cast<float>(acc);
        }
    }
    if (tp.requires_grad(ib)) {
      Tensor& dz = grad_slot(tp, grads, ib);
      for (int i = 0; i < s; ++i)
        for (int v = 0; v < q; ++v) {
          double acc = 0.0;
          for (int u = 0; u < p; ++u) acc += static_cast<double>(gi(i, u, v)) * x[static_cast<std::size_t>(i) * p + u];
          dz[static_cast<std::size_t>(i) * q + v] += static_cast<float>(acc);
        }
    }
  });
}

Var group_dot(Var q, Var k, int m) {
  same_tape(q, k);
  Tape& t = tape_of(q);
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  require_2d(Q, "group_dot");
  require_2d(K, "group_dot");
  const int s = Q.dim(0), d = Q.dim(1);
  if (m <= 0 || K.dim(0) != s * m || K.dim(1) != d)
    throw DimensionError("group_dot: keys " + shape_str(K.shape()) + " incompatible with queries " + shape_str(Q.shape()) +
                         " and group size " + std::to_string(m));
  Tensor y({s, m});
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < m; ++j) {
      const float* qr = Q.data().data() + static_cast<std::size_t>(i) * d;
      const float* kr = K.data().data() + (static_cast<std::size_t>(i) * m + j) * d;
      double acc = 0.0;
      for (int c = 0; c < d; ++c) acc += static_cast<double>(qr[c]) * kr[c];
      y[static_cast<std::size_t>(i) * m + j] = static_cast<float>(acc);
    }
  int iq = q.id(), ik = k.id();
  return t.record(std::move(y), {iq, ik}, [iq, ik, s, m, d](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& Q = tp.value(iq);
    const Tensor& K = tp.value(ik);
    if (tp.requires_grad(iq)) {
      Tensor& dq = grad_slot(tp, grads, iq);
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < m; ++j) {
          const float gij = g[static_cast<std::size_t>(i) * m + j];
          const float* kr = K.data().data() + (static_cast<std::size_t>(i) * m + j) * d;
          float* dqr = dq.data().data() + static_cast<std::size_t>(i) * d;
          for (int c = 0; c < d; ++c) dqr[c] += gij * kr[c];
        }
    }
    if (tp.requires_grad(ik)) {
      Tensor& dk = grad_slot(tp, grads, ik);
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < m; ++j) {
          const float gij = g[static_cast<std::size_t>(i) * m + j];
          const float* qr = Q.data().data() + static_cast<std::size_t>(i) * d;
          float* dkr = dk.data().data() + (static_cast<std::size_t>(i) * m + j) * d;
          for (int c = 0; c < d; ++c) dkr[c] += gij * qr[c];
        }
    }
  });
}

Var group_weighted_sum(Var w, Var v, int m) {
  same_tape(w, v);
  Tape& t = tape_of(w);
  const Tensor& W = w.value();
  const Tensor& V = v.value();
  require_2d(W, "group_weighted_sum");
  require_2d(V, "group_weighted_sum");
  const int s = W.dim(0), d = V.dim(1);
  if (m <= 0 || W.dim(1) != m || V.dim(0) != s * m)
    throw DimensionError("group_weighted_sum: weights " + shape_str(W.shape()) + " incompatible with values " +
                         shape_str(V.shape()));
  Tensor y({s, d});
  std::vector<double> acc(static_cast<std::size_t>(d));
  for (int i = 0; i < s; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int j = 0; j < m; ++j) {
      const double wij = W[static_cast<std::size_t>(i) * m + j];
      const float* vr = V.data().data() + (static_cast<std::size_t>(i) * m + j) * d;
      for (int c = 0; c < d; ++c) acc[c] += wij * vr[c];
    }
    for (int c = 0; c < d; ++c) y[static_cast<std::size_t>(i) * d + c] = static_cast<float>(acc[c]);
  }
  int iw = w.id(), iv = v.id();
  return t.record(std::move(y), {iw, iv}, [iw, iv, s, m, d](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& W = tp.value(iw);
    const Tensor& V = tp.value(iv);
    if (tp.requires_grad(iw)) {
      Tensor& dw = grad_slot(tp, grads, iw);
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < m; ++j) {
          const float* vr = V.data().data() + (static_cast<std::size_t>(i) * m + j) * d;
          const float* gr = g.data().data() + static_cast<std::size_t>(i) * d;
          double acc = 0.0;
          for (int c = 0; c < d; ++c) acc += static_cast<double>(gr[c]) * vr[c];
          dw[static_cast<std::size_t>(i) * m + j] += static_cast<float>(acc);
        }
    }
    if (tp.requires_grad(iv)) {
      Tensor& dv = grad_slot(tp, grads, iv);
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < m; ++j) {
          const float wij = W[static_cast<std::size_t>(i) * m + j];
          const float* gr = g.data().data() + static_cast<std::size_t>(i) * d;
          float* dvr = dv.data().data() + (static_cast<std::size_t>(i) * m + j) * d;
          for (int c = 0; c < d; ++c) dvr[c] += wij * gr[c];
        }
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Tensor y = a.value().reshaped(std::move(shape));
  int ia = a.id();
  return t.record(std::move(y), {ia}, [ia](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& dx = grad_slot(tp, grads, ia);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

Var gumbel_softmax(Var logits, float temperature, bool hard, Rng& rng) {
  if (!(temperature > 0.0f)) throw ParameterError("gumbel_softmax temperature must be > 0");
  Tape& t = tape_of(logits);
  const Tensor& l = logits.value();
  if (l.rank() != 1 && l.rank() != 2) throw DimensionError("gumbel_softmax expects [k] or [s,k] logits");
  Tensor noise(l.shape());
  for (float& g : noise.data()) g = static_cast<float>(rng.gumbel());
  const int axis = l.rank() - 1;
  Var soft = softmax(scale(add(logits, t.constant(std::move(noise))), 1.0f / temperature), axis);
  if (!hard) return soft;
  const Tensor& sv = soft.value();
  const int k = sv.cols(), s = sv.rows();
  Tensor onehot(sv.shape());
  for (int i = 0; i < s; ++i) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (sv[static_cast<std::size_t>(i) * k + j] > sv[static_cast<std::size_t>(i) * k + best]) best = j;
    onehot[static_cast<std::size_t>(i) * k + best] = 1.0f;
  }
  int is = soft.id();
  return t.record(std::move(onehot), {is}, [is](const Tape& tp, const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& dx = grad_slot(tp, grads, is);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

}  // namespace mra::ad
