#pragma once

// Reverse-mode automatic differentiation over dense tensors. A Tape records
// every operation in execution order (which is already topological); backward
// sweeps the record once in reverse. Tensors and tapes are 64-bit float
// throughout. A tape is confined to one thread; distinct tapes are
// independent.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "vskd/common.hpp"
#include "vskd/tensor.hpp"

namespace vskd::ad {

namespace testing {
// Scales the relu backward rule by (1 + value). Nonzero only in fault
// injection fixtures that prove the gradient checker can detect a wrong
// backward rule.
inline double backward_perturbation = 0.0;
}  // namespace testing

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
  bool valid() const { return tape != nullptr; }
};

class Tape {
 public:
  using PullFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;             // Vars hold a Tape*
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad) {
    return wrap(push(std::move(value), requires_grad, nullptr));
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  std::size_t push(Tensor value, bool needs_grad, PullFn pull) {
    nodes_.push_back(Node{std::move(value), Tensor{}, needs_grad, std::move(pull)});
    return nodes_.size() - 1;
  }

  Var wrap(std::size_t id) { return Var{this, id}; }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& value_at(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  bool needs_grad_at(std::size_t id) const { return nodes_.at(id).needs_grad; }

  /// Mutable gradient buffer; valid only during/after backward for nodes
  /// that need gradients.
  Tensor& grad_at(std::size_t id) { return nodes_.at(id).grad; }

  const Tensor& grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (!n.needs_grad || n.grad.numel() == 0)
      throw InvalidInput("no gradient recorded for this variable");
    return n.grad;
  }

  /// Reverse accumulation from a scalar output into every requires_grad leaf.
  void backward(Var output) {
    if (output.tape != this) throw InvalidInput("backward: variable from another tape");
    if (backward_done_) throw std::logic_error("backward already ran on this tape");
    const Node& out = nodes_.at(output.id);
    if (out.value.numel() != 1)
      throw InvalidInput("backward requires a scalar output");
    if (!out.needs_grad)
      throw InvalidInput("backward: output does not depend on any requires_grad leaf");
    backward_done_ = true;
    for (std::size_t i = 0; i <= output.id; ++i)
      if (nodes_[i].needs_grad) nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
    nodes_[output.id].grad.values[0] = 1.0;
    for (std::size_t i = output.id + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (!n.needs_grad || !n.pull) continue;
      // Every pull is linear in the incoming gradient, so a node whose
      // gradient is identically zero contributes nothing — it is off the
      // differentiation path. Skipping it keeps local derivatives that are
      // infinite at the evaluation point (sqrt at 0, a division by zero)
      // from turning that zero into a poisoned 0 * inf.
      bool on_path = false;
      for (double gv : n.grad.values)
        if (gv != 0.0) {
          on_path = true;
          break;
        }
      if (on_path) n.pull(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    PullFn pull;
  };
  // deque: recorded values/grads stay referenceable while the tape grows
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw InvalidInput("operands must live on the same tape");
  return *a.tape;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw InvalidInput(std::string(op) + ": shape mismatch");
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  detail::require_same_shape(va, vb, "add");
  Tensor out = va;
  for (std::size_t k = 0; k < out.numel(); ++k) out.values[k] += vb.values[k];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  auto pull = [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.needs_grad_at(a.id)) {
      Tensor& ga = tp.grad_at(a.id);
      for (std::size_t k = 0; k < g.numel(); ++k) ga.values[k] += g.values[k];
    }
    if (tp.needs_grad_at(b.id)) {
      Tensor& gb = tp.grad_at(b.id);
      for (std::size_t k = 0; k < g.numel(); ++k) gb.values[k] += g.values[k];
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var subtract(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  detail::require_same_shape(va, vb, "subtract");
  Tensor out = va;
  for (std::size_t k = 0; k < out.numel(); ++k) out.values[k] -= vb.values[k];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  auto pull = [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.needs_grad_at(a.id)) {
      Tensor& ga = tp.grad_at(a.id);
      for (std::size_t k = 0; k < g.numel(); ++k) ga.values[k] += g.values[k];
    }
    if (tp.needs_grad_at(b.id)) {
      Tensor& gb = tp.grad_at(b.id);
      for (std::size_t k = 0; k < g.numel(); ++k) gb.values[k] -= g.values[k];
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var multiply(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  detail::require_same_shape(va, vb, "multiply");
  Tensor out = va;
  for (std::size_t k = 0; k < out.numel(); ++k) out.values[k] *= vb.values[k];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  auto pull = [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& va2 = tp.value_at(a.id);
    const Tensor& vb2 = tp.value_at(b.id);
    if (tp.needs_grad_at(a.id)) {
      Tensor& ga = tp.grad_at(a.id);
      for (std::size_t k = 0; k < g.numel(); ++k)
        ga.values[k] += g.values[k] * vb2.values[k];
    }
    if (tp.needs_grad_at(b.id)) {
      Tensor& gb = tp.grad_at(b.id);
      for (std::size_t k = 0; k < g.numel(); ++k)
        gb.values[k] += g.values[k] * va2.values[k];
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var divide(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  detail::require_same_shape(va, vb, "divide");
  Tensor out = va;
  for (std::size_t k = 0; k < out.numel(); ++k) out.values[k] /= vb.values[k];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  auto pull = [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& va2 = tp.value_at(a.id);
    const Tensor& vb2 = tp.value_at(b.id);
    if (tp.needs_grad_at(a.id)) {
      Tensor& ga = tp.grad_at(a.id);
      for (std::size_t k = 0; k < g.numel(); ++k)
        ga.values[k] += g.values[k] / vb2.values[k];
    }
    if (tp.needs_grad_at(b.id)) {
      Tensor& gb = tp.grad_at(b.id);
      for (std::size_t k = 0; k < g.numel(); ++k)
        gb.values[k] -= g.values[k] * va2.values[k] / (vb2.values[k] * vb2.values[k]);
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Matrix product of rank-2 tensors: (m x k) * (k x n).
inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.shape[1] != vb.shape[0])
    throw InvalidInput("matmul: incompatible shapes");
  const std::size_t m = va.shape[0], k = va.shape[1], n = vb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = va.values[i * k + p];
      const double* brow = &vb.values[p * n];
      double* orow = &out.values[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  auto pull = [a, b, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& va2 = tp.value_at(a.id);
    const Tensor& vb2 = tp.value_at(b.id);
    if (tp.needs_grad_at(a.id)) {
      Tensor& ga = tp.grad_at(a.id);  // g * b^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* grow = &g.values[i * n];
          const double* brow = &vb2.values[p * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga.values[i * k + p] += acc;
        }
    }
    if (tp.needs_grad_at(b.id)) {
      Tensor& gb = tp.grad_at(b.id);  // a^T * g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = va2.values[i * k + p];
          const double* grow = &g.values[i * n];
          double* gbrow = &gb.values[p * n];
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Elementwise max(x, 0). Backward uses subgradient 0 at exactly 0.
inline Var relu(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  Tensor out = vx;
  for (auto& v : out.values) v = v > 0.0 ? v : 0.0;
  const bool ng = t.needs_grad(x);
  auto pull = [x](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& vx2 = tp.value_at(x.id);
    Tensor& gx = tp.grad_at(x.id);
    const double scale = 1.0 + testing::backward_perturbation;
    for (std::size_t k = 0; k < g.numel(); ++k)
      if (vx2.values[k] > 0.0) gx.values[k] += scale * g.values[k];
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var log(Var x) {
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (auto& v : out.values) v = std::log(v);
  const bool ng = t.needs_grad(x);
  auto pull = [x](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& vx2 = tp.value_at(x.id);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t k = 0; k < g.numel(); ++k)
      gx.values[k] += g.values[k] / vx2.values[k];
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var exp(Var x) {
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (auto& v : out.values) v = std::exp(v);
  const bool ng = t.needs_grad(x);
  auto pull = [x](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& vout = tp.value_at(self);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t k = 0; k < g.numel(); ++k)
      gx.values[k] += g.values[k] * vout.values[k];
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var sqrt(Var x) {
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (auto& v : out.values) v = std::sqrt(v);
  const bool ng = t.needs_grad(x);
  auto pull = [x](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& vout = tp.value_at(self);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t k = 0; k < g.numel(); ++k)
      gx.values[k] += g.values[k] / (2.0 * vout.values[k]);
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var sum(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  double acc = 0.0;
  for (double v : vx.values) acc += v;
  const bool ng = t.needs_grad(x);
  auto pull = [x](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const double g0 = tp.grad_at(self).values[0];
    Tensor& gx = tp.grad_at(x.id);
    for (auto& v : gx.values) v += g0;
  };
  return t.wrap(t.push(Tensor::scalar(acc), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var mean(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.numel() == 0) throw InvalidInput("mean of empty tensor");
  double acc = 0.0;
  for (double v : vx.values) acc += v;
  const double inv = 1.0 / static_cast<double>(vx.numel());
  const bool ng = t.needs_grad(x);
  auto pull = [x, inv](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const double g0 = tp.grad_at(self).values[0] * inv;
    Tensor& gx = tp.grad_at(x.id);
    for (auto& v : gx.values) v += g0;
  };
  return t.wrap(t.push(Tensor::scalar(acc * inv), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Row-wise maximum of a rank-2 tensor, shape (m, 1). Gradient routes to the
/// first maximal entry of each row.
inline Var max_over_axis(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.rank() != 2) throw InvalidInput("max_over_axis expects rank 2");
  const std::size_t m = vx.shape[0], n = vx.shape[1];
  Tensor out = Tensor::zeros({m, 1});
  std::vector<std::size_t> arg(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &vx.values[i * n];
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (row[j] > row[best]) best = j;
    arg[i] = best;
    out.values[i] = row[best];
  }
  const bool ng = t.needs_grad(x);
  auto pull = [x, arg, n](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t i = 0; i < arg.size(); ++i)
      gx.values[i * n + arg[i]] += g.values[i];
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Row-wise softmax with max subtraction for overflow safety.
inline Var softmax_rows(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.rank() != 2) throw InvalidInput("softmax_rows expects rank 2");
  const std::size_t m = vx.shape[0], n = vx.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &vx.values[i * n];
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.values[i * n + j] = std::exp(row[j] - mx);
      z += out.values[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] /= z;
  }
  const bool ng = t.needs_grad(x);
  auto pull = [x, m, n](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& s = tp.value_at(self);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        dot += g.values[i * n + j] * s.values[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        gx.values[i * n + j] += s.values[i * n + j] * (g.values[i * n + j] - dot);
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Row-wise log-softmax in the stabilized log-sum-exp form:
/// out = x - max - log(sum(exp(x - max))).
inline Var log_softmax_rows(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.rank() != 2) throw InvalidInput("log_softmax_rows expects rank 2");
  const std::size_t m = vx.shape[0], n = vx.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &vx.values[i * n];
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] = row[j] - lse;
  }
  const bool ng = t.needs_grad(x);
  auto pull = [x, m, n](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& lp = tp.value_at(self);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g.values[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        gx.values[i * n + j] +=
            g.values[i * n + j] - std::exp(lp.values[i * n + j]) * gsum;
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Copy of rows [begin, end) of a rank-2 tensor.
inline Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.rank() != 2) throw InvalidInput("slice_rows expects rank 2");
  const std::size_t m = vx.shape[0], n = vx.shape[1];
  if (begin >= end || end > m) throw InvalidInput("slice_rows: bad row range");
  Tensor out = Tensor::zeros({end - begin, n});
  std::copy(vx.values.begin() + begin * n, vx.values.begin() + end * n,
            out.values.begin());
  const bool ng = t.needs_grad(x);
  auto pull = [x, begin, n](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t k = 0; k < g.numel(); ++k)
      gx.values[begin * n + k] += g.values[k];
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Vertical concatenation of rank-2 tensors with equal column counts.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t n = t.value(parts[0]).cols();
  std::size_t total = 0;
  bool ng = false;
  for (Var p : parts) {
    if (p.tape != &t) throw InvalidInput("concat_rows: mixed tapes");
    const Tensor& v = t.value(p);
    if (v.rank() != 2 || v.shape[1] != n)
      throw InvalidInput("concat_rows: column mismatch");
    total += v.shape[0];
    ng = ng || t.needs_grad(p);
  }
  Tensor out = Tensor::zeros({total, n});
  std::size_t row = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    std::copy(v.values.begin(), v.values.end(), out.values.begin() + row * n);
    row += v.shape[0];
  }
  auto pull = [parts, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    std::size_t row = 0;
    for (Var p : parts) {
      const std::size_t rows = tp.value_at(p.id).shape[0];
      if (tp.needs_grad_at(p.id)) {
        Tensor& gp = tp.grad_at(p.id);
        for (std::size_t k = 0; k < rows * n; ++k)
          gp.values[k] += g.values[row * n + k];
      }
      row += rows;
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Stack scalar variables into one rank-1 vector.
inline Var stack_scalars(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("stack_scalars: no inputs");
  Tape& t = *parts[0].tape;
  Tensor out = Tensor::zeros({parts.size()});
  bool ng = false;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].tape != &t) throw InvalidInput("stack_scalars: mixed tapes");
    const Tensor& v = t.value(parts[k]);
    if (v.numel() != 1) throw InvalidInput("stack_scalars: non-scalar input");
    out.values[k] = v.values[0];
    ng = ng || t.needs_grad(parts[k]);
  }
  auto pull = [parts](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    for (std::size_t k = 0; k < parts.size(); ++k)
      if (tp.needs_grad_at(parts[k].id))
        tp.grad_at(parts[k].id).values[0] += g.values[k];
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Multiply every element by a constant.
inline Var scale(Var x, double c) {
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (auto& v : out.values) v *= c;
  const bool ng = t.needs_grad(x);
  auto pull = [x, c](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t k = 0; k < g.numel(); ++k) gx.values[k] += c * g.values[k];
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Broadcast-add a rank-1 bias of length n to every row of an (m, n) tensor.
inline Var add_row(Var x, Var bias) {
  Tape& t = detail::same_tape(x, bias);
  const Tensor& vx = t.value(x);
  const Tensor& vb = t.value(bias);
  if (vx.rank() != 2 || vb.rank() != 1 || vb.shape[0] != vx.shape[1])
    throw InvalidInput("add_row: bias must be rank 1 of width cols(x)");
  const std::size_t m = vx.shape[0], n = vx.shape[1];
  Tensor out = vx;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values[i * n + j] += vb.values[j];
  const bool ng = t.needs_grad(x) || t.needs_grad(bias);
  auto pull = [x, bias, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.needs_grad_at(x.id)) {
      Tensor& gx = tp.grad_at(x.id);
      for (std::size_t k = 0; k < g.numel(); ++k) gx.values[k] += g.values[k];
    }
    if (tp.needs_grad_at(bias.id)) {
      Tensor& gb = tp.grad_at(bias.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb.values[j] += g.values[i * n + j];
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Elementwise clamp into [lo, hi]. Gradient passes through where the input
/// lies inside the interval (boundary included) and is 0 where clamping bites.
inline Var tanh(Var x) {
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (auto& v : out.values) v = std::tanh(v);
  const bool ng = t.needs_grad(x);
  auto pull = [x](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& vy = tp.value_at(self);  // tanh'(x) = 1 - tanh(x)^2
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t k = 0; k < g.numel(); ++k)
      gx.values[k] += g.values[k] * (1.0 - vy.values[k] * vy.values[k]);
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

inline Var clamp(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw InvalidInput("clamp: lo must be <= hi");
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (auto& v : out.values) v = std::clamp(v, lo, hi);
  const bool ng = t.needs_grad(x);
  auto pull = [x, lo, hi](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& vx2 = tp.value_at(x.id);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t k = 0; k < g.numel(); ++k)
      if (vx2.values[k] >= lo && vx2.values[k] <= hi)
        gx.values[k] += g.values[k];
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Elementwise Huber penalty: x^2/2 inside |x| <= delta, linear outside.
/// Value and first derivative are continuous at |x| = delta.
inline Var huber_elem(Var x, double delta) {
  if (delta <= 0.0) throw InvalidInput("huber: delta must be > 0");
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (auto& v : out.values) {
    const double a = std::abs(v);
    v = a <= delta ? 0.5 * v * v : delta * (a - 0.5 * delta);
  }
  const bool ng = t.needs_grad(x);
  auto pull = [x, delta](Tape& tp, std::size_t self) {
    if (!tp.needs_grad_at(x.id)) return;
    const Tensor& g = tp.grad_at(self);
    const Tensor& vx2 = tp.value_at(x.id);
    Tensor& gx = tp.grad_at(x.id);
    for (std::size_t k = 0; k < g.numel(); ++k) {
      const double v = vx2.values[k];
      const double d = std::abs(v) <= delta ? v : (v > 0.0 ? delta : -delta);
      gx.values[k] += g.values[k] * d;
    }
  };
  return t.wrap(t.push(std::move(out), ng, ng ? Tape::PullFn(pull) : nullptr));
}

/// Max relative error between the reverse-mode gradient of f at `point` and
/// central finite differences with the given step. f must be pure and map a
/// single tensor to a scalar.
template <typename F>
double grad_check(F&& f, const Tensor& point, double step) {
  if (step <= 0.0) throw InvalidInput("grad_check: step must be > 0");
  Tensor reverse;
  {
    Tape tape;
    Var x = tape.leaf(point, true);
    Var y = f(tape, x);
    tape.backward(y);
    reverse = tape.grad(x);
  }
  auto eval = [&](const Tensor& p) {
    Tape tape;
    Var x = tape.leaf(p, false);
    Var y = f(tape, x);
    return tape.value(y).values[0];
  };
  double max_rel = 0.0;
  Tensor p = point;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    p.values[i] = point.values[i] + step;
    const double up = eval(p);
    p.values[i] = point.values[i] - step;
    const double down = eval(p);
    p.values[i] = point.values[i];
    const double fd = (up - down) / (2.0 * step);
    const double rev = reverse.values[i];
    const double rel = std::abs(fd - rev) / std::max(1e-8, std::abs(fd) + std::abs(rev));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace vskd::ad
