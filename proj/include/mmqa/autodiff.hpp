#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmqa/error.hpp"
#include "mmqa/tensor.hpp"

namespace mmqa {

/// Ordered collection of named trainable tensors.
class Parameters {
 public:
  std::size_t add(std::string name, Tensor value) {
    if (index_.contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
    const std::size_t id = values_.size();
    index_.emplace(name, id);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    trainable_.push_back(true);
    return id;
  }

  std::size_t size() const { return values_.size(); }
  Tensor& value(std::size_t id) { return values_.at(id); }
  const Tensor& value(std::size_t id) const { return values_.at(id); }
  const std::string& name(std::size_t id) const { return names_.at(id); }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool trainable(std::size_t id) const { return trainable_.at(id); }
  void set_trainable(std::size_t id, bool on) { trainable_.at(id) = on; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  std::span<Tensor> values() { return values_; }
  std::span<const Tensor> values() const { return values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<bool> trainable_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

/// Append-only record of executed primitives. Node order is execution order,
/// so a reverse sweep over the vector is a valid reverse-topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  enum class Mode { record_gradients, forward_only };

  Tape() = default;
  explicit Tape(Mode mode) : grad_enabled_(mode == Mode::record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  /// Free variable whose gradient is tracked.
  Var leaf(Tensor value) { return push(std::move(value), grad_enabled_, {}); }

  /// Leaf bound to a parameter slot; repeated requests share one node.
  Var param(const Parameters& params, std::size_t id) {
    if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return Var{this, it->second};
    Var v = push(params.value(id), grad_enabled_ && params.trainable(id), {});
    nodes_[v.id].param_id = id;
    param_nodes_.emplace(id, v.id);
    return v;
  }

  /// Records an operation. `back` is only kept when some input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn back) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(back));
  }

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn back) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owned(in);
      needs = needs || nodes_[in.id].needs_grad;
    }
    if (!value.all_finite()) throw NumericalError("non-finite value produced on tape");
    return push(std::move(value), needs, needs ? std::move(back) : BackwardFn{});
  }

  const Tensor& value(Var v) const {
    check_owned(v);
    return nodes_[v.id].value;
  }

  bool needs_grad(Var v) const {
    check_owned(v);
    return nodes_[v.id].needs_grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Adds `g` into the gradient slot of `v`.
  void accumulate(Var v, const Tensor& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
  }

  /// Reverse sweep from a scalar loss. d loss / d loss = 1.
  void backward(Var loss) {
    if (loss.tape != this || loss.id >= nodes_.size()) {
      throw ValidationError("backward: loss is not recorded on this tape");
    }
    const Tensor& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + lv.shape_string());
    }
    for (auto& n : nodes_) n.grad = Tensor{};
    nodes_[loss.id].grad = Tensor(1, 1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.back || n.grad.empty()) continue;
      // Copy: the closure may append to other nodes' gradients only.
      const Tensor g = n.grad;
      n.back(*this, g);
    }
  }

  /// Gradient of the last backward pass; zeros for untouched nodes.
  Tensor grad(Var v) const {
    check_owned(v);
    const Node& n = nodes_[v.id];
    if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds scale * d loss / d param into `acc[param_id]` for every parameter used.
  void accumulate_parameter_gradients(std::vector<Tensor>& acc, double scale) const {
    for (const auto& [pid, node_id] : param_nodes_) {
      const Node& n = nodes_[node_id];
      if (n.grad.empty()) continue;
      Tensor& dst = acc.at(pid);
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += scale * n.grad[i];
    }
  }

  /// Dense gradients for every parameter slot, zero where unused.
  std::vector<Tensor> parameter_gradients(const Parameters& params) const {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.emplace_back(params.value(i).rows(), params.value(i).cols());
    }
    accumulate_parameter_gradients(out, 1.0);
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn back;
    bool needs_grad = false;
    std::optional<std::size_t> param_id;
  };

  Var push(Tensor value, bool needs, BackwardFn back) {
    if (value.empty()) throw ShapeError("tape: empty tensor");
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), needs, std::nullopt});
    return Var{this, nodes_.size() - 1};
  }

  void check_owned(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) {
      throw ValidationError("variable does not belong to this tape");
    }
  }

  std::vector<Node> nodes_;
  std::map<std::size_t, std::size_t> param_nodes_;
  bool grad_enabled_ = true;
};

// Differentiable primitives.

inline const Tensor& val(Var v) { return v.tape->value(v); }

inline Var matmul(Var a, Var b) {
  Tensor out = matmul(val(a), val(b));
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a)) t.accumulate(a, matmul(g, transpose(t.value(b))));
    if (t.needs_grad(b)) t.accumulate(b, matmul(transpose(t.value(a)), g));
  });
}

inline Var add(Var a, Var b) {
  Tensor out = add(val(a), val(b));
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

/// m×n plus a 1×n row broadcast over every row.
inline Var add_row(Var a, Var bias) {
  const Tensor& av = val(a);
  const Tensor& bv = val(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_row: bias " + bv.shape_string() + " incompatible with " +
                     av.shape_string());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  return a.tape->record(std::move(out), {a, bias}, [a, bias](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (!t.needs_grad(bias)) return;
    Tensor s(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) s(0, j) += g(i, j);
    t.accumulate(bias, s);
  });
}

inline Var mul(Var a, Var b) {
  Tensor out = mul(val(a), val(b));
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a)) t.accumulate(a, mul(g, t.value(b)));
    if (t.needs_grad(b)) t.accumulate(b, mul(g, t.value(a)));
  });
}

inline Var scale(Var a, double c) {
  Tensor out = map(val(a), [c](double v) { return c * v; });
  return a.tape->record(std::move(out), {a}, [a, c](Tape& t, const Tensor& g) {
    t.accumulate(a, map(g, [c](double v) { return c * v; }));
  });
}

/// 1 - a, elementwise.
inline Var one_minus(Var a) {
  Tensor out = map(val(a), [](double v) { return 1.0 - v; });
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, map(g, [](double v) { return -v; }));
  });
}

inline Var relu(Var a) {
  Tensor out = relu(val(a));
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    Tensor d = g;
    const Tensor& x = t.value(a);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!(x[i] > 0)) d[i] = 0.0;
    t.accumulate(a, d);
  });
}

inline Var sigmoid(Var a) {
  Tensor out = sigmoid(val(a));
  Tensor y = out;
  return a.tape->record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor d = g;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0 - y[i]);
    t.accumulate(a, d);
  });
}

inline Var tanh(Var a) {
  Tensor out = tanh(val(a));
  Tensor y = out;
  return a.tape->record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor d = g;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - y[i] * y[i];
    t.accumulate(a, d);
  });
}

inline Var transpose(Var a) {
  Tensor out = transpose(val(a));
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, transpose(g));
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (Var p : parts) values.push_back(val(p));
  Tensor out = concat_cols(values);
  return parts.front().tape->record(std::move(out), parts, [parts](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (Var p : parts) {
      const std::size_t w = t.value(p).cols();
      if (t.needs_grad(p)) {
        Tensor d(g.rows(), w);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) d(r, c) = g(r, offset + c);
        t.accumulate(p, d);
      }
      offset += w;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (Var p : parts) values.push_back(val(p));
  Tensor out = concat_rows(values);
  return parts.front().tape->record(std::move(out), parts, [parts](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (Var p : parts) {
      const std::size_t h = t.value(p).rows();
      if (t.needs_grad(p)) {
        Tensor d(h, g.cols());
        std::copy_n(&g(offset, 0), h * g.cols(), d.data().data());
        t.accumulate(p, d);
      }
      offset += h;
    }
  });
}

/// Row `i` of `a` as a 1×n tensor.
inline Var row(Var a, std::size_t i) {
  const Tensor& av = val(a);
  if (i >= av.rows()) throw ShapeError("row: index out of range for " + av.shape_string());
  Tensor out(1, av.cols());
  std::copy_n(&av(i, 0), av.cols(), out.data().data());
  return a.tape->record(std::move(out), {a}, [a, i](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    Tensor d(av.rows(), av.cols());
    std::copy_n(g.data().data(), av.cols(), &d(i, 0));
    t.accumulate(a, d);
  });
}

/// Stacks rows `ids` of `table` (embedding lookup).
inline Var gather_rows(Var table, std::vector<std::size_t> ids) {
  const Tensor& tv = val(table);
  if (ids.empty()) throw ShapeError("gather_rows: no row ids");
  Tensor out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) throw ShapeError("gather_rows: row id out of range");
    std::copy_n(&tv(ids[r], 0), tv.cols(), &out(r, 0));
  }
  return table.tape->record(std::move(out), {table},
                            [table, ids = std::move(ids)](Tape& t, const Tensor& g) {
                              const Tensor& tv = t.value(table);
                              Tensor d(tv.rows(), tv.cols());
                              for (std::size_t r = 0; r < ids.size(); ++r)
                                for (std::size_t c = 0; c < tv.cols(); ++c)
                                  d(ids[r], c) += g(r, c);
                              t.accumulate(table, d);
                            });
}

inline Var softmax_rows(Var a) {
  Tensor out = softmax_rows(val(a));
  Tensor y = out;
  return a.tape->record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor d(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - dot);
    }
    t.accumulate(a, d);
  });
}

inline Var mean_rows(Var a) {
  Tensor out = mean_rows(val(a));
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const double inv = 1.0 / static_cast<double>(av.rows());
    Tensor d(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
      for (std::size_t j = 0; j < av.cols(); ++j) d(i, j) = g(0, j) * inv;
    t.accumulate(a, d);
  });
}

inline Var max_pool_rows(Var a) {
  auto arg = argmax_rows(val(a));
  Tensor out(1, val(a).cols());
  for (std::size_t j = 0; j < out.cols(); ++j) out(0, j) = val(a)(arg[j], j);
  return a.tape->record(std::move(out), {a}, [a, arg = std::move(arg)](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    Tensor d(av.rows(), av.cols());
    for (std::size_t j = 0; j < av.cols(); ++j) d(arg[j], j) = g(0, j);
    t.accumulate(a, d);
  });
}

inline Var sum(Var a) {
  double total = 0.0;
  for (double v : val(a).data()) total += v;
  return a.tape->record(Tensor(1, 1, total), {a}, [a](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    t.accumulate(a, Tensor(av.rows(), av.cols(), g[0]));
  });
}

/// Mean over rows of -log softmax(logits)[t, target_t], as a 1×1 value.
inline Var cross_entropy(Var logits, std::vector<std::size_t> targets) {
  const double loss = cross_entropy(val(logits), targets);
  return logits.tape->record(
      Tensor(1, 1, loss), {logits},
      [logits, targets = std::move(targets)](Tape& t, const Tensor& g) {
        Tensor d = softmax_rows(t.value(logits));
        const double inv = g[0] / static_cast<double>(targets.size());
        for (std::size_t r = 0; r < targets.size(); ++r) {
          d(r, targets[r]) -= 1.0;
          for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) *= inv;
        }
        t.accumulate(logits, d);
      });
}

inline Var elementwise(ElementwiseKind kind, const std::vector<Var>& args) {
  auto arity = [&](std::size_t n) {
    if (args.size() != n) throw ShapeError("elementwise: wrong operand count");
  };
  switch (kind) {
    case ElementwiseKind::relu: arity(1); return relu(args[0]);
    case ElementwiseKind::sigmoid: arity(1); return sigmoid(args[0]);
    case ElementwiseKind::tanh: arity(1); return tanh(args[0]);
    case ElementwiseKind::mul: arity(2); return mul(args[0], args[1]);
    case ElementwiseKind::add: arity(2); return add(args[0], args[1]);
    case ElementwiseKind::concat_cols: return concat_cols(args);
  }
  throw ValidationError("unknown elementwise kind");
}

// Finite-difference oracle.

/// |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

inline void check_fd_step(double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw ValidationError("grad_check: eps must lie in [1e-6, 1e-3]");
  }
}

inline double scalar_value(const Tape& tape, Var out) {
  const Tensor& v = tape.value(out);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("grad_check: function must be scalar-valued, got " + v.shape_string());
  }
  return v[0];
}

/// Max relative error between the tape gradient of `f` at `x` and central
/// differences. `f` has signature Var(Tape&, Var x) and must return a scalar.
template <typename F>
double grad_check(F&& f, const Tensor& x, double eps) {
  check_fd_step(eps);
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.leaf(x);
    Var out = f(tape, xv);
    scalar_value(tape, out);
    tape.backward(out);
    analytic = tape.grad(xv);
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    Var out = f(tape, tape.leaf(at));
    return scalar_value(tape, out);
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = eval(probe);
    probe[i] = x[i] - eps;
    const double down = eval(probe);
    probe[i] = x[i];
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

/// Same check over every trainable scalar of `params`. `f` has signature
/// Var(Tape&) and must pull parameters through Tape::param.
template <typename F>
double grad_check_parameters(F&& f, Parameters& params, double eps) {
  check_fd_step(eps);
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var out = f(tape);
    scalar_value(tape, out);
    tape.backward(out);
    analytic = tape.parameter_gradients(params);
  }
  auto eval = [&] {
    Tape tape;
    Var out = f(tape);
    return scalar_value(tape, out);
  };
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params.trainable(p)) continue;
    Tensor& value = params.value(p);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double up = eval();
      value[i] = saved - eps;
      const double down = eval();
      value[i] = saved;
      worst = std::max(worst, relative_error(analytic[p][i], (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

}  // namespace mmqa
