// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#include "metamem/nn/autodiff.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

namespace metamem::nn {
namespace {

thread_local bool g_grad_enabled = true;

void accumulate(Node& target, const Tensor& g) {
  if (!target.requires_grad) return;
  if (target.grad.size() == 0) {
    target.grad = g;
  } else {
    target.grad += g;
  }
}

// Builds the result node; parents and the closure are attached only when
// some parent needs a gradient and recording is on.
Var make_node(Tensor value, const char* op,
              std::vector<std::shared_ptr<Node>> parents,
              std::function<void(Node&)> backward_fn) {
  if (!value.allFinite()) {
    throw NumericError(op, "non-finite forward value");
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

enum class Shape { kSame, kRow, kCol, kScalar };

Shape broadcast_kind(const Tensor& big, const Tensor& small, const char* op) {
  if (big.rows() == small.rows() && big.cols() == small.cols()) return Shape::kSame;
  if (small.rows() == 1 && small.cols() == 1) return Shape::kScalar;
  if (small.rows() == 1 && small.cols() == big.cols()) return Shape::kRow;
  if (small.cols() == 1 && small.rows() == big.rows()) return Shape::kCol;
  throw ContractError(std::string(op) + ": incompatible shapes " +
                      std::to_string(big.rows()) + "x" + std::to_string(big.cols()) +
                      " and " + std::to_string(small.rows()) + "x" +
                      std::to_string(small.cols()));
}

Tensor expand(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  if (t.rows() == rows && t.cols() == cols) return t;
  if (t.size() == 1) return Tensor::Constant(rows, cols, t(0, 0));
  if (t.rows() == 1) return t.replicate(rows, 1);
  return t.replicate(1, cols);
}

Tensor reduce_to(const Tensor& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Tensor::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

// Output shape of a broadcasting binary op.
std::pair<Eigen::Index, Eigen::Index> out_shape(const Tensor& a, const Tensor& b,
                                                const char* op) {
  if (a.size() >= b.size()) {
    broadcast_kind(a, b, op);
    return {a.rows(), a.cols()};
  }
  broadcast_kind(b, a, op);
  return {b.rows(), b.cols()};
}

template <typename Fwd, typename GradA, typename GradB>
Var binary(const Var& a, const Var& b, const char* op, Fwd fwd, GradA grad_a,
           GradB grad_b) {
  const auto [r, c] = out_shape(a.value(), b.value(), op);
  Tensor ea = expand(a.value(), r, c);
  Tensor eb = expand(b.value(), r, c);
  Tensor out = fwd(ea, eb);
  return make_node(std::move(out), op, {a.ptr(), b.ptr()},
                   [grad_a, grad_b, r = r, c = c](Node& self) {
                     Node& pa = *self.parents[0];
                     Node& pb = *self.parents[1];
                     Tensor ea = expand(pa.value, r, c);
                     Tensor eb = expand(pb.value, r, c);
                     if (pa.requires_grad) {
                       accumulate(pa, reduce_to(grad_a(ea, eb, self.value, self.grad),
                                                pa.value.rows(), pa.value.cols()));
                     }
                     if (pb.requires_grad) {
                       accumulate(pb, reduce_to(grad_b(ea, eb, self.value, self.grad),
                                                pb.value.rows(), pb.value.cols()));
                     }
                   });
}

// f maps input to output; df maps (input, output, upstream grad) to the
// input grad.
template <typename F, typename DF>
Var unary(const Var& x, const char* op, F f, DF df) {
  Tensor out = f(x.value());
  return make_node(std::move(out), op, {x.ptr()}, [df](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, df(p.value, self.value, self.grad));
  });
}

}  // namespace

double Var::scalar() const {
  if (node_->value.size() != 1) {
    throw ContractError("scalar() on a non-scalar tensor");
  }
  return node_->value(0, 0);
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "parameter";
  node->requires_grad = true;
  return Var(std::move(node));
}

Var detach(const Var& x) { return constant(x.value()); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Gradients backward(const Var& loss) {
  if (!loss || loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  Gradients result;
  if (!loss.requires_grad()) return result;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.ptr().get(), 0);
  visited.insert(loss.ptr().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad.resize(0, 0);
  loss.ptr()->grad = Tensor::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0) continue;
    if (!n->grad.allFinite()) throw NumericError(n->op, "non-finite gradient");
    if (n->backward_fn) {
      n->backward_fn(*n);
      n->grad.resize(0, 0);
    }
  }
  for (Node* n : order) {
    if (!n->backward_fn && n->requires_grad) {
      Tensor g = n->grad.size() == 0 ? Tensor::Zero(n->value.rows(), n->value.cols())
                                     : std::move(n->grad);
      n->grad.resize(0, 0);
      result.emplace(n, std::move(g));
    }
  }
  return result;
}

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](const Tensor& x, const Tensor& y) -> Tensor { return x + y; },
      [](const Tensor&, const Tensor&, const Tensor&, const Tensor& g) { return g; },
      [](const Tensor&, const Tensor&, const Tensor&, const Tensor& g) { return g; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](const Tensor& x, const Tensor& y) -> Tensor { return x - y; },
      [](const Tensor&, const Tensor&, const Tensor&, const Tensor& g) { return g; },
      [](const Tensor&, const Tensor&, const Tensor&, const Tensor& g) -> Tensor {
        return -g;
      });
}

Var cmul(const Var& a, const Var& b) {
  return binary(
      a, b, "cmul",
      [](const Tensor& x, const Tensor& y) -> Tensor { return x.cwiseProduct(y); },
      [](const Tensor&, const Tensor& y, const Tensor&, const Tensor& g) -> Tensor {
        return g.cwiseProduct(y);
      },
      [](const Tensor& x, const Tensor&, const Tensor&, const Tensor& g) -> Tensor {
        return g.cwiseProduct(x);
      });
}

Var cdiv(const Var& a, const Var& b) {
  return binary(
      a, b, "cdiv",
      [](const Tensor& x, const Tensor& y) -> Tensor { return x.cwiseQuotient(y); },
      [](const Tensor&, const Tensor& y, const Tensor&, const Tensor& g) -> Tensor {
        return g.cwiseQuotient(y);
      },
      [](const Tensor&, const Tensor& y, const Tensor& out, const Tensor& g) -> Tensor {
        return -g.cwiseProduct(out).cwiseQuotient(y);
      });
}

Var cmin(const Var& a, const Var& b) {
  return binary(
      a, b, "cmin",
      [](const Tensor& x, const Tensor& y) -> Tensor { return x.cwiseMin(y); },
      [](const Tensor& x, const Tensor& y, const Tensor&, const Tensor& g) -> Tensor {
        return (x.array() <= y.array()).select(g, 0.0);
      },
      [](const Tensor& x, const Tensor& y, const Tensor&, const Tensor& g) -> Tensor {
        return (x.array() <= y.array()).select(Tensor::Zero(g.rows(), g.cols()), g);
      });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ContractError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()) + ")");
  }
  Tensor out = a.value() * b.value();
  return make_node(std::move(out), "matmul", {a.ptr(), b.ptr()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad * pb.value.transpose());
    if (pb.requires_grad) accumulate(pb, pa.value.transpose() * self.grad);
  });
}

Var scale(const Var& x, double s) {
  return unary(
      x, "scale", [s](const Tensor& v) -> Tensor { return v * s; },
      [s](const Tensor&, const Tensor&, const Tensor& g) -> Tensor { return g * s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(
      x, "add_scalar", [s](const Tensor& v) -> Tensor { return v.array() + s; },
      [](const Tensor&, const Tensor&, const Tensor& g) -> Tensor { return g; });
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var tanh(const Var& x) {
  return unary(
      x, "tanh", [](const Tensor& v) -> Tensor { return v.array().tanh(); },
      [](const Tensor&, const Tensor& y, const Tensor& g) -> Tensor {
        return g.array() * (1.0 - y.array().square());
      });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid",
      [](const Tensor& v) -> Tensor { return 1.0 / (1.0 + (-v.array()).exp()); },
      [](const Tensor&, const Tensor& y, const Tensor& g) -> Tensor {
        return g.array() * y.array() * (1.0 - y.array());
      });
}

Var relu(const Var& x) {
  return unary(
      x, "relu", [](const Tensor& v) -> Tensor { return v.cwiseMax(0.0); },
      [](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return (v.array() > 0.0).select(g, 0.0);
      });
}

Var exp(const Var& x) {
  return unary(
      x, "exp", [](const Tensor& v) -> Tensor { return v.array().exp(); },
      [](const Tensor&, const Tensor& y, const Tensor& g) -> Tensor {
        return g.cwiseProduct(y);
      });
}

Var log(const Var& x) {
  return unary(
      x, "log", [](const Tensor& v) -> Tensor { return v.array().log(); },
      [](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return g.cwiseQuotient(v);
      });
}

Var softplus(const Var& x) {
  // log(1 + e^v) = max(v, 0) + log1p(e^{-|v|})
  return unary(
      x, "softplus",
      [](const Tensor& v) -> Tensor {
        return v.array().max(0.0) + (-v.array().abs()).exp().log1p();
      },
      [](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return g.array() / (1.0 + (-v.array()).exp());
      });
}

Var square(const Var& x) {
  return unary(
      x, "square", [](const Tensor& v) -> Tensor { return v.array().square(); },
      [](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return 2.0 * g.array() * v.array();
      });
}

Var reciprocal(const Var& x) {
  return unary(
      x, "reciprocal", [](const Tensor& v) -> Tensor { return v.array().inverse(); },
      [](const Tensor&, const Tensor& y, const Tensor& g) -> Tensor {
        return -g.array() * y.array().square();
      });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, "clamp", [lo, hi](const Tensor& v) -> Tensor { return v.cwiseMax(lo).cwiseMin(hi); },
      [lo, hi](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return (v.array() > lo && v.array() < hi).select(g, 0.0);
      });
}

Var sum(const Var& x) {
  return unary(
      x, "sum", [](const Tensor& v) -> Tensor { return Tensor::Constant(1, 1, v.sum()); },
      [](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return Tensor::Constant(v.rows(), v.cols(), g(0, 0));
      });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return unary(
      x, "mean", [](const Tensor& v) -> Tensor { return Tensor::Constant(1, 1, v.mean()); },
      [n](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return Tensor::Constant(v.rows(), v.cols(), g(0, 0) / n);
      });
}

Var rowwise_sum(const Var& x) {
  return unary(
      x, "rowwise_sum", [](const Tensor& v) -> Tensor { return v.rowwise().sum(); },
      [](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return g.replicate(1, v.cols());
      });
}

Var colwise_sum(const Var& x) {
  return unary(
      x, "colwise_sum", [](const Tensor& v) -> Tensor { return v.colwise().sum(); },
      [](const Tensor& v, const Tensor&, const Tensor& g) -> Tensor {
        return g.replicate(v.rows(), 1);
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ContractError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    parents.push_back(p.ptr());
  }
  return make_node(std::move(out), "concat_cols", std::move(parents), [](Node& self) {
    Eigen::Index off = 0;
    for (auto& p : self.parents) {
      const Eigen::Index c = p->value.cols();
      if (p->requires_grad) accumulate(*p, self.grad.middleCols(off, c));
      off += c;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ContractError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
    parents.push_back(p.ptr());
  }
  return make_node(std::move(out), "concat_rows", std::move(parents), [](Node& self) {
    Eigen::Index off = 0;
    for (auto& p : self.parents) {
      const Eigen::Index r = p->value.rows();
      if (p->requires_grad) accumulate(*p, self.grad.middleRows(off, r));
      off += r;
    }
  });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw ContractError("slice_cols: range out of bounds");
  }
  Tensor out = x.value().middleCols(start, count);
  return make_node(std::move(out), "slice_cols", {x.ptr()}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    Tensor g = Tensor::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    accumulate(p, g);
  });
}

Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw ContractError("slice_rows: range out of bounds");
  }
  Tensor out = x.value().middleRows(start, count);
  return make_node(std::move(out), "slice_rows", {x.ptr()}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    Tensor g = Tensor::Zero(p.value.rows(), p.value.cols());
    g.middleRows(start, count) = self.grad;
    accumulate(p, g);
  });
}

Var repeat_rows(const Var& x, Eigen::Index times) {
  if (times < 1) throw ContractError("repeat_rows: times must be positive");
  const Eigen::Index rows = x.rows();
  Tensor out(rows * times, x.cols());
  for (Eigen::Index i = 0; i < rows; ++i) {
    out.middleRows(i * times, times) = x.value().row(i).replicate(times, 1);
  }
  return make_node(std::move(out), "repeat_rows", {x.ptr()}, [times](Node& self) {
    Node& p = *self.parents[0];
    Tensor g(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
      g.row(i) = self.grad.middleRows(i * times, times).colwise().sum();
    }
    accumulate(p, g);
  });
}

}  // namespace metamem::nn
