// Copyright 2026 The metamem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace metamem::nn {

// Dense 2-D array of doubles. Vectors are 1 x n rows; batches stack rows.
using Tensor = Eigen::MatrixXd;

class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const std::string& what)
      : std::runtime_error("numeric failure in '" + op + "': " + what),
        op_(std::move(op)) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Node {
  Tensor value;
  Tensor grad;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
};

// Handle to a node in the differentiation graph. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  // Optimizers write parameters in place through this.
  Tensor& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }
  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
Var detach(const Var& x);

// While alive, ops on this thread build no backward closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Gradient of a scalar loss with respect to every reachable leaf that
// requires a gradient.
using Gradients = std::unordered_map<const Node*, Tensor>;

// Reverse sweep from a 1 x 1 loss. Throws ContractError for a non-scalar
// loss and NumericError (tagged with the op) on a non-finite gradient.
Gradients backward(const Var& loss);

// Elementwise binary ops broadcast a 1 x m, n x 1 or 1 x 1 operand.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);
Var cdiv(const Var& a, const Var& b);
Var cmin(const Var& a, const Var& b);

Var matmul(const Var& a, const Var& b);

Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
Var neg(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var softplus(const Var& x);
Var square(const Var& x);
Var reciprocal(const Var& x);
// Gradient flows only where lo < x < hi.
Var clamp(const Var& x, double lo, double hi);

Var sum(const Var& x);
Var mean(const Var& x);
Var rowwise_sum(const Var& x);  // n x m -> n x 1
Var colwise_sum(const Var& x);  // n x m -> 1 x m

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index count);
// Each row repeated `times` times consecutively.
Var repeat_rows(const Var& x, Eigen::Index times);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator+(double s, const Var& a) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }
inline Var operator-(double s, const Var& a) { return add_scalar(neg(a), s); }

}  // namespace metamem::nn
