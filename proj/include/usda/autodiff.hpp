// Reverse-mode automatic differentiation over dense double matrices.
//
// A forward pass builds a DAG of Node objects; backward() walks it in reverse
// topological order. Leaves created with parameter() persist across passes and
// accumulate gradients until zero_grad() is called on their store.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace usda::ad {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph construction on the current thread while alive.
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

Var constant(Matrix value);
Var scalar_constant(double value);
Var parameter(Matrix value);

/// Creates an interior node. `backward` receives the node itself and must
/// accumulate into every parent that requires a gradient.
Var make_node(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
void backward(const Var& loss);

// Element-wise binary ops accept equal shapes, a 1xN row broadcast over rows,
// or a 1x1 scalar broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var affine(const Var& a, double alpha, double beta);  // alpha * a + beta
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);

Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var vstack(std::span<const Var> parts);
Var hstack(std::span<const Var> parts);
Var gather_rows(const Var& table, std::span<const int> ids);

Var sum(const Var& a);
Var mean(const Var& a);
Var mean_rows(const Var& a);  // 1xN column means
Var squared_norm(const Var& a);
Var norm(const Var& a);
Var element(const Var& a, Eigen::Index i, Eigen::Index j);

Var dropout(const Var& a, double p, bool training, std::mt19937_64* rng);
Var detach(const Var& a);

}  // namespace usda::ad
