#include "usda/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace usda::ad {

namespace {

thread_local bool t_grad_enabled = true;

enum class Broadcast { kNone, kRow, kScalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw std::invalid_argument("ad: incompatible shapes " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " and " + std::to_string(b.rows()) +
                              "x" + std::to_string(b.cols()));
}

Matrix expand(const Matrix& b, Broadcast kind, Eigen::Index rows, Eigen::Index cols) {
  switch (kind) {
    case Broadcast::kNone:
      return b;
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kNone:
      return g;
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

// Orders operands so the broadcast one (if any) is second; returns whether swapped.
bool order_for_broadcast(const Var& a, const Var& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) return false;
  return av.size() < bv.size();
}

inline void push(Node& self, std::size_t i, const Matrix& g) {
  auto& p = self.parents[i];
  if (p->requires_grad) p->accumulate(g);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var make_node(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!t_grad_enabled) return Var(std::move(node));
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return Var(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (auto& p : parents) node->parents.push_back(p.node());
  node->backward = std::move(backward);
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("ad::backward: loss must be a 1x1 matrix");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->parents.empty() && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->grad.size() == 0 || !node->backward) continue;
    node->backward(*node);
  }
}

Var add(const Var& a0, const Var& b0) {
  const bool swapped = order_for_broadcast(a0, b0);
  const Var& a = swapped ? b0 : a0;
  const Var& b = swapped ? a0 : b0;
  const auto kind = broadcast_kind(a.value(), b.value());
  Matrix v = a.value() + expand(b.value(), kind, a.rows(), a.cols());
  return make_node(std::move(v), {a, b}, [kind](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, reduce(self.grad, kind));
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a0, const Var& b0) {
  const bool swapped = order_for_broadcast(a0, b0);
  const Var& a = swapped ? b0 : a0;
  const Var& b = swapped ? a0 : b0;
  const auto kind = broadcast_kind(a.value(), b.value());
  Matrix v = a.value().cwiseProduct(expand(b.value(), kind, a.rows(), a.cols()));
  return make_node(std::move(v), {a, b}, [kind](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      self.parents[0]->accumulate(self.grad.cwiseProduct(expand(bv, kind, av.rows(), av.cols())));
    }
    push(self, 1, reduce(self.grad.cwiseProduct(av), kind));
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }

Var scale(const Var& a, double s) {
  return make_node(a.value() * s, {a}, [s](Node& self) { push(self, 0, self.grad * s); });
}

Var affine(const Var& a, double alpha, double beta) {
  Matrix v = (a.value() * alpha).array() + beta;
  return make_node(std::move(v), {a}, [alpha](Node& self) { push(self, 0, self.grad * alpha); });
}

// Parent values are read back at backward time; they are not mutated between
// the forward pass and backward().
Var matmul(const Var& a, const Var& b) {
  return make_node(a.value() * b.value(), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad * bv.transpose());
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(av.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  return make_node(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad * bv);
    if (self.parents[1]->requires_grad) {
      self.parents[1]->accumulate(self.grad.transpose() * av);
    }
  });
}

Var transpose(const Var& a) {
  return make_node(a.value().transpose(), {a},
                   [](Node& self) { push(self, 0, self.grad.transpose()); });
}

Var relu(const Var& a) {
  return make_node(a.value().cwiseMax(0.0), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    push(self, 0, (x.array() > 0.0).select(self.grad, 0.0));
  });
}

Var tanh(const Var& a) {
  return make_node(a.value().array().tanh().matrix(), {a}, [](Node& self) {
    push(self, 0, (self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

Var sigmoid(const Var& a) {
  Matrix v = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_node(std::move(v), {a}, [](Node& self) {
    const auto& y = self.value.array();
    push(self, 0, (self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Var softmax_rows(const Var& a) {
  Matrix y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return make_node(std::move(y), {a}, [](Node& self) {
    const Matrix& y = self.value;
    const Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.array() * (self.grad.colwise() - dots).array();
    push(self, 0, g);
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix y = a.value();
  Matrix probs(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    const double lse = m + std::log((y.row(i).array() - m).exp().sum());
    y.row(i).array() -= lse;
    probs.row(i) = y.row(i).array().exp().matrix();
  }
  return make_node(std::move(y), {a}, [probs = std::move(probs)](Node& self) {
    const Eigen::VectorXd totals = self.grad.rowwise().sum();
    Matrix g = self.grad - Matrix(probs.array().colwise() * totals.array());
    push(self, 0, g);
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.cols();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
             bias.value().row(0).array();
  Matrix gv = gain.value();
  return make_node(std::move(y), {x, gain, bias},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std),
                    gv = std::move(gv)](Node& self) {
                     const Matrix& g = self.grad;
                     if (self.parents[0]->requires_grad) {
                       Matrix gx_hat = g.array().rowwise() * gv.row(0).array();
                       const Eigen::VectorXd m1 = gx_hat.rowwise().mean();
                       const Eigen::VectorXd m2 = gx_hat.cwiseProduct(xhat).rowwise().mean();
                       Matrix gx = gx_hat;
                       gx.colwise() -= m1;
                       gx -= Matrix(xhat.array().colwise() * m2.array());
                       gx = gx.array().colwise() * inv_std.array();
                       self.parents[0]->accumulate(gx);
                     }
                     push(self, 1, g.cwiseProduct(xhat).colwise().sum());
                     push(self, 2, g.colwise().sum());
                   });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("ad::slice_rows: range outside matrix");
  }
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return make_node(a.value().middleRows(start, count), {a},
                   [start, count, rows, cols](Node& self) {
                     Matrix g = Matrix::Zero(rows, cols);
                     g.middleRows(start, count) = self.grad;
                     push(self, 0, g);
                   });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("ad::slice_cols: range outside matrix");
  }
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return make_node(a.value().middleCols(start, count), {a},
                   [start, count, rows, cols](Node& self) {
                     Matrix g = Matrix::Zero(rows, cols);
                     g.middleCols(start, count) = self.grad;
                     push(self, 0, g);
                   });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ad::vstack: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("ad::vstack: column mismatch");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    offsets.push_back(r);
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make_node(std::move(v), {parts.begin(), parts.end()},
                   [offsets = std::move(offsets)](Node& self) {
                     for (std::size_t i = 0; i < self.parents.size(); ++i) {
                       auto& p = self.parents[i];
                       if (!p->requires_grad) continue;
                       p->accumulate(self.grad.middleRows(offsets[i], p->value.rows()));
                     }
                   });
}

Var hstack(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ad::hstack: no inputs");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("ad::hstack: row mismatch");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    offsets.push_back(c);
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return make_node(std::move(v), {parts.begin(), parts.end()},
                   [offsets = std::move(offsets)](Node& self) {
                     for (std::size_t i = 0; i < self.parents.size(); ++i) {
                       auto& p = self.parents[i];
                       if (!p->requires_grad) continue;
                       p->accumulate(self.grad.middleCols(offsets[i], p->value.cols()));
                     }
                   });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  const Matrix& t = table.value();
  Matrix v(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) throw std::out_of_range("ad::gather_rows: bad id");
    v.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  const Eigen::Index rows = t.rows();
  return make_node(std::move(v), {table}, [idx = std::move(idx), rows](Node& self) {
    Matrix g = Matrix::Zero(rows, self.grad.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
    push(self, 0, g);
  });
}

Var sum(const Var& a) {
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return make_node(Matrix::Constant(1, 1, a.value().sum()), {a}, [rows, cols](Node& self) {
    push(self, 0, Matrix::Constant(rows, cols, self.grad(0, 0)));
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var mean_rows(const Var& a) {
  const Eigen::Index rows = a.rows();
  return make_node(a.value().colwise().mean(), {a}, [rows](Node& self) {
    push(self, 0, self.grad.replicate(rows, 1) / static_cast<double>(rows));
  });
}

Var squared_norm(const Var& a) {
  return make_node(Matrix::Constant(1, 1, a.value().squaredNorm()), {a}, [](Node& self) {
    push(self, 0, self.parents[0]->value * (2.0 * self.grad(0, 0)));
  });
}

Var norm(const Var& a) {
  const double n = a.value().norm();
  return make_node(Matrix::Constant(1, 1, n), {a}, [n](Node& self) {
    // Subgradient 0 at the origin.
    if (n == 0.0) return;
    push(self, 0, self.parents[0]->value * (self.grad(0, 0) / n));
  });
}

Var element(const Var& a, Eigen::Index i, Eigen::Index j) {
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return make_node(Matrix::Constant(1, 1, a.value()(i, j)), {a},
                   [i, j, rows, cols](Node& self) {
                     Matrix g = Matrix::Zero(rows, cols);
                     g(i, j) = self.grad(0, 0);
                     push(self, 0, g);
                   });
}

Var dropout(const Var& a, double p, bool training, std::mt19937_64* rng) {
  if (!training || p <= 0.0 || rng == nullptr) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(*rng) ? s : 0.0;
  Matrix v = a.value().cwiseProduct(mask);
  return make_node(std::move(v), {a}, [mask = std::move(mask)](Node& self) {
    push(self, 0, self.grad.cwiseProduct(mask));
  });
}

Var detach(const Var& a) { return constant(a.value()); }

}  // namespace usda::ad
