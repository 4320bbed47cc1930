#include "usda/crf.hpp"

#include "usda/error.hpp"

#include <cmath>
#include <limits>

namespace usda::crf {

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void check_shapes(const Matrix& A, const Matrix& G) {
  const auto k = A.cols();
  if (A.rows() < 1 || k < 1) throw Error("crf: score matrix must be non-empty");
  if (G.rows() != k + 2 || G.cols() != k + 2) throw Error("crf: transition matrix must be (K+2)x(K+2)");
}

void check_labels(const Matrix& A, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != A.rows()) {
    throw Error("crf: label sequence length differs from number of turns");
  }
  for (int y : labels) {
    if (y < 0 || y >= A.cols()) throw Error("crf: label out of range: " + std::to_string(y));
  }
}

// alpha(t, y): log-sum of all prefixes ending in y at t, including A[t, y].
Matrix forward_table(const Matrix& A, const Matrix& G) {
  const auto turns = A.rows();
  const auto k = A.cols();
  const int s = start_index(static_cast<int>(k));
  Matrix alpha(turns, k);
  for (Eigen::Index y = 0; y < k; ++y) alpha(0, y) = G(s, y) + A(0, y);
  Eigen::VectorXd tmp(k);
  for (Eigen::Index t = 1; t < turns; ++t) {
    for (Eigen::Index y = 0; y < k; ++y) {
      for (Eigen::Index p = 0; p < k; ++p) tmp(p) = alpha(t - 1, p) + G(p, y);
      alpha(t, y) = log_sum_exp(tmp) + A(t, y);
    }
  }
  return alpha;
}

// beta(t, y): log-sum of all suffixes after t given y at t, including the end transition.
Matrix backward_table(const Matrix& A, const Matrix& G) {
  const auto turns = A.rows();
  const auto k = A.cols();
  const int e = end_index(static_cast<int>(k));
  Matrix beta(turns, k);
  for (Eigen::Index y = 0; y < k; ++y) beta(turns - 1, y) = G(y, e);
  Eigen::VectorXd tmp(k);
  for (Eigen::Index t = turns - 2; t >= 0; --t) {
    for (Eigen::Index y = 0; y < k; ++y) {
      for (Eigen::Index n = 0; n < k; ++n) tmp(n) = G(y, n) + A(t + 1, n) + beta(t + 1, n);
      beta(t, y) = log_sum_exp(tmp);
    }
  }
  return beta;
}

}  // namespace

double sequence_score(const Matrix& A, const Matrix& G, std::span<const int> labels) {
  check_shapes(A, G);
  check_labels(A, labels);
  const int k = static_cast<int>(A.cols());
  double score = G(start_index(k), labels[0]);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    score += A(static_cast<Eigen::Index>(t), labels[t]);
    if (t + 1 < labels.size()) score += G(labels[t], labels[t + 1]);
  }
  return score + G(labels.back(), end_index(k));
}

double log_partition(const Matrix& A, const Matrix& G) {
  check_shapes(A, G);
  const Matrix alpha = forward_table(A, G);
  const int e = end_index(static_cast<int>(A.cols()));
  Eigen::VectorXd last = alpha.row(A.rows() - 1).transpose() + G.col(e).head(A.cols());
  return log_sum_exp(last);
}

double log_partition_backward(const Matrix& A, const Matrix& G) {
  check_shapes(A, G);
  const Matrix beta = backward_table(A, G);
  const int s = start_index(static_cast<int>(A.cols()));
  Eigen::VectorXd first = G.row(s).head(A.cols()).transpose() + A.row(0).transpose() +
                          beta.row(0).transpose();
  return log_sum_exp(first);
}

double log_likelihood(const Matrix& A, const Matrix& G, std::span<const int> labels) {
  const double ll = sequence_score(A, G, labels) - log_partition(A, G);
  if (!std::isfinite(ll)) throw Error("crf: non-finite log-likelihood");
  return ll;
}

std::vector<int> viterbi_decode(const Matrix& A, const Matrix& G) {
  check_shapes(A, G);
  const auto turns = A.rows();
  const auto k = A.cols();
  if (turns <= 0 || k <= 0) return {};
  const int s = start_index(static_cast<int>(k));
  const int e = end_index(static_cast<int>(k));
  // best(t, y): best suffix score from turn t in label y, including A[t, y] and the end transition.
  Matrix best(turns, k);
  for (Eigen::Index y = 0; y < k; ++y) best(turns - 1, y) = A(turns - 1, y) + G(y, e);
  for (Eigen::Index t = turns - 2; t >= 0; --t) {
    for (Eigen::Index y = 0; y < k; ++y) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index n = 0; n < k; ++n) m = std::max(m, G(y, n) + best(t + 1, n));
      best(t, y) = A(t, y) + m;
    }
  }
  // Forward pass picks the smallest optimal label at each position in turn.
  std::vector<int> path(static_cast<std::size_t>(turns));
  int prev = s;
  for (Eigen::Index t = 0; t < turns; ++t) {
    int arg = 0;
    double m = G(prev, 0) + best(t, 0);
    for (Eigen::Index y = 1; y < k; ++y) {
      const double v = G(prev, y) + best(t, y);
      if (v > m) {
        m = v;
        arg = static_cast<int>(y);
      }
    }
    path[static_cast<std::size_t>(t)] = arg;
    prev = arg;
  }
  return path;
}

std::vector<int> argmax_decode(const Matrix& A) {
  std::vector<int> out(static_cast<std::size_t>(A.rows()));
  for (Eigen::Index t = 0; t < A.rows(); ++t) {
    Eigen::Index arg = 0;
    A.row(t).maxCoeff(&arg);  // first maximum
    out[static_cast<std::size_t>(t)] = static_cast<int>(arg);
  }
  return out;
}

Marginals marginals(const Matrix& A, const Matrix& G) {
  check_shapes(A, G);
  const auto turns = A.rows();
  const auto k = A.cols();
  const int s = start_index(static_cast<int>(k));
  const int e = end_index(static_cast<int>(k));
  const Matrix alpha = forward_table(A, G);
  const Matrix beta = backward_table(A, G);
  Marginals m;
  Eigen::VectorXd last = alpha.row(turns - 1).transpose() + G.col(e).head(k);
  m.log_z = log_sum_exp(last);
  m.unary = ((alpha + beta).array() - m.log_z).exp().matrix();
  m.transitions = Matrix::Zero(k + 2, k + 2);
  for (Eigen::Index y = 0; y < k; ++y) {
    m.transitions(s, y) = m.unary(0, y);
    m.transitions(y, e) = m.unary(turns - 1, y);
  }
  for (Eigen::Index t = 0; t + 1 < turns; ++t) {
    for (Eigen::Index y = 0; y < k; ++y) {
      for (Eigen::Index n = 0; n < k; ++n) {
        m.transitions(y, n) +=
            std::exp(alpha(t, y) + G(y, n) + A(t + 1, n) + beta(t + 1, n) - m.log_z);
      }
    }
  }
  return m;
}

ad::Var negative_log_likelihood(const ad::Var& A, const ad::Var& G, std::span<const int> labels) {
  const Matrix& a = A.value();
  const Matrix& g = G.value();
  const double nll = -log_likelihood(a, g, labels);
  std::vector<int> y(labels.begin(), labels.end());
  return ad::make_node(Matrix::Constant(1, 1, nll), {A, G}, [y = std::move(y)](ad::Node& self) {
    const Matrix& a = self.parents[0]->value;
    const Matrix& g = self.parents[1]->value;
    const auto k = a.cols();
    const int s = start_index(static_cast<int>(k));
    const int e = end_index(static_cast<int>(k));
    Marginals m = marginals(a, g);
    Matrix da = m.unary;
    Matrix dg = m.transitions;
    dg(s, y.front()) -= 1.0;
    dg(y.back(), e) -= 1.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      da(static_cast<Eigen::Index>(t), y[t]) -= 1.0;
      if (t + 1 < y.size()) dg(y[t], y[t + 1]) -= 1.0;
    }
    const double scale = self.grad(0, 0);
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(da * scale);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(dg * scale);
  });
}

Matrix initial_transitions(int num_labels, nn::Rng& rng) {
  const int n = num_labels + 2;
  Matrix g = nn::uniform(n, n, 0.1, rng);
  g.col(start_index(num_labels)).setConstant(kMaskedTransition);
  g.row(end_index(num_labels)).setConstant(kMaskedTransition);
  return g;
}

DarCrfHead::DarCrfHead(nn::ParameterStore& store, int input_dim, int num_labels, nn::Rng& rng)
    : num_labels_(num_labels),
      mlp_(store, "dar.mlp", input_dim, input_dim, num_labels, rng) {
  if (num_labels < 1) throw Error("DAR head needs at least one label");
  transitions_ = store.add("dar.transitions", initial_transitions(num_labels, rng));
}

ad::Var DarCrfHead::scores(const ad::Var& c) const { return mlp_(c); }

ad::Var DarCrfHead::loss(const ad::Var& scores, std::span<const int> labels) const {
  return negative_log_likelihood(scores, transitions_, labels);
}

std::vector<int> DarCrfHead::decode(const Matrix& scores, bool use_viterbi) const {
  return use_viterbi ? viterbi_decode(scores, transitions_.value()) : argmax_decode(scores);
}

}  // namespace usda::crf
